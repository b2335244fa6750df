//! Point clouds, flats and the best-fit flat primitive.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{Real, ORTHONORMAL_TOL};

/// Label used in ground truth to mark an outlier.
pub const OUTLIER: i64 = -1;

/// `N` points in `R^D`, stored row-major, with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    data: Vec<T>,
    len: usize,
    dim: usize,
    truth: Option<Vec<i64>>,
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud from a row-major buffer of `len * dim` coordinates.
    pub fn new(data: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        let len = data.len() / dim;
        if let Some(pos) = data.iter().position(|v| !v.finite()) {
            return Err(Error::NonFinite(pos / dim));
        }
        Ok(Self {
            data,
            len,
            dim,
            truth: None,
        })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptyInput)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    /// Attaches ground-truth labels (`-1` marks an outlier).
    pub fn with_truth(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.len {
            return Err(Error::DimensionMismatch {
                expected: self.len,
                found: labels.len(),
            });
        }
        if labels.iter().any(|&l| l < OUTLIER) {
            return Err(Error::Format("truth labels must be >= -1".into()));
        }
        self.truth = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[T]> + Clone + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn truth(&self) -> Option<&[i64]> {
        self.truth.as_deref()
    }

    /// Number of clusters in the ground truth (largest label + 1).
    pub fn truth_clusters(&self) -> Option<usize> {
        self.truth
            .as_ref()
            .map(|t| t.iter().filter(|&&l| l >= 0).map(|&l| l as usize + 1).max().unwrap_or(0))
    }

    /// Copies the selected points (and their truth labels) into a new cloud.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        let out = Self::new(data, self.dim)?;
        match &self.truth {
            Some(t) => out.with_truth(indices.iter().map(|&i| t[i]).collect()),
            None => Ok(out),
        }
    }

    /// Applies `f` to every point, keeping labels.
    pub fn map_points<F: FnMut(&[T]) -> Vec<T>>(&self, mut f: F) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        let mut dim = None;
        for p in self.points() {
            let q = f(p);
            dim.get_or_insert(q.len());
            data.extend(q);
        }
        let out = Self::new(data, dim.unwrap_or(0))?;
        match &self.truth {
            Some(t) => out.with_truth(t.clone()),
            None => Ok(out),
        }
    }

    /// Diagonal of the axis-aligned bounding box.
    pub fn diameter(&self) -> T {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for p in self.points() {
            for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(p) {
                *l = l.min(v);
                *h = h.max(v);
            }
        }
        lo.iter().zip(&hi).fold(T::ZERO, |acc, (&l, &h)| acc + (h - l) * (h - l)).sqrt()
    }

    /// The `N x D` data matrix.
    pub fn to_matrix(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(self.len, self.dim, &self.data)
    }
}

/// A `d`-dimensional affine (or linear) subspace of `R^D`, stored as an
/// orthonormal basis plus an offset point.
#[derive(Debug, Clone, PartialEq)]
pub struct Flat<T> {
    basis: Vec<T>,
    offset: Vec<T>,
    dim: usize,
    ambient: usize,
    affine: bool,
}

impl<T: Real> Flat<T> {
    /// Validates orthonormality of `basis` (rows) before building the flat.
    /// A linear flat ignores `offset` and passes through the origin.
    pub fn new(basis: Vec<Vec<T>>, offset: Vec<T>, affine: bool) -> Result<Self> {
        let ambient = offset.len();
        if ambient == 0 {
            return Err(Error::EmptyInput);
        }
        let dim = basis.len();
        if dim >= ambient {
            return Err(Error::InvalidDimension { d: dim, ambient });
        }
        let tol = T::cast(ORTHONORMAL_TOL.max(T::EPSILON.to_f64() * 1e3));
        for (i, u) in basis.iter().enumerate() {
            if u.len() != ambient {
                return Err(Error::DimensionMismatch {
                    expected: ambient,
                    found: u.len(),
                });
            }
            for (j, v) in basis.iter().enumerate().skip(i) {
                let expect = if i == j { T::ONE } else { T::ZERO };
                if (dot(u, v) - expect).abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "basis vectors {i} and {j} are not orthonormal"
                    )));
                }
            }
        }
        Ok(Self::from_parts(basis.concat(), offset, dim, affine))
    }

    pub(crate) fn from_parts(basis: Vec<T>, mut offset: Vec<T>, dim: usize, affine: bool) -> Self {
        let ambient = offset.len();
        if !affine {
            offset.iter_mut().for_each(|v| *v = T::ZERO);
        }
        debug_assert_eq!(basis.len(), dim * ambient);
        Self {
            basis,
            offset,
            dim,
            ambient,
            affine,
        }
    }

    /// The flat spanned by the given coordinate axes, shifted by `offset`.
    pub fn coordinate(axes: &[usize], offset: Vec<T>) -> Result<Self> {
        let ambient = offset.len();
        let basis = axes
            .iter()
            .map(|&a| {
                let mut e = vec![T::ZERO; ambient];
                e[a] = T::ONE;
                e
            })
            .collect();
        let affine = offset.iter().any(|v| *v != T::ZERO);
        Self::new(basis, offset, affine)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn is_affine(&self) -> bool {
        self.affine
    }

    pub fn offset(&self) -> &[T] {
        &self.offset
    }

    pub fn basis_vector(&self, j: usize) -> &[T] {
        &self.basis[j * self.ambient..(j + 1) * self.ambient]
    }

    pub fn basis_vectors(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.basis.chunks_exact(self.ambient.max(1)).take(self.dim)
    }

    /// `D x d` matrix whose columns are the basis vectors.
    pub fn basis_matrix(&self) -> DMatrix<T> {
        DMatrix::from_column_slice(self.ambient, self.dim, &self.basis)
    }

    /// Orthogonal projection of `x` onto the flat. Panics on dimension mismatch.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        let v: Vec<T> = x.iter().zip(&self.offset).map(|(&a, &o)| a - o).collect();
        let mut p = self.offset.clone();
        for u in self.basis_vectors() {
            let c = dot(&v, u);
            p.iter_mut().zip(u).for_each(|(pi, &ui)| *pi += c * ui);
        }
        p
    }

    /// Squared distance from `x` to the flat. Panics on dimension mismatch.
    #[inline]
    pub fn distance_sq(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.ambient, "point dimension does not match flat");
        const STACK: usize = 16;
        if self.ambient <= STACK {
            let mut buf = [T::ZERO; STACK];
            self.residual_sq_into(x, &mut buf[..self.ambient])
        } else {
            let mut buf = vec![T::ZERO; self.ambient];
            self.residual_sq_into(x, &mut buf)
        }
    }

    #[inline]
    fn residual_sq_into(&self, x: &[T], r: &mut [T]) -> T {
        r.iter_mut()
            .zip(x.iter().zip(&self.offset))
            .for_each(|(ri, (&a, &o))| *ri = a - o);
        for u in self.basis_vectors() {
            let c = dot(r, u);
            r.iter_mut().zip(u).for_each(|(ri, &ui)| *ri -= c * ui);
        }
        r.iter().fold(T::ZERO, |acc, &v| acc + v * v)
    }

    #[inline]
    pub fn distance(&self, x: &[T]) -> T {
        self.distance_sq(x).sqrt()
    }

    /// Applies `x -> rotation * x + shift` to the flat.
    pub fn transformed(&self, rotation: &DMatrix<T>, shift: &[T]) -> Self {
        let apply = |v: &[T]| -> Vec<T> {
            (0..self.ambient)
                .map(|i| (0..self.ambient).fold(T::ZERO, |acc, j| acc + rotation[(i, j)] * v[j]))
                .collect()
        };
        let basis: Vec<T> = self.basis_vectors().flat_map(apply).collect();
        let mut offset = apply(&self.offset);
        offset.iter_mut().zip(shift).for_each(|(o, &s)| *o += s);
        let affine = self.affine || shift.iter().any(|&s| s != T::ZERO);
        Self::from_parts(basis, offset, self.dim, affine)
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::ZERO, |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn dist_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::ZERO, |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// A fitted flat together with its approximation error.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFit<T> {
    pub flat: Flat<T>,
    /// Sum of squared distances of the fitted points to `flat`.
    pub residual: T,
    pub count: usize,
}

impl<T: Real> FlatFit<T> {
    /// Root-mean-square distance of the fitted points to the flat.
    pub fn rms(&self) -> T {
        if self.count == 0 {
            T::ZERO
        } else {
            (self.residual / T::of_usize(self.count)).sqrt()
        }
    }
}

/// Best-fit `d`-flat (least squares) of the whole cloud.
pub fn fit_flat<T: Real>(points: &PointCloud<T>, d: usize, affine: bool) -> Result<FlatFit<T>> {
    fit_rows(points.points(), points.dim(), d, affine)
}

/// Best-fit `d`-flat of the selected points of `cloud`.
pub fn fit_flat_indices<T: Real>(
    cloud: &PointCloud<T>,
    indices: &[usize],
    d: usize,
    affine: bool,
) -> Result<FlatFit<T>> {
    fit_rows(indices.iter().map(|&i| cloud.point(i)), cloud.dim(), d, affine)
}

/// Least-squares `d`-flat through the given rows: the span of the top `d`
/// principal directions, anchored at the centroid (affine) or the origin.
pub fn fit_rows<'a, T: Real, I>(rows: I, ambient: usize, d: usize, affine: bool) -> Result<FlatFit<T>>
where
    I: IntoIterator<Item = &'a [T]>,
    I::IntoIter: Clone,
{
    if d >= ambient {
        return Err(Error::InvalidDimension { d, ambient });
    }
    let rows = rows.into_iter();
    let mut count = 0usize;
    let mut center = vec![T::ZERO; ambient];
    for r in rows.clone() {
        if r.len() != ambient {
            return Err(Error::DimensionMismatch {
                expected: ambient,
                found: r.len(),
            });
        }
        if affine {
            center.iter_mut().zip(r).for_each(|(c, &v)| *c += v);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    if affine {
        let n = T::of_usize(count);
        center.iter_mut().for_each(|c| *c /= n);
    }

    let mut scatter = DMatrix::<T>::zeros(ambient, ambient);
    let mut v = vec![T::ZERO; ambient];
    for r in rows.clone() {
        v.iter_mut().zip(r.iter().zip(&center)).for_each(|(vi, (&a, &c))| *vi = a - c);
        for i in 0..ambient {
            for j in 0..=i {
                scatter[(i, j)] += v[i] * v[j];
            }
        }
    }
    let basis = top_eigenvectors(scatter, d);
    let flat = Flat::from_parts(basis, center, d, affine);
    let residual = rows.fold(T::ZERO, |acc, r| acc + flat.distance_sq(r));
    Ok(FlatFit {
        flat,
        residual,
        count,
    })
}

/// Eigenvectors of the `d` largest eigenvalues of a symmetric matrix given by
/// its lower triangle, returned row-major (`d x n`).
pub(crate) fn top_eigenvectors<T: Real>(mut lower: DMatrix<T>, d: usize) -> Vec<T> {
    let n = lower.nrows();
    if d == 0 {
        return Vec::new();
    }
    for i in 0..n {
        for j in 0..i {
            lower[(j, i)] = lower[(i, j)];
        }
    }
    let eig = SymmetricEigen::new(lower);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = Vec::with_capacity(d * n);
    for &k in order.iter().take(d) {
        out.extend(eig.eigenvectors.column(k).iter().copied());
    }
    out
}

/// Euclidean distance from `x` to `flat`.
pub fn dist_to_flat<T: Real>(x: &[T], flat: &Flat<T>) -> Result<T> {
    if x.len() != flat.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: flat.ambient_dim(),
            found: x.len(),
        });
    }
    Ok(flat.distance(x))
}

/// Index of the closest flat and the distance to it; ties go to the lowest index.
pub fn nearest_flat<T: Real>(x: &[T], flats: &[Flat<T>]) -> Result<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, f) in flats.iter().enumerate() {
        let dist = dist_to_flat(x, f)?;
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some((i, dist));
        }
    }
    best.ok_or(Error::EmptyFlatList)
}

/// Principal angles (radians, ascending) between the linear parts of two flats.
pub fn principal_angles<T: Real>(a: &Flat<T>, b: &Flat<T>) -> Vec<T> {
    let m = a.basis_matrix().transpose() * b.basis_matrix();
    if m.is_empty() {
        return Vec::new();
    }
    let svd = m.svd(false, false);
    let mut angles: Vec<T> = svd
        .singular_values
        .iter()
        .map(|&s| s.min(T::ONE).max(-T::ONE).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    angles
}

/// Principal component projection fitted to a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// Unit principal directions, leading first.
    pub components: Vec<Vec<T>>,
}

impl<T: Real> Pca<T> {
    pub fn fit(cloud: &PointCloud<T>, target_dim: usize) -> Result<Self> {
        let dim = cloud.dim();
        if target_dim > dim || target_dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "target dimension {target_dim} must lie in 1..={dim}"
            )));
        }
        let n = T::of_usize(cloud.len());
        let mut mean = vec![T::ZERO; dim];
        for p in cloud.points() {
            mean.iter_mut().zip(p).for_each(|(m, &v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scatter = DMatrix::<T>::zeros(dim, dim);
        for p in cloud.points() {
            for i in 0..dim {
                let vi = p[i] - mean[i];
                for j in 0..=i {
                    scatter[(i, j)] += vi * (p[j] - mean[j]);
                }
            }
        }
        let flat = top_eigenvectors(scatter, target_dim);
        let components = flat.chunks_exact(dim).map(<[T]>::to_vec).collect();
        Ok(Self { mean, components })
    }

    pub fn transform(&self, x: &[T]) -> Vec<T> {
        let v: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        self.components.iter().map(|c| dot(&v, c)).collect()
    }

    pub fn reconstruct(&self, coords: &[T]) -> Vec<T> {
        let mut out = self.mean.clone();
        for (c, comp) in coords.iter().zip(&self.components) {
            out.iter_mut().zip(comp).for_each(|(o, &u)| *o += *c * u);
        }
        out
    }
}

/// PCA-reduces the cloud to `target_dim` coordinates and discards the
/// `drop_top` leading ones, leaving `target_dim - drop_top` dimensions.
pub fn reduce_and_whiten<T: Real>(
    cloud: &PointCloud<T>,
    target_dim: usize,
    drop_top: usize,
) -> Result<PointCloud<T>> {
    if target_dim > cloud.dim() {
        return Err(Error::InvalidParameter(format!(
            "target dimension {target_dim} exceeds ambient dimension {}",
            cloud.dim()
        )));
    }
    if drop_top >= target_dim {
        return Err(Error::InvalidParameter(format!(
            "cannot drop {drop_top} of {target_dim} components"
        )));
    }
    let pca = Pca::fit(cloud, target_dim)?;
    cloud.map_points(|p| pca.transform(p).split_off(drop_top))
}
