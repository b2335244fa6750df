//! Scale-invariant local approximation error (`beta2`) and automatic
//! neighborhood-size selection.
//!
//! For a query point `x0` the neighborhoods `N_k` of the `S + kT` nearest
//! points are examined in turn. The chosen neighborhood is `N_{k-1}` for the
//! first `k > 1` with `beta2(k-1) < min(beta2(k-2), beta2(k))`.
//!
//! Two completions of that rule are needed in practice:
//!
//! * a neighborhood whose error is below [`flat_tolerance`] is an exact fit,
//!   and its `beta2` is recorded as zero. Leaving a run of exact fits (with
//!   more than `d + 1` points) is treated as a local minimum: the last exact
//!   neighborhood is the largest one containing a single flat;
//! * when the scan reaches the last admissible size without a local minimum,
//!   the largest scanned neighborhood is returned.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dist_sq, fit_flat_indices, fit_rows, FlatFit, PointCloud};
use crate::scalar::{flat_tolerance, Real};

/// Parameters of the neighborhood-size scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleParams {
    /// Dimension `d` of the flats.
    pub dim: usize,
    /// Size `S` of the first neighborhood.
    pub start_size: usize,
    /// Increment `T` between consecutive neighborhoods.
    pub step_size: usize,
    /// Lets the first scale count as a local minimum (the "-MS" variants).
    pub allow_first_scale: bool,
    /// Largest neighborhood examined; `None` means all points.
    pub max_neighbors: Option<usize>,
}

impl ScaleParams {
    /// Defaults: `S = 2d` (at least `d + 1`), `T = 2`.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            start_size: (2 * dim).max(dim + 1),
            step_size: 2,
            allow_first_scale: false,
            max_neighbors: None,
        }
    }

    /// Uses `T = max(N / 300, 2)`, which keeps the scan linear in `N`.
    pub fn with_adaptive_step(mut self, n: usize) -> Self {
        self.step_size = (n / 300).max(2);
        self
    }

    pub fn multiscale(mut self, on: bool) -> Self {
        self.allow_first_scale = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_size < self.dim + 1 {
            return Err(Error::InvalidParameter(format!(
                "start size {} must be at least d + 1 = {}",
                self.start_size,
                self.dim + 1
            )));
        }
        if self.step_size == 0 {
            return Err(Error::InvalidParameter("step size must be positive".into()));
        }
        if let Some(cap) = self.max_neighbors {
            if cap < self.start_size {
                return Err(Error::InvalidParameter(format!(
                    "neighbor cap {cap} is below the start size {}",
                    self.start_size
                )));
            }
        }
        Ok(())
    }

    fn check_data(&self, n: usize, ambient: usize) -> Result<()> {
        self.validate()?;
        if self.dim >= ambient {
            return Err(Error::InvalidDimension { d: self.dim, ambient });
        }
        if n <= self.start_size {
            return Err(Error::InsufficientData {
                needed: self.start_size,
                available: n,
            });
        }
        Ok(())
    }
}

/// Neighborhood sizes scanned for one query point and their `beta2` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleProfile<T> {
    /// Distinct points in each scanned neighborhood.
    pub sizes: Vec<usize>,
    pub beta2_values: Vec<T>,
    pub chosen_k: usize,
}

impl<T: Real> ScaleProfile<T> {
    pub fn chosen_size(&self) -> usize {
        self.sizes[self.chosen_k]
    }
}

/// Scale-invariant error of a neighborhood around `center`: the RMS distance
/// to the best-fit affine `d`-flat divided by the largest distance to
/// `center`. Zero when every point coincides with `center`.
pub fn beta2<T: Real>(neighborhood: &PointCloud<T>, center: &[T], d: usize) -> Result<T> {
    if center.len() != neighborhood.dim() {
        return Err(Error::DimensionMismatch {
            expected: neighborhood.dim(),
            found: center.len(),
        });
    }
    let fit = fit_rows(neighborhood.points(), neighborhood.dim(), d, true)?;
    let radius = neighborhood
        .points()
        .map(|p| dist_sq(p, center))
        .fold(T::ZERO, |a, b| a.max(b))
        .sqrt();
    if radius == T::ZERO {
        return Ok(T::ZERO);
    }
    Ok(fit.rms() / radius)
}

/// Indices of all points sorted by distance to point `x_index`, ties by index.
pub fn sorted_neighbors<T: Real>(cloud: &PointCloud<T>, x_index: usize) -> Vec<(usize, T)> {
    let x0 = cloud.point(x_index);
    let mut order: Vec<(usize, T)> = cloud.points().map(|p| dist_sq(p, x0)).enumerate().collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    order
}

/// The `m` nearest points to point `x_index` (including itself).
pub fn nearest_neighbors<T: Real>(cloud: &PointCloud<T>, x_index: usize, m: usize) -> Vec<usize> {
    sorted_neighbors(cloud, x_index)
        .into_iter()
        .take(m)
        .map(|(i, _)| i)
        .collect()
}

/// Running scatter of `x - x0` for a growing neighborhood.
struct Scatter<T> {
    count: usize,
    sum: Vec<T>,
    lower: DMatrix<T>,
}

impl<T: Real> Scatter<T> {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            sum: vec![T::ZERO; dim],
            lower: DMatrix::zeros(dim, dim),
        }
    }

    fn add(&mut self, x: &[T], x0: &[T]) {
        let dim = self.sum.len();
        for i in 0..dim {
            let vi = x[i] - x0[i];
            self.sum[i] += vi;
            for j in 0..=i {
                self.lower[(i, j)] += vi * (x[j] - x0[j]);
            }
        }
        self.count += 1;
    }

    /// Mean squared distance to the best-fit affine `d`-flat.
    fn mean_residual_sq(&self, d: usize) -> T {
        let dim = self.sum.len();
        let n = T::of_usize(self.count);
        let mut m = DMatrix::<T>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = self.lower[(i, j)] - self.sum[i] * self.sum[j] / n;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let mut eig: Vec<T> = m.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let tail = eig[..dim - d].iter().fold(T::ZERO, |acc, &v| acc + v);
        tail.max(T::ZERO) / n
    }
}

/// Chooses the neighborhood of point `x_index` by the first local minimum of
/// `beta2` over the sizes `S, S + T, S + 2T, ...`.
///
/// Sizes count distinct points; exact copies of a member are always included
/// with it, so duplicating the data leaves every profile unchanged.
pub fn select_neighborhood<T: Real>(
    cloud: &PointCloud<T>,
    x_index: usize,
    params: &ScaleParams,
) -> Result<(Vec<usize>, ScaleProfile<T>)> {
    let n = cloud.len();
    params.check_data(n, cloud.dim())?;
    if x_index >= n {
        return Err(Error::InvalidParameter(format!("point index {x_index} out of range")));
    }
    let cap = params.max_neighbors.unwrap_or(n).min(n);
    let order = sorted_neighbors(cloud, x_index);
    let x0 = cloud.point(x_index);
    let d = params.dim;
    let tol = flat_tolerance::<T>();

    let key = |i: usize| cloud.point(i).iter().map(|v| v.to_f64().to_bits()).collect::<Vec<u64>>();
    let mut scatter = Scatter::new(cloud.dim());
    let mut seen = HashSet::new();
    let mut members = Vec::new();
    let mut sizes = Vec::new();
    let mut values: Vec<T> = Vec::new();
    let mut chosen = None;
    let mut pos = 0;
    let mut size = params.start_size;
    while size <= cap {
        while seen.len() < size && pos < n {
            let (i, _) = order[pos];
            scatter.add(cloud.point(i), x0);
            seen.insert(key(i));
            pos += 1;
        }
        // copies of points already inside join with them
        let last = order[pos - 1].1;
        while pos < n && order[pos].1 == last && seen.contains(&key(order[pos].0)) {
            scatter.add(cloud.point(order[pos].0), x0);
            pos += 1;
        }
        let exhausted = seen.len() < size;
        if exhausted && members.last() == Some(&pos) {
            break;
        }
        let radius = last.sqrt();
        let mut b = if radius == T::ZERO {
            T::ZERO
        } else {
            scatter.mean_residual_sq(d).sqrt() / radius
        };
        if b <= tol {
            b = T::ZERO;
        }
        sizes.push(seen.len());
        members.push(pos);
        values.push(b);

        let k = values.len() - 1;
        if k == 1 && params.allow_first_scale && values[0] < values[1] {
            chosen = Some(0);
        } else {
            let leaves_exact = k >= 1 && values[k - 1] == T::ZERO && sizes[k - 1] > d + 1 && values[k] > T::ZERO;
            let local_min = k >= 2 && values[k - 1] < values[k - 2].min(values[k]);
            if leaves_exact || local_min {
                chosen = Some(k - 1);
            }
        }
        if chosen.is_some() || exhausted {
            break;
        }
        size += params.step_size;
    }
    let chosen_k = chosen.unwrap_or(values.len() - 1);
    let neighbors = order[..members[chosen_k]].iter().map(|&(i, _)| i).collect();
    Ok((
        neighbors,
        ScaleProfile {
            sizes,
            beta2_values: values,
            chosen_k,
        },
    ))
}

/// Best-fit flat of the automatically selected neighborhood of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit<T> {
    pub fit: FlatFit<T>,
    pub neighborhood_size: usize,
}

impl<T: Real> LocalFit<T> {
    /// RMS distance of the neighborhood to its flat (the local noise estimate).
    pub fn rms(&self) -> T {
        self.fit.rms()
    }
}

pub fn local_best_fit_flat<T: Real>(
    cloud: &PointCloud<T>,
    x_index: usize,
    params: &ScaleParams,
) -> Result<LocalFit<T>> {
    let (neighbors, _) = select_neighborhood(cloud, x_index, params)?;
    let fit = fit_flat_indices(cloud, &neighbors, params.dim, true)?;
    Ok(LocalFit {
        fit,
        neighborhood_size: neighbors.len(),
    })
}

/// Local best-fit flats for the given points, computed in parallel.
pub fn local_fits<T: Real>(
    cloud: &PointCloud<T>,
    indices: &[usize],
    params: &ScaleParams,
) -> Result<Vec<LocalFit<T>>> {
    params.check_data(cloud.len(), cloud.dim())?;
    indices
        .par_iter()
        .map(|&i| local_best_fit_flat(cloud, i, params))
        .collect()
}

/// Inlier threshold estimate: the mean over all points of the RMS error of
/// the best-fit flat on each point's selected neighborhood.
pub fn estimate_noise_epsilon<T: Real>(cloud: &PointCloud<T>, params: &ScaleParams) -> Result<T> {
    let all: Vec<usize> = (0..cloud.len()).collect();
    let fits = local_fits(cloud, &all, params)?;
    let total = fits.iter().fold(T::ZERO, |acc, f| acc + f.rms());
    Ok(total / T::of_usize(fits.len()))
}
