//! Normalized spectral embedding of an affinity matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stage, stage_rng, StageRng};
use crate::scalar::Real;

/// Matrices up to this size are decomposed densely.
const DENSE_LIMIT: usize = 300;
const OVERSAMPLE: usize = 10;
/// Krylov blocks per restart.
const KRYLOV_STEPS: usize = 12;
const MAX_RESTARTS: usize = 200;
/// Blocks between convergence checks.
const CHECK_EVERY: usize = 3;
const RESIDUAL_TOL: f64 = 1e-10;

/// Embeds the rows of the affinity `s_hat` into `R^k`.
///
/// With `D` the diagonal of row sums, the top `k` eigenpairs `(U, Sigma)` of
/// `D^{-1/2} s_hat D^{-1/2}` give the embedding `U Sigma^{1/2}` (negative
/// eigenvalues clamped to zero). Every row has norm at most one.
pub fn spectral_embed<T: Real>(s_hat: &DMatrix<T>, k: usize) -> Result<DMatrix<T>> {
    let normalized = normalize(s_hat.clone())?;
    let (values, vectors) = top_eigenpairs(&normalized, k)?;
    let mut embedding = vectors;
    for (mut col, &v) in embedding.column_iter_mut().zip(values.iter()) {
        col *= v.max(T::ZERO).sqrt();
    }
    Ok(embedding)
}

/// `D^{-1/2} s D^{-1/2}` in place.
pub fn normalize<T: Real>(mut s: DMatrix<T>) -> Result<DMatrix<T>> {
    let n = s.nrows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.ncols(),
        });
    }
    let mut scale = Vec::with_capacity(n);
    for (i, col) in s.column_iter().enumerate() {
        // columns equal rows for a symmetric matrix
        let sum = col.iter().fold(T::ZERO, |a, &b| a + b);
        if !(sum > T::ZERO) {
            return Err(Error::IsolatedPoint(i));
        }
        scale.push(T::ONE / sum.sqrt());
    }
    s.par_column_iter_mut().enumerate().for_each(|(j, mut col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v *= scale[i] * scale[j];
        }
    });
    Ok(s)
}

/// Largest `k` eigenvalues (descending) of a symmetric matrix and their
/// orthonormal eigenvectors as columns.
pub fn top_eigenpairs<T: Real>(m: &DMatrix<T>, k: usize) -> Result<(Vec<T>, DMatrix<T>)> {
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cannot take {k} eigenpairs of a {n} x {n} matrix")));
    }
    if n <= DENSE_LIMIT || 2 * (k + OVERSAMPLE) >= n {
        Ok(dense_top(m.clone(), k))
    } else {
        Ok(block_krylov(m, k))
    }
}

fn dense_top<T: Real>(m: DMatrix<T>, k: usize) -> (Vec<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues"));
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), k, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Orthonormalizes the columns of `x` against the first `used` columns of
/// `basis` and each other, then appends them. Columns that vanish (the
/// Krylov space is exhausted in that direction) are replaced by random ones.
fn extend_basis<T: Real>(basis: &mut DMatrix<T>, used: usize, mut x: DMatrix<T>, rng: &mut StageRng) -> DMatrix<T> {
    let n = basis.nrows();
    for j in 0..x.ncols() {
        loop {
            let before = x.column(j).norm();
            // two passes of classical Gram-Schmidt keep orthogonality at roundoff level
            for _ in 0..2 {
                let v = basis.columns(0, used + j);
                let coef = v.tr_mul(&x.column(j));
                let proj = v * coef;
                x.column_mut(j).axpy(-T::ONE, &proj, T::ONE);
            }
            let after = x.column(j).norm();
            if after > T::cast(1e-10) * before && after > T::ZERO {
                let col = x.column(j) / after;
                basis.set_column(used + j, &col);
                break;
            }
            let random = DVector::from_fn(n, |_, _| T::cast(StandardNormal.sample(&mut *rng)));
            x.set_column(j, &random);
        }
    }
    basis.columns(used, x.ncols()).into_owned()
}

/// Restarted block Krylov method with Rayleigh-Ritz extraction. A block
/// (rather than a single vector) is needed to resolve repeated eigenvalues,
/// which an affinity with well separated clusters has at the top.
fn block_krylov<T: Real>(m: &DMatrix<T>, k: usize) -> (Vec<T>, DMatrix<T>) {
    let n = m.nrows();
    let b = (k + OVERSAMPLE).min(n);
    let steps = KRYLOV_STEPS.min(n / b - 1).max(1);
    let width = b * (steps + 1);
    let mut rng = stage_rng(n as u64 ^ ((k as u64) << 32), stage::EIGEN);
    let mut start = Some(DMatrix::from_fn(n, b, |_, _| T::cast(StandardNormal.sample(&mut rng))));
    let tol = T::cast(RESIDUAL_TOL.max(100.0 * T::EPSILON.to_f64()));
    let mut basis = DMatrix::<T>::zeros(n, width);
    let mut image = DMatrix::<T>::zeros(n, width);
    let mut last = None;
    for _ in 0..MAX_RESTARTS {
        let first = start.take().expect("restart block");
        let mut block = extend_basis(&mut basis, 0, first, &mut rng);
        let mut used = 0;
        for step in 0..=steps {
            let mb = m * &block;
            image.columns_mut(used, b).copy_from(&mb);
            used += b;
            if step % CHECK_EVERY == CHECK_EVERY - 1 || step == steps {
                let v = basis.columns(0, used);
                let mv = image.columns(0, used);
                let h = v.tr_mul(&mv);
                let h = (&h + h.transpose()) * T::cast(0.5);
                let (values, small) = dense_top(h, b);
                let ritz = v * &small;
                let scale = values.iter().fold(T::ONE, |a, v| a.max(v.abs()));
                let residual = (0..k)
                    .map(|j| (mv * small.column(j) - ritz.column(j) * values[j]).norm())
                    .fold(T::ZERO, |a, r| a.max(r));
                last = Some((values[..k].to_vec(), ritz.columns(0, k).into_owned()));
                if residual <= tol * scale {
                    return last.expect("just set");
                }
                if step == steps {
                    start = Some(ritz);
                    break;
                }
            }
            block = extend_basis(&mut basis, used, mb, &mut rng);
        }
    }
    last.expect("at least one restart")
}
