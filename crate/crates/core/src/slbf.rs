//! Spectral clustering with an affinity built from local best-fit flats.
//!
//! Every point `x_i` gets a local flat `L_i` and a noise level (the RMS
//! residual of its neighborhood). For each `lambda` in a sweep the affinity
//!
//! ```text
//! S_ij     = sqrt(dist(x_i, L_j) * dist(x_j, L_i))
//! sigma_j  = lambda * rms_j
//! Shat_ij  = exp(-S_ij / (2 sigma_j^2)) + exp(-S_ij / (2 sigma_i^2))
//! ```
//!
//! is embedded spectrally and the rows are clustered by K-means. The
//! segmentation with the smallest total squared distance of every cluster to
//! its own best-fit flat wins.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::clustering::{kmeans, Labeling};
use crate::error::{Error, Result};
use crate::geometry::{fit_flat_indices, Flat, PointCloud};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::scale::{local_fits, ScaleParams};
use crate::spectral::spectral_embed;

/// `2 e^i` for `i = 0..=6`.
pub fn default_lambdas() -> Vec<f64> {
    (0..=6).map(|i| 2.0 * std::f64::consts::E.powi(i)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlbfConfig {
    pub k: usize,
    pub d: usize,
    pub lambdas: Vec<f64>,
    pub scale: ScaleParams,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl SlbfConfig {
    pub fn new(k: usize, d: usize, seed: u64) -> Self {
        Self {
            k,
            d,
            lambdas: default_lambdas(),
            scale: ScaleParams::new(d),
            kmeans_restarts: 10,
            seed,
        }
    }

    pub fn multiscale(mut self, on: bool) -> Self {
        self.scale.allow_first_scale = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if self.lambdas.is_empty() {
            return Err(Error::InvalidParameter("the lambda list is empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!("lambda {l} is not a positive number")));
        }
        if self.scale.dim != self.d {
            return Err(Error::InvalidParameter(format!(
                "scale dimension {} differs from d = {}",
                self.scale.dim, self.d
            )));
        }
        self.scale.validate()
    }
}

/// Local flat and RMS residual of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFlats<T> {
    pub flats: Vec<Flat<T>>,
    pub residuals: Vec<T>,
}

pub fn local_flats_all<T: Real>(cloud: &PointCloud<T>, config: &SlbfConfig) -> Result<LocalFlats<T>> {
    config.validate()?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let fits = local_fits(cloud, &all, &config.scale)?;
    let residuals = fits.iter().map(|f| f.rms()).collect();
    let flats = fits.into_iter().map(|f| f.fit.flat).collect();
    Ok(LocalFlats { flats, residuals })
}

/// The symmetric matrix `S_ij = sqrt(dist(x_i, L_j) dist(x_j, L_i))`.
pub fn local_distance_matrix<T: Real>(cloud: &PointCloud<T>, flats: &[Flat<T>]) -> Result<DMatrix<T>> {
    let n = cloud.len();
    if flats.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: flats.len(),
        });
    }
    if let Some(f) = flats.iter().find(|f| f.ambient_dim() != cloud.dim()) {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: f.ambient_dim(),
        });
    }
    // column j holds dist(x_i, L_j) for all i
    let mut m = DMatrix::zeros(n, n);
    m.par_column_iter_mut().enumerate().for_each(|(j, mut col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = flats[j].distance(cloud.point(i));
        }
    });
    for j in 0..n {
        for i in 0..j {
            let s = (m[(i, j)] * m[(j, i)]).sqrt();
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBundle<T> {
    pub s: DMatrix<T>,
    pub sigma: Vec<T>,
    pub s_hat: DMatrix<T>,
}

/// Noise scales `lambda * rms_j`, floored at `lambda sqrt(eps) diameter`.
pub fn sigmas<T: Real>(residuals: &[T], lambda: f64, diameter: T) -> Vec<T> {
    let lambda = T::cast(lambda);
    let floor = lambda * T::EPSILON.sqrt() * diameter;
    residuals.iter().map(|&r| (lambda * r).max(floor)).collect()
}

/// `Shat_ij = exp(-S_ij / 2 sigma_j^2) + exp(-S_ij / 2 sigma_i^2)`.
pub fn s_hat<T: Real>(s: &DMatrix<T>, sigma: &[T]) -> DMatrix<T> {
    let mut out = s.clone();
    out.par_column_iter_mut().enumerate().for_each(|(j, mut col)| {
        let two_j = T::TWO * sigma[j] * sigma[j];
        for (i, v) in col.iter_mut().enumerate() {
            let two_i = T::TWO * sigma[i] * sigma[i];
            *v = (-*v / two_j).exp() + (-*v / two_i).exp();
        }
    });
    out
}

pub fn build_similarity<T: Real>(
    cloud: &PointCloud<T>,
    flats: &[Flat<T>],
    residuals: &[T],
    lambda: f64,
) -> Result<SimilarityBundle<T>> {
    if residuals.len() != cloud.len() {
        return Err(Error::DimensionMismatch {
            expected: cloud.len(),
            found: residuals.len(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    let s = local_distance_matrix(cloud, flats)?;
    let sigma = sigmas(residuals, lambda, cloud.diameter());
    let s_hat = s_hat(&s, &sigma);
    Ok(SimilarityBundle { s, sigma, s_hat })
}

/// Sum over clusters of the squared distances to the cluster's best-fit
/// affine `d`-flat. Empty clusters contribute nothing.
pub fn segmentation_error<T: Real>(cloud: &PointCloud<T>, labeling: &Labeling, d: usize) -> Result<T> {
    if labeling.len() != cloud.len() {
        return Err(Error::DimensionMismatch {
            expected: cloud.len(),
            found: labeling.len(),
        });
    }
    let mut total = T::ZERO;
    for members in labeling.members() {
        if !members.is_empty() {
            total += fit_flat_indices(cloud, &members, d, true)?.residual;
        }
    }
    Ok(total)
}

/// Result of one `lambda` of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTrial<T> {
    pub lambda: f64,
    /// Segmentation error, or the reason the trial failed.
    pub outcome: std::result::Result<(Labeling, T), Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlbfResult<T> {
    pub labeling: Labeling,
    pub lambda: f64,
    pub error: T,
    pub trials: Vec<LambdaTrial<T>>,
}

/// Runs the sweep and keeps the segmentation of smallest error (ties go to
/// the earlier `lambda`). A `lambda` whose affinity isolates a point is
/// skipped; the call fails only if every `lambda` fails.
pub fn slbf_cluster<T: Real>(cloud: &PointCloud<T>, config: &SlbfConfig) -> Result<SlbfResult<T>> {
    config.validate()?;
    if cloud.len() < config.k {
        return Err(Error::InsufficientData {
            needed: config.k - 1,
            available: cloud.len(),
        });
    }
    let local = local_flats_all(cloud, config)?;
    slbf_with_flats(cloud, &local, config)
}

/// The sweep on precomputed local flats.
pub fn slbf_with_flats<T: Real>(cloud: &PointCloud<T>, local: &LocalFlats<T>, config: &SlbfConfig) -> Result<SlbfResult<T>> {
    config.validate()?;
    if local.residuals.len() != cloud.len() {
        return Err(Error::DimensionMismatch {
            expected: cloud.len(),
            found: local.residuals.len(),
        });
    }
    let s = local_distance_matrix(cloud, &local.flats)?;
    let diameter = cloud.diameter();
    let mut trials = Vec::with_capacity(config.lambdas.len());
    for (t, &lambda) in config.lambdas.iter().enumerate() {
        let outcome = (|| {
            let sigma = sigmas(&local.residuals, lambda, diameter);
            let embedding = spectral_embed(&s_hat(&s, &sigma), config.k)?;
            let rows = PointCloud::new(embedding.transpose().as_slice().to_vec(), config.k)?;
            let labeling = kmeans(&rows, config.k, config.kmeans_restarts, derive_seed(config.seed, t as u64))?;
            let error = segmentation_error(cloud, &labeling, config.d)?;
            Ok((labeling, error))
        })();
        trials.push(LambdaTrial { lambda, outcome });
    }
    let best = trials
        .iter()
        .filter_map(|t| t.outcome.as_ref().ok().map(|(l, e)| (t.lambda, l, *e)))
        .fold(None, |acc: Option<(f64, &Labeling, T)>, cur| match acc {
            Some(a) if a.2 <= cur.2 => Some(a),
            _ => Some(cur),
        });
    match best {
        Some((lambda, labeling, error)) => Ok(SlbfResult {
            labeling: labeling.clone(),
            lambda,
            error,
            trials,
        }),
        None => Err(trials.into_iter().find_map(|t| t.outcome.err()).expect("lambda list is non-empty")),
    }
}
