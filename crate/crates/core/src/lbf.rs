//! Clustering by greedy energy minimization over randomized local best-fit
//! flats.
//!
//! `C` random points each contribute the best-fit flat of their automatically
//! selected neighborhood. Starting from a random `K`-subset of those
//! candidates, every pass drops one current flat at random and puts back
//! whichever candidate (the dropped one included) minimizes the energy. Points
//! are finally sent to their nearest selected flat.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::clustering::Labeling;
use crate::error::{Error, Result};
use crate::geometry::{nearest_flat, Flat, PointCloud};
use crate::rng::{stage, stage_rng};
use crate::scalar::Real;
use crate::scale::{local_best_fit_flat, ScaleParams};

/// How the distances of the points to their nearest flat are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Energy {
    /// Sum of the distances.
    #[default]
    L1Sum,
    /// Lower median of the distances; robust to outliers.
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfConfig {
    pub k: usize,
    pub d: usize,
    /// Number of candidate flats; `None` means `70 K`.
    pub candidates: Option<usize>,
    /// Number of replacement passes; `None` means `5 K`.
    pub passes: Option<usize>,
    pub scale: ScaleParams,
    pub energy: Energy,
    pub seed: u64,
}

impl LbfConfig {
    pub fn new(k: usize, d: usize, seed: u64) -> Self {
        Self {
            k,
            d,
            candidates: None,
            passes: None,
            scale: ScaleParams::new(d),
            energy: Energy::L1Sum,
            seed,
        }
    }

    /// Same configuration with the first scale allowed as a local minimum.
    pub fn multiscale(mut self, on: bool) -> Self {
        self.scale.allow_first_scale = on;
        self
    }

    /// Requested candidate count before capping at `N`.
    pub fn requested_candidates(&self) -> usize {
        self.candidates.unwrap_or(70 * self.k)
    }

    pub fn candidate_count(&self, n: usize) -> usize {
        self.requested_candidates().min(n)
    }

    pub fn pass_count(&self) -> usize {
        self.passes.unwrap_or(5 * self.k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if self.requested_candidates() < self.k {
            return Err(Error::InvalidParameter(format!(
                "candidate count {} is below K = {}",
                self.requested_candidates(),
                self.k
            )));
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

/// Candidate flats together with the points that seeded them.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<T> {
    pub flats: Vec<Flat<T>>,
    pub seed_point_indices: Vec<usize>,
}

impl<T> CandidateSet<T> {
    pub fn len(&self) -> usize {
        self.flats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flats.is_empty()
    }
}

/// Samples `min(C, N)` distinct seed points and fits a local flat at each.
pub fn generate_candidates<T: Real>(cloud: &PointCloud<T>, config: &LbfConfig) -> Result<CandidateSet<T>> {
    config.validate()?;
    let n = cloud.len();
    if n <= config.scale.start_size {
        return Err(Error::InsufficientData {
            needed: config.scale.start_size,
            available: n,
        });
    }
    let c = config.candidate_count(n);
    if c < config.k {
        return Err(Error::InsufficientData {
            needed: config.k - 1,
            available: n,
        });
    }
    let mut rng = stage_rng(config.seed, stage::CANDIDATES);
    let seeds = index::sample(&mut rng, n, c).into_vec();
    let flats = seeds
        .par_iter()
        .map(|&i| local_best_fit_flat(cloud, i, &config.scale).map(|f| f.fit.flat))
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet {
        flats,
        seed_point_indices: seeds,
    })
}

/// Energy of a union of flats: the sum or the lower median of the distances
/// of the points to their nearest flat.
pub fn energy<T: Real>(cloud: &PointCloud<T>, flats: &[Flat<T>], kind: Energy) -> Result<T> {
    if flats.is_empty() {
        return Err(Error::EmptyFlatList);
    }
    let dists = cloud
        .points()
        .map(|p| nearest_flat(p, flats).map(|(_, d)| d))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(dists, kind))
}

fn aggregate<T: Real>(mut dists: Vec<T>, kind: Energy) -> T {
    match kind {
        Energy::L1Sum => dists.iter().fold(T::ZERO, |acc, &d| acc + d),
        Energy::Median => {
            if dists.is_empty() {
                return T::ZERO;
            }
            let mid = (dists.len() - 1) / 2;
            let (_, m, _) = dists.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite distances"));
            *m
        }
    }
}

/// Outcome of the greedy passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    /// Candidate indices of the selected flats.
    pub chosen: Vec<usize>,
    pub flats: Vec<Flat<T>>,
    /// Energy of the initial subset followed by the energy after each pass.
    pub energy_trace: Vec<T>,
}

/// Greedy replacement passes over the candidate list.
pub fn greedy_select<T: Real>(
    cloud: &PointCloud<T>,
    candidates: &CandidateSet<T>,
    config: &LbfConfig,
) -> Result<Selection<T>> {
    config.validate()?;
    let c = candidates.len();
    if c < config.k {
        return Err(Error::InvalidParameter(format!(
            "{c} candidates cannot supply K = {} flats",
            config.k
        )));
    }
    let n = cloud.len();
    // distances[c * n + i] = dist(x_i, L_c)
    let distances: Vec<T> = candidates
        .flats
        .par_iter()
        .flat_map_iter(|f| cloud.points().map(move |p| f.distance(p)))
        .collect();
    let row = |j: usize| &distances[j * n..(j + 1) * n];

    let mut chosen = index::sample(&mut stage_rng(config.seed, stage::INITIAL_SUBSET), c, config.k).into_vec();
    let mut trace = Vec::with_capacity(config.pass_count() + 1);
    let initial: Vec<T> = (0..n)
        .map(|i| chosen.iter().map(|&j| row(j)[i]).fold(T::cast(f64::INFINITY), |a, b| a.min(b)))
        .collect();
    trace.push(aggregate(initial, config.energy));

    let mut pass_rng = stage_rng(config.seed, stage::PASSES);
    let mut rest = vec![T::ZERO; n];
    for _ in 0..config.pass_count() {
        let slot = pass_rng.random_range(0..config.k);
        rest.fill(T::cast(f64::INFINITY));
        for (s, &j) in chosen.iter().enumerate() {
            if s != slot {
                rest.iter_mut().zip(row(j)).for_each(|(r, &d)| *r = r.min(d));
            }
        }
        let scores: Vec<Option<T>> = (0..c)
            .into_par_iter()
            .map(|j| {
                let taken = chosen.iter().enumerate().any(|(s, &o)| s != slot && o == j);
                (!taken).then(|| {
                    let merged = rest.iter().zip(row(j)).map(|(&r, &d)| r.min(d)).collect();
                    aggregate(merged, config.energy)
                })
            })
            .collect();
        let (best, best_energy) = scores
            .iter()
            .enumerate()
            .filter_map(|(j, s)| s.map(|e| (j, e)))
            .fold(None, |acc: Option<(usize, T)>, (j, e)| match acc {
                Some((_, be)) if be <= e => acc,
                _ => Some((j, e)),
            })
            .expect("the incumbent is always admissible");
        chosen[slot] = best;
        trace.push(best_energy);
    }
    let flats = chosen.iter().map(|&j| candidates.flats[j].clone()).collect();
    Ok(Selection {
        chosen,
        flats,
        energy_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfResult<T> {
    pub labeling: Labeling,
    pub flats: Vec<Flat<T>>,
    pub energy_trace: Vec<T>,
    /// Seed points of the selected flats.
    pub seed_points: Vec<usize>,
    /// Candidates actually used (`C` capped at `N`).
    pub candidates_used: usize,
}

impl<T: Real> LbfResult<T> {
    pub fn final_energy(&self) -> T {
        *self.energy_trace.last().expect("trace holds the initial energy")
    }
}

/// Full pipeline: candidates, greedy passes, nearest-flat partition.
pub fn lbf_cluster<T: Real>(cloud: &PointCloud<T>, config: &LbfConfig) -> Result<LbfResult<T>> {
    let candidates = generate_candidates(cloud, config)?;
    let selection = greedy_select(cloud, &candidates, config)?;
    let labeling = assign_nearest(cloud, &selection.flats)?;
    Ok(LbfResult {
        labeling,
        seed_points: selection.chosen.iter().map(|&j| candidates.seed_point_indices[j]).collect(),
        flats: selection.flats,
        energy_trace: selection.energy_trace,
        candidates_used: candidates.len(),
    })
}

/// Labels every point with its nearest flat.
pub fn assign_nearest<T: Real>(cloud: &PointCloud<T>, flats: &[Flat<T>]) -> Result<Labeling> {
    let labels = cloud
        .points()
        .map(|p| nearest_flat(p, flats).map(|(j, _)| j))
        .collect::<Result<Vec<_>>>()?;
    Labeling::new(labels, flats.len())
}
