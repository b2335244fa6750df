//! K-flats: alternate nearest-flat assignment and per-cluster refitting.

use rand::Rng;

use crate::clustering::Labeling;
use crate::error::{Error, Result};
use crate::geometry::{fit_flat_indices, Flat, PointCloud};
use crate::rng::{derive_seed, stage, stage_rng};
use crate::scalar::Real;
use crate::scale::{nearest_neighbors, select_neighborhood, ScaleParams};

/// Initialization of the K flats.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Random cluster membership, one fit per cluster.
    Random,
    /// Farthest insertion with `m`-point neighborhoods.
    FarthestFixed(usize),
    /// Farthest insertion with automatically selected neighborhoods.
    FarthestAdaptive(ScaleParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFlatsConfig {
    pub k: usize,
    pub d: usize,
    pub init: InitStrategy,
    pub affine: bool,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl KFlatsConfig {
    pub fn new(k: usize, d: usize, seed: u64) -> Self {
        Self {
            k,
            d,
            init: InitStrategy::FarthestAdaptive(ScaleParams::new(d)),
            affine: true,
            max_iter: 100,
            restarts: 1,
            seed,
        }
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFlatsResult<T> {
    pub labeling: Labeling,
    pub flats: Vec<Flat<T>>,
    /// Sum of squared distances to the assigned flat after every assignment.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> KFlatsResult<T> {
    pub fn objective(&self) -> T {
        *self.objective_trace.last().expect("at least one assignment")
    }
}

fn neighborhood_flat<T: Real>(
    cloud: &PointCloud<T>,
    idx: usize,
    d: usize,
    mode: &InitStrategy,
    affine: bool,
) -> Result<Flat<T>> {
    let neighbors = match mode {
        InitStrategy::FarthestFixed(m) => nearest_neighbors(cloud, idx, *m),
        InitStrategy::FarthestAdaptive(params) => select_neighborhood(cloud, idx, params)?.0,
        InitStrategy::Random => unreachable!("random initialization has no neighborhoods"),
    };
    Ok(fit_flat_indices(cloud, &neighbors, d, affine)?.flat)
}

/// Farthest insertion: a flat fitted around a random point, then repeatedly
/// around the point farthest from all flats so far (ties to the lowest index).
pub fn farthest_insertion_init<T: Real>(
    cloud: &PointCloud<T>,
    d: usize,
    k: usize,
    mode: &InitStrategy,
    affine: bool,
    seed: u64,
) -> Result<Vec<Flat<T>>> {
    let n = cloud.len();
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if d >= cloud.dim() {
        return Err(Error::InvalidDimension { d, ambient: cloud.dim() });
    }
    match mode {
        InitStrategy::FarthestFixed(m) => {
            if *m < d + 1 {
                return Err(Error::InvalidParameter(format!("neighborhood size {m} is below d + 1")));
            }
            if n <= *m {
                return Err(Error::InsufficientData { needed: *m, available: n });
            }
        }
        InitStrategy::FarthestAdaptive(params) => {
            if params.dim != d {
                return Err(Error::InvalidParameter(format!(
                    "scale dimension {} differs from d = {d}",
                    params.dim
                )));
            }
            params.validate()?;
        }
        InitStrategy::Random => {
            return Err(Error::InvalidParameter("farthest insertion needs a neighborhood mode".into()));
        }
    }
    let first = stage_rng(seed, stage::KFLATS_INIT).random_range(0..n);
    let mut flats = vec![neighborhood_flat(cloud, first, d, mode, affine)?];
    let mut nearest: Vec<T> = cloud.points().map(|p| flats[0].distance_sq(p)).collect();
    while flats.len() < k {
        let far = nearest
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > nearest[best] { i } else { best });
        let flat = neighborhood_flat(cloud, far, d, mode, affine)?;
        nearest.iter_mut().zip(cloud.points()).for_each(|(v, p)| *v = v.min(flat.distance_sq(p)));
        flats.push(flat);
    }
    Ok(flats)
}

fn random_membership_init<T: Real>(cloud: &PointCloud<T>, config: &KFlatsConfig, seed: u64) -> Result<Vec<Flat<T>>> {
    let mut rng = stage_rng(seed, stage::KFLATS_INIT);
    let labels = (0..cloud.len()).map(|_| rng.random_range(0..config.k)).collect();
    let labeling = Labeling::new(labels, config.k)?;
    let mut flats = Vec::with_capacity(config.k);
    for members in labeling.members() {
        let members = if members.is_empty() {
            vec![rng.random_range(0..cloud.len())]
        } else {
            members
        };
        flats.push(fit_flat_indices(cloud, &members, config.d, config.affine)?.flat);
    }
    Ok(flats)
}

/// K-flats from the configured initialization; with several restarts the run
/// of smallest objective is kept.
pub fn kflats<T: Real>(cloud: &PointCloud<T>, config: &KFlatsConfig) -> Result<KFlatsResult<T>> {
    if config.k == 0 || config.max_iter == 0 {
        return Err(Error::InvalidParameter("K and max_iter must be positive".into()));
    }
    if cloud.len() < config.k {
        return Err(Error::InsufficientData {
            needed: config.k - 1,
            available: cloud.len(),
        });
    }
    let mut best: Option<KFlatsResult<T>> = None;
    for r in 0..config.restarts.max(1) {
        let seed = if r == 0 { config.seed } else { derive_seed(config.seed, r as u64) };
        let init = match &config.init {
            InitStrategy::Random => random_membership_init(cloud, config, seed)?,
            mode => farthest_insertion_init(cloud, config.d, config.k, mode, config.affine, seed)?,
        };
        let run = kflats_from(cloud, init, config)?;
        if best.as_ref().is_none_or(|b| run.objective() < b.objective()) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// K-flats iterations from explicit initial flats.
pub fn kflats_from<T: Real>(cloud: &PointCloud<T>, mut flats: Vec<Flat<T>>, config: &KFlatsConfig) -> Result<KFlatsResult<T>> {
    let k = flats.len();
    if k == 0 {
        return Err(Error::EmptyFlatList);
    }
    if let Some(f) = flats.iter().find(|f| f.ambient_dim() != cloud.dim()) {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: f.ambient_dim(),
        });
    }
    let mut labels = vec![usize::MAX; cloud.len()];
    let mut dists = vec![T::ZERO; cloud.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let mut changed = false;
        for (i, p) in cloud.points().enumerate() {
            let (j, dist) = flats
                .iter()
                .enumerate()
                .map(|(j, f)| (j, f.distance_sq(p)))
                .fold((0, T::cast(f64::INFINITY)), |b, c| if c.1 < b.1 { c } else { b });
            changed |= labels[i] != j;
            labels[i] = j;
            dists[i] = dist;
        }
        trace.push(dists.iter().fold(T::ZERO, |a, &b| a + b));
        if !changed {
            converged = true;
            break;
        }
        let members = Labeling::new(labels.clone(), k)?.members();
        for (j, m) in members.iter().enumerate() {
            if !m.is_empty() {
                flats[j] = fit_flat_indices(cloud, m, config.d, config.affine)?.flat;
            }
        }
        for (j, m) in members.iter().enumerate() {
            if m.is_empty() {
                flats[j] = repair_flat(cloud, &dists, config)?;
            }
        }
    }
    Ok(KFlatsResult {
        labeling: Labeling::new(labels, k)?,
        flats,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Flat through the neighborhood of the worst-approximated point.
fn repair_flat<T: Real>(cloud: &PointCloud<T>, dists: &[T], config: &KFlatsConfig) -> Result<Flat<T>> {
    let worst = dists
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > dists[best] { i } else { best });
    let m = (2 * config.d).max(config.d + 1).min(cloud.len());
    let neighbors = nearest_neighbors(cloud, worst, m);
    Ok(fit_flat_indices(cloud, &neighbors, config.d, config.affine)?.flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::misclassification_rate;

    fn parallel_lines() -> PointCloud<f64> {
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..50 {
            let t = i as f64 / 49.0;
            rows.push([t, 0.0]);
            truth.push(0);
            rows.push([t, 5.0]);
            truth.push(1);
        }
        PointCloud::from_rows(&rows).unwrap().with_truth(truth).unwrap()
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let pc = parallel_lines();
        let flats = vec![
            Flat::coordinate(&[0], vec![0.0, 0.0]).unwrap(),
            Flat::coordinate(&[0], vec![0.0, 5.0]).unwrap(),
        ];
        let res = kflats_from(&pc, flats, &KFlatsConfig::new(2, 1, 0)).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 2);
        assert!(res.objective() < 1e-20);
        assert_eq!(misclassification_rate(&res.labeling, pc.truth().unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn second_seed_lies_on_the_other_flat() {
        let pc = parallel_lines();
        let flats = farthest_insertion_init(&pc, 1, 2, &InitStrategy::FarthestFixed(5), true, 4).unwrap();
        let ys: Vec<f64> = flats.iter().map(|f| f.project(&[0.5, 0.0])[1]).collect();
        assert!((ys[0] - ys[1]).abs() > 4.9);
    }

    #[test]
    fn single_flat_init() {
        let pc = parallel_lines();
        let flats = farthest_insertion_init(&pc, 1, 1, &InitStrategy::FarthestAdaptive(ScaleParams::new(1)), true, 2).unwrap();
        assert_eq!(flats.len(), 1);
    }

    #[test]
    fn objective_is_monotone_for_random_init() {
        let pc = parallel_lines();
        for seed in 0..10 {
            let cfg = KFlatsConfig::new(3, 1, seed).with_init(InitStrategy::Random);
            let res = kflats(&pc, &cfg).unwrap();
            assert!(res.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
            assert!(res.iterations <= cfg.max_iter);
        }
    }

    #[test]
    fn init_errors() {
        let pc = parallel_lines();
        assert!(farthest_insertion_init(&pc, 1, 2, &InitStrategy::FarthestFixed(200), true, 0).is_err());
        assert!(farthest_insertion_init(&pc, 1, 2, &InitStrategy::Random, true, 0).is_err());
        assert!(farthest_insertion_init(&pc, 2, 2, &InitStrategy::FarthestFixed(5), true, 0).is_err());
    }
}
