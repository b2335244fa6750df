//! Synthetic hybrid linear data and uniform samples from unions of tubes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::geometry::{dot, principal_angles, Flat, PointCloud, OUTLIER};
use crate::rng::{derive_seed, stage, stage_rng, StageRng};
use crate::scalar::Real;

/// Region of a flat that inliers are drawn from, in flat coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Support {
    /// Unit ball centered at the flat's offset.
    #[default]
    Ball,
    /// Unit cube `[-1/2, 1/2]^d` centered at the flat's offset.
    Cube,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub ambient_dim: usize,
    /// Dimension of each flat.
    pub dims: Vec<usize>,
    pub points_per_flat: usize,
    pub noise_sigma: f64,
    /// Outliers as a fraction of all returned points.
    pub outlier_fraction: f64,
    pub affine: bool,
    /// Smallest admissible principal angle between any two flats.
    pub min_angle: Option<f64>,
    pub support: Support,
    pub seed: u64,
}

impl SynthSpec {
    /// `K` flats of dimension `d` in `R^D` with the default protocol.
    pub fn new(ambient_dim: usize, d: usize, k: usize, seed: u64) -> Self {
        Self {
            ambient_dim,
            dims: vec![d; k],
            points_per_flat: 250,
            noise_sigma: 0.05,
            outlier_fraction: 0.0,
            affine: false,
            min_angle: None,
            support: Support::Ball,
            seed,
        }
    }

    /// Parses a case name `"{d}x{K}in{D}"`, e.g. `2x2in4`.
    pub fn from_case(case: &str, seed: u64) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("case '{case}' is not of the form <d>x<K>in<D>"));
        let (dk, ambient) = case.split_once("in").ok_or_else(bad)?;
        let (d, k) = dk.split_once('x').ok_or_else(bad)?;
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        let spec = Self::new(parse(ambient)?, parse(d)?, parse(k)?, seed);
        spec.validate()?;
        Ok(spec)
    }

    pub fn inliers(&self) -> usize {
        self.points_per_flat * self.dims.len()
    }

    /// `round(f N_in / (1 - f))`, so outliers make up the fraction `f` of the
    /// whole data set.
    pub fn outliers(&self) -> usize {
        let f = self.outlier_fraction;
        (f * self.inliers() as f64 / (1.0 - f)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.ambient_dim == 0 {
            return Err(Error::InvalidParameter("ambient dimension must be positive".into()));
        }
        if self.dims.is_empty() {
            return Err(Error::InvalidParameter("at least one flat is required".into()));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d >= self.ambient_dim) {
            return Err(Error::InvalidDimension {
                d,
                ambient: self.ambient_dim,
            });
        }
        if self.points_per_flat == 0 {
            return Err(Error::InvalidParameter("points per flat must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter("noise sigma must be a nonnegative number".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidParameter("outlier fraction must lie in [0, 1)".into()));
        }
        if let Some(a) = self.min_angle {
            if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&a) {
                return Err(Error::InvalidParameter("minimum angle must lie in [0, pi/2]".into()));
            }
        }
        Ok(())
    }
}

/// Generated data set and the flats it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridData<T> {
    /// Inliers flat by flat, then outliers; truth labels attached.
    pub cloud: PointCloud<T>,
    pub flats: Vec<Flat<T>>,
}

const MAX_ANGLE_TRIES: usize = 10_000;

fn gaussian_vec(rng: &mut StageRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform sample from the unit ball of `R^n`.
pub(crate) fn unit_ball(rng: &mut StageRng, n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut g = gaussian_vec(rng, n);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = rng.random::<f64>().powf(1.0 / n as f64);
    g.iter_mut().for_each(|v| *v *= radius / norm);
    g
}

/// Orthonormal `d`-frame from Gram-Schmidt on Gaussian vectors.
fn random_frame(rng: &mut StageRng, d: usize, ambient: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(d);
    while frame.len() < d {
        let mut v = gaussian_vec(rng, ambient);
        for _ in 0..2 {
            for b in &frame {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            frame.push(v);
        }
    }
    frame
}

fn random_flats(spec: &SynthSpec) -> Result<Vec<Flat<f64>>> {
    let mut rng = stage_rng(spec.seed, stage::FLATS);
    let mut flats: Vec<Flat<f64>> = Vec::with_capacity(spec.dims.len());
    for &d in &spec.dims {
        let mut tries = 0;
        let flat = loop {
            let basis = random_frame(&mut rng, d, spec.ambient_dim);
            let offset = if spec.affine {
                gaussian_vec(&mut rng, spec.ambient_dim)
            } else {
                vec![0.0; spec.ambient_dim]
            };
            let candidate = Flat::new(basis, offset, spec.affine)?;
            let separated = spec.min_angle.is_none_or(|min| {
                flats
                    .iter()
                    .all(|f| principal_angles(f, &candidate).first().is_none_or(|&a| a >= min))
            });
            if separated {
                break candidate;
            }
            tries += 1;
            if tries >= MAX_ANGLE_TRIES {
                return Err(Error::InvalidParameter(format!(
                    "no flat met the minimum angle after {MAX_ANGLE_TRIES} draws"
                )));
            }
        };
        flats.push(flat);
    }
    Ok(flats)
}

/// Samples the data set described by `spec`.
pub fn generate_hybrid<T: Real>(spec: &SynthSpec) -> Result<HybridData<T>> {
    spec.validate()?;
    let flats = random_flats(spec)?;
    let dim = spec.ambient_dim;
    let mut data: Vec<f64> = Vec::with_capacity((spec.inliers() + spec.outliers()) * dim);
    let mut truth = Vec::with_capacity(spec.inliers() + spec.outliers());
    let cube = Uniform::new(-0.5, 0.5).expect("valid range");
    for (j, flat) in flats.iter().enumerate() {
        let mut rng = stage_rng(derive_seed(spec.seed, stage::SAMPLES), j as u64);
        let d = flat.dim();
        for _ in 0..spec.points_per_flat {
            let coords = match spec.support {
                Support::Ball => unit_ball(&mut rng, d),
                Support::Cube => (0..d).map(|_| cube.sample(&mut rng)).collect(),
            };
            let mut p = flat.offset().to_vec();
            for (c, b) in coords.iter().zip(flat.basis_vectors()) {
                p.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
            }
            if spec.noise_sigma > 0.0 {
                for x in p.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x += spec.noise_sigma * z;
                }
            }
            data.extend_from_slice(&p);
            truth.push(j as i64);
        }
    }
    let n_out = spec.outliers();
    if n_out > 0 {
        let max_norm = data.chunks(dim).map(|p| dot(p, p).sqrt()).fold(0.0, f64::max);
        let side = Uniform::new_inclusive(-max_norm, max_norm).expect("valid range");
        let mut rng = stage_rng(spec.seed, stage::OUTLIERS);
        data.extend((0..n_out * dim).map(|_| side.sample(&mut rng)));
        truth.resize(truth.len() + n_out, OUTLIER);
    }
    let cloud = PointCloud::new(data.into_iter().map(T::cast).collect(), dim)?.with_truth(truth)?;
    Ok(HybridData {
        cloud,
        flats: flats.iter().map(convert_flat).collect(),
    })
}

pub(crate) fn convert_flat<S: Real, T: Real>(f: &Flat<S>) -> Flat<T> {
    let basis = f.basis_vectors().flat_map(|b| b.iter().map(|&v| T::cast(v.to_f64()))).collect();
    let offset = f.offset().iter().map(|&v| T::cast(v.to_f64())).collect();
    Flat::from_parts(basis, offset, f.dim(), f.is_affine())
}

/// `K` flats of common dimension thickened to width `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeMixture<T> {
    pub flats: Vec<Flat<T>>,
    pub width: T,
}

impl<T: Real> TubeMixture<T> {
    pub fn new(flats: Vec<Flat<T>>, width: T) -> Result<Self> {
        let first = flats.first().ok_or(Error::EmptyFlatList)?;
        let (d, ambient) = (first.dim(), first.ambient_dim());
        if let Some(f) = flats.iter().find(|f| f.dim() != d || f.ambient_dim() != ambient) {
            return Err(Error::InvalidParameter(format!(
                "tube flats must share dimension {d} in R^{ambient}, found {} in R^{}",
                f.dim(),
                f.ambient_dim()
            )));
        }
        if !(width > T::ZERO) || !width.finite() {
            return Err(Error::InvalidParameter("tube width must be positive".into()));
        }
        Ok(Self { flats, width })
    }

    pub fn dim(&self) -> usize {
        self.flats[0].dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.flats[0].ambient_dim()
    }

    /// Applies `x -> c x` to the whole configuration.
    pub fn scaled(&self, c: T) -> Self {
        let flats = self
            .flats
            .iter()
            .map(|f| {
                let basis = f.basis_vectors().flatten().copied().collect();
                let offset = f.offset().iter().map(|&v| v * c).collect();
                Flat::from_parts(basis, offset, f.dim(), f.is_affine())
            })
            .collect();
        Self {
            flats,
            width: self.width * c,
        }
    }
}

/// Volume of the unit ball in `R^n`.
pub(crate) fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

struct Proposal {
    tube: usize,
    foot: Vec<f64>,
    in_radius: f64,
    out_radius: f64,
    volume: f64,
}

/// Uniform samples from the union of the tubes intersected with the ball
/// `B(center, radius)`; the truth labels record the tube each sample was
/// drawn from.
///
/// Each tube has a product proposal (a ball in the flat around the foot of
/// `center` times a ball in the normal space) containing its part of the
/// region. A tube is picked in proportion to its proposal volume, samples
/// outside the ball are rejected, and samples lying in `m` tubes are kept
/// with probability `1/m` so overlaps are not over-weighted.
pub fn sample_tube_mixture<T: Real>(
    mixture: &TubeMixture<T>,
    n: usize,
    center: &[T],
    radius: T,
    seed: u64,
) -> Result<PointCloud<T>> {
    let ambient = mixture.ambient_dim();
    if center.len() != ambient {
        return Err(Error::DimensionMismatch {
            expected: ambient,
            found: center.len(),
        });
    }
    if !(radius > T::ZERO) {
        return Err(Error::InvalidParameter("ball radius must be positive".into()));
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let flats: Vec<Flat<f64>> = mixture.flats.iter().map(convert_flat::<T, f64>).collect();
    let c: Vec<f64> = center.iter().map(|v| v.to_f64()).collect();
    let (r, w) = (radius.to_f64(), mixture.width.to_f64());
    let d = mixture.dim();
    let codim = ambient - d;

    let proposals: Vec<Proposal> = flats
        .iter()
        .enumerate()
        .filter_map(|(tube, f)| {
            let h = f.distance(&c);
            let gap = (h - w).max(0.0);
            (gap < r).then(|| {
                let in_radius = (r * r - gap * gap).sqrt();
                let out_radius = w.min(h + r);
                Proposal {
                    tube,
                    foot: f.project(&c),
                    in_radius,
                    out_radius,
                    volume: unit_ball_volume(d) * in_radius.powi(d as i32) * unit_ball_volume(codim) * out_radius.powi(codim as i32),
                }
            })
        })
        .collect();
    if proposals.is_empty() {
        return Err(Error::SupportMissed);
    }
    let total: f64 = proposals.iter().map(|p| p.volume).sum();
    let mut rng = stage_rng(seed, stage::MONTE_CARLO);
    let mut data = Vec::with_capacity(n * ambient);
    let mut labels = Vec::with_capacity(n);
    let max_attempts = 1000 * n + 1_000_000;
    let mut attempts = 0;
    while labels.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::SupportMissed);
        }
        let mut u = rng.random::<f64>() * total;
        let prop = proposals
            .iter()
            .find(|p| {
                u -= p.volume;
                u < 0.0
            })
            .unwrap_or(&proposals[proposals.len() - 1]);
        let flat = &flats[prop.tube];
        let mut y = prop.foot.clone();
        for (a, b) in unit_ball(&mut rng, d).iter().zip(flat.basis_vectors()) {
            y.iter_mut().zip(b).for_each(|(x, v)| *x += prop.in_radius * a * v);
        }
        // a Gaussian vector projected on the normal space has a uniform direction
        let g = gaussian_vec(&mut rng, ambient);
        let mut normal = g.clone();
        for b in flat.basis_vectors() {
            let k = dot(&g, b);
            normal.iter_mut().zip(b).for_each(|(x, v)| *x -= k * v);
        }
        let norm = dot(&normal, &normal).sqrt();
        if norm == 0.0 {
            continue;
        }
        let rho = prop.out_radius * rng.random::<f64>().powf(1.0 / codim as f64);
        y.iter_mut().zip(&normal).for_each(|(x, v)| *x += rho * v / norm);

        let off_center: f64 = y.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        if off_center > r * r {
            continue;
        }
        let multiplicity = flats.iter().filter(|f| f.distance(&y) <= w).count().max(1);
        if multiplicity > 1 && rng.random::<f64>() * multiplicity as f64 >= 1.0 {
            continue;
        }
        data.extend(y.iter().map(|&v| T::cast(v)));
        labels.push(prop.tube as i64);
    }
    PointCloud::new(data, ambient)?.with_truth(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fit_flat_indices;

    #[test]
    fn case_parsing() {
        let s = SynthSpec::from_case("2x3in5", 1).unwrap();
        assert_eq!((s.ambient_dim, s.dims.clone()), (5, vec![2, 2, 2]));
        assert!(SynthSpec::from_case("2x3", 1).is_err());
        assert!(SynthSpec::from_case("5x2in4", 1).is_err());
    }

    #[test]
    fn outlier_count_is_fraction_of_total() {
        let mut s = SynthSpec::new(4, 2, 2, 0);
        s.outlier_fraction = 0.3;
        assert_eq!(s.outliers(), 214);
        s.outlier_fraction = 0.05;
        assert_eq!(s.outliers(), 26);
    }

    #[test]
    fn noiseless_inliers_lie_on_their_flats() {
        let mut s = SynthSpec::new(4, 2, 2, 3);
        s.noise_sigma = 0.0;
        s.affine = true;
        let h = generate_hybrid::<f64>(&s).unwrap();
        assert_eq!(h.cloud.len(), 500);
        for (p, &t) in h.cloud.points().zip(h.cloud.truth().unwrap()) {
            assert!(h.flats[t as usize].distance(p) < 1e-12);
        }
        let members: Vec<usize> = (0..250).collect();
        assert!(fit_flat_indices(&h.cloud, &members, 2, true).unwrap().residual < 1e-12);
    }

    #[test]
    fn outliers_fill_the_cube() {
        let mut s = SynthSpec::new(4, 2, 2, 5);
        s.outlier_fraction = 0.3;
        let h = generate_hybrid::<f64>(&s).unwrap();
        let truth = h.cloud.truth().unwrap();
        assert_eq!(truth.iter().filter(|&&t| t == OUTLIER).count(), 214);
        let max_in = h
            .cloud
            .points()
            .zip(truth)
            .filter(|(_, &t)| t >= 0)
            .map(|(p, _)| dot(p, p).sqrt())
            .fold(0.0, f64::max);
        for (p, _) in h.cloud.points().zip(truth).filter(|(_, &t)| t < 0) {
            assert!(p.iter().all(|v| v.abs() <= max_in));
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let s = SynthSpec::new(3, 1, 3, 9);
        assert_eq!(generate_hybrid::<f64>(&s).unwrap(), generate_hybrid::<f64>(&s).unwrap());
        let other = SynthSpec { seed: 10, ..s };
        assert_ne!(generate_hybrid::<f64>(&other).unwrap().cloud, generate_hybrid::<f64>(&SynthSpec::new(3, 1, 3, 9)).unwrap().cloud);
    }

    #[test]
    fn minimum_angle_is_respected() {
        let mut s = SynthSpec::new(5, 2, 4, 2);
        s.min_angle = Some(std::f64::consts::PI / 8.0);
        let h = generate_hybrid::<f64>(&s).unwrap();
        for i in 0..4 {
            for j in 0..i {
                assert!(principal_angles(&h.flats[i], &h.flats[j])[0] >= std::f64::consts::PI / 8.0 - 1e-12);
            }
        }
    }

    #[test]
    fn ball_mean_radius() {
        // E|u| = d / (d + 1) for the uniform d-ball
        let mut rng = stage_rng(1, 1);
        for d in 1..5 {
            let n = 20_000;
            let mean = (0..n)
                .map(|_| {
                    let u = unit_ball(&mut rng, d);
                    dot(&u, &u).sqrt()
                })
                .sum::<f64>()
                / n as f64;
            let expect = d as f64 / (d as f64 + 1.0);
            // sd of |u| is below 0.5, so 5 standard errors is under 0.02
            assert!((mean - expect).abs() < 0.02, "d={d}: {mean}");
        }
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    fn axes(w: f64) -> TubeMixture<f64> {
        TubeMixture::new(
            vec![
                Flat::coordinate(&[0], vec![0.0, 0.0]).unwrap(),
                Flat::coordinate(&[1], vec![0.0, 0.0]).unwrap(),
            ],
            w,
        )
        .unwrap()
    }

    #[test]
    fn thin_tube_samples_hug_the_flat() {
        let m = TubeMixture::new(vec![Flat::coordinate(&[0, 1], vec![0.0; 3]).unwrap()], 1e-6).unwrap();
        let pc: PointCloud<f64> = sample_tube_mixture(&m, 2000, &[0.3, 0.0, 0.0], 1.0, 4).unwrap();
        for p in pc.points() {
            assert!(p[2].abs() <= 1e-6);
            assert!(dot(p, p) - 0.6 * p[0] + 0.09 <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn symmetric_tubes_are_balanced() {
        let n = 10_000;
        let pc = sample_tube_mixture(&axes(0.05), n, &[0.0, 0.0], 1.0, 8).unwrap();
        let first = pc.truth().unwrap().iter().filter(|&&t| t == 0).count() as f64;
        assert!((first - n as f64 / 2.0).abs() <= 4.0 * (n as f64).sqrt());
        let c = [0.0, 0.0];
        assert!(pc.points().all(|p| dist(p, &c) <= 1.0));
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        crate::geometry::dist_sq(a, b).sqrt()
    }

    #[test]
    fn missed_support_is_an_error() {
        assert_eq!(
            sample_tube_mixture(&axes(0.1), 10, &[5.0, 5.0], 1.0, 0).unwrap_err(),
            Error::SupportMissed
        );
    }
}
