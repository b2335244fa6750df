#![allow(dead_code)]

use flatcluster::{Flat, PointCloud};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_rotation(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| r.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

pub fn random_shift(dim: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed ^ 0x5eed);
    (0..dim).map(|_| r.random_range(-3.0..3.0)).collect()
}

pub fn apply(rot: &DMatrix<f64>, shift: &[f64], p: &[f64]) -> Vec<f64> {
    (0..p.len())
        .map(|i| (0..p.len()).map(|j| rot[(i, j)] * p[j]).sum::<f64>() + shift[i])
        .collect()
}

/// The cloud under `x -> rot x + shift`, truth labels carried along.
pub fn moved(cloud: &PointCloud<f64>, rot: &DMatrix<f64>, shift: &[f64]) -> PointCloud<f64> {
    let out = cloud.map_points(|p| apply(rot, shift, p)).unwrap();
    match cloud.truth() {
        Some(t) => out.with_truth(t.to_vec()).unwrap(),
        None => out,
    }
}

pub fn scaled(cloud: &PointCloud<f64>, c: f64) -> PointCloud<f64> {
    let out = cloud.map_points(|p| p.iter().map(|v| v * c).collect()).unwrap();
    match cloud.truth() {
        Some(t) => out.with_truth(t.to_vec()).unwrap(),
        None => out,
    }
}

/// Noisy samples of the given flats with uniform coordinates in `[-1, 1]^d`.
pub fn sample_flats(flats: &[Flat<f64>], per_flat: usize, sigma: f64, seed: u64) -> PointCloud<f64> {
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (label, f) in flats.iter().enumerate() {
        for _ in 0..per_flat {
            let mut p = f.offset().to_vec();
            for b in f.basis_vectors() {
                let c: f64 = r.random_range(-1.0..1.0);
                p.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
            }
            p.iter_mut().for_each(|x| *x += sigma * r.sample::<f64, _>(StandardNormal));
            rows.push(p);
            truth.push(label as i64);
        }
    }
    PointCloud::from_rows(&rows).unwrap().with_truth(truth).unwrap()
}

pub fn line(dir: &[f64], offset: &[f64]) -> Flat<f64> {
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    Flat::new(vec![dir.iter().map(|v| v / n).collect()], offset.to_vec(), true).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
