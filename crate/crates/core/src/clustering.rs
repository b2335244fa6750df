//! Labelings, Lloyd's K-means and the misclassification metric.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::geometry::{dist_sq, PointCloud};
use crate::rng::{stage, stage_rng};
use crate::scalar::Real;

/// Cluster assignment of `N` points into `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidParameter(format!("label {bad} is not below k = {k}")));
        }
        Ok(Self { labels, k })
    }

    /// Every point in cluster 0.
    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: 1,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.labels.iter().for_each(|&l| sizes[l] += 1);
        sizes
    }

    /// Point indices per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Applies `perm[old] = new` to every label.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        Self::new(self.labels.iter().map(|&l| perm[l]).collect(), perm.len().max(self.k))
    }
}

/// Outcome of a K-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    pub labeling: Labeling,
    pub centroids: Vec<Vec<T>>,
    /// Within-cluster sum of squares.
    pub wcss: T,
}

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_REL_TOL: f64 = 1e-9;

/// Best of `restarts` Lloyd runs (by within-cluster sum of squares).
pub fn kmeans<T: Real>(points: &PointCloud<T>, k: usize, restarts: usize, seed: u64) -> Result<Labeling> {
    kmeans_fit(points, k, restarts, seed).map(|f| f.labeling)
}

pub fn kmeans_fit<T: Real>(points: &PointCloud<T>, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit<T>> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InsufficientData {
            needed: k - 1,
            available: n,
        });
    }
    let mut rng = stage_rng(seed, stage::KMEANS);
    let mut best: Option<KMeansFit<T>> = None;
    for _ in 0..restarts.max(1) {
        let init: Vec<Vec<T>> = index::sample(&mut rng, n, k)
            .into_iter()
            .map(|i| points.point(i).to_vec())
            .collect();
        let fit = lloyd(points, init);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Lloyd iterations from the given centroids; clusters are renumbered by the
/// lexicographic order of their centroids so labels do not depend on the
/// initialization order.
pub fn lloyd<T: Real>(points: &PointCloud<T>, mut centroids: Vec<Vec<T>>) -> KMeansFit<T> {
    let k = centroids.len();
    let dim = points.dim();
    let mut labels = vec![0usize; points.len()];
    let mut prev = T::cast(f64::INFINITY);
    for _ in 0..KMEANS_MAX_ITER {
        let mut wcss = T::ZERO;
        for (label, p) in labels.iter_mut().zip(points.points()) {
            let (j, d) = nearest_centroid(p, &centroids);
            *label = j;
            wcss += d;
        }
        let mut sums = vec![vec![T::ZERO; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points.points()) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, &v)| *s += v);
        }
        for ((c, s), &m) in centroids.iter_mut().zip(sums).zip(&counts) {
            if m > 0 {
                let m = T::of_usize(m);
                c.iter_mut().zip(s).for_each(|(ci, si)| *ci = si / m);
            }
        }
        let converged = prev - wcss <= T::cast(KMEANS_REL_TOL) * wcss.max(T::EPSILON);
        prev = wcss;
        if converged {
            break;
        }
    }
    // final assignment against the updated centroids
    let mut wcss = T::ZERO;
    for (label, p) in labels.iter_mut().zip(points.points()) {
        let (j, d) = nearest_centroid(p, &centroids);
        *label = j;
        wcss += d;
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        centroids[a]
            .iter()
            .zip(&centroids[b])
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let labels = labels.into_iter().map(|l| rank[l]).collect();
    let centroids = order.iter().map(|&old| centroids[old].clone()).collect();
    KMeansFit {
        labeling: Labeling { labels, k },
        centroids,
        wcss,
    }
}

fn nearest_centroid<T: Real>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, dist_sq(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = dist_sq(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Confusion counts over inliers: `counts[pred][truth]`, padded to a square
/// matrix of side `max(k_pred, k_truth)`.
fn confusion(pred: &Labeling, truth: &[i64]) -> Result<(Vec<Vec<usize>>, usize)> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let k_truth = truth.iter().filter(|&&t| t >= 0).map(|&t| t as usize + 1).max().unwrap_or(0);
    let side = pred.k().max(k_truth);
    let mut counts = vec![vec![0usize; side]; side];
    let mut inliers = 0;
    for (&p, &t) in pred.labels().iter().zip(truth) {
        if t >= 0 {
            counts[p][t as usize] += 1;
            inliers += 1;
        }
    }
    if inliers == 0 {
        return Err(Error::NoInliers);
    }
    Ok((counts, inliers))
}

/// Permutation `perm[pred_label] = truth_label` maximizing agreement on the
/// inliers. Brute force up to 8 labels, Hungarian method above.
pub fn match_labels(pred: &Labeling, truth: &[i64]) -> Result<Vec<usize>> {
    let (counts, _) = confusion(pred, truth)?;
    Ok(if counts.len() <= 8 {
        brute_force_assignment(&counts)
    } else {
        hungarian_max(&counts)
    })
}

/// Percentage of inliers (truth label `>= 0`) misclassified under the best
/// relabeling of `pred`.
pub fn misclassification_rate(pred: &Labeling, truth: &[i64]) -> Result<f64> {
    let (counts, inliers) = confusion(pred, truth)?;
    let perm = match_labels(pred, truth)?;
    let agree: usize = perm.iter().enumerate().map(|(p, &t)| counts[p][t]).sum();
    Ok(100.0 * (inliers - agree) as f64 / inliers as f64)
}

/// Maximum-weight perfect matching by enumerating every permutation.
pub fn brute_force_assignment(weights: &[Vec<usize>]) -> Vec<usize> {
    let n = weights.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| weights[i][j]).sum::<usize>();
    let mut best = perm.clone();
    let mut best_score = score(&perm);
    while next_permutation(&mut perm) {
        let s = score(&perm);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&perm);
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Maximum-weight perfect matching via the O(n^3) Hungarian method
/// (shortest augmenting paths with potentials) on `max - w`.
pub fn hungarian_max(weights: &[Vec<usize>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let top = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| top - weights[i][j] as i64;
    // 1-based arrays; row 0 / column 0 are sentinels
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    assignment
}
