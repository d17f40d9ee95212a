//! k-means++ seeding with Lloyd refinement.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::diffmath::Matrix;
use crate::rng;
use crate::{Error, Result};

pub const MAX_ROUNDS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    pub rounds: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best of `restarts` k-means++/Lloyd runs by inertia.
pub fn kmeans(points: &Matrix, c: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_restarts(points, c, seed, DEFAULT_RESTARTS)
}

pub fn kmeans_restarts(points: &Matrix, c: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    check(points, c)?;
    let mut rng = rng::rng_for(seed, rng::KMEANS);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_seeds(points, c, &mut rng)?;
        let run = lloyd(points, init, MAX_ROUNDS)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn check(points: &Matrix, c: usize) -> Result<()> {
    if c == 0 {
        return Err(Error::InvalidConfig("k-means needs c ≥ 1".into()));
    }
    if points.rows() < c {
        return Err(Error::TooFewPoints {
            need: c,
            got: points.rows(),
        });
    }
    if !points.is_finite() {
        let (row, col) = points.first_non_finite().unwrap_or((0, 0));
        return Err(Error::NonFinite { row, col });
    }
    Ok(())
}

/// k-means++ seeding: first centre uniform, then sampled proportional to the
/// squared distance to the nearest chosen centre.
pub fn plus_plus_seeds<R: Rng + ?Sized>(points: &Matrix, c: usize, rng: &mut R) -> Result<Matrix> {
    check(points, c)?;
    let n = points.rows();
    let mut chosen = Vec::with_capacity(c);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < c {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // Floating round-off can walk past the end; settle on the last
            // point with positive mass.
            if nearest[pick] == 0.0 {
                pick = nearest.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            pick
        } else {
            // All remaining points coincide with a centre.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    Ok(Matrix::from_fn(c, points.cols(), |k, j| points.get(chosen[k], j)))
}

/// Forgy seeding: `c` distinct points chosen uniformly.
pub fn random_seeds<R: Rng + ?Sized>(points: &Matrix, c: usize, rng: &mut R) -> Result<Matrix> {
    check(points, c)?;
    let picks = rand::seq::index::sample(rng, points.rows(), c);
    let picks: Vec<usize> = picks.into_iter().collect();
    Ok(Matrix::from_fn(c, points.cols(), |k, j| points.get(picks[k], j)))
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, label) in labels.iter_mut().enumerate() {
        let p = points.row(i);
        let mut best = (f64::INFINITY, 0);
        for k in 0..centroids.rows() {
            let d = sq_dist(p, centroids.row(k));
            if d < best.0 {
                best = (d, k);
            }
        }
        if *label != best.1 {
            *label = best.1;
            changed = true;
        }
    }
    changed
}

/// Lloyd iterations from the given centroids until assignments stop
/// changing or `max_rounds` is reached. An emptied cluster is re-seeded at
/// the point farthest from its current centroid.
pub fn lloyd(points: &Matrix, mut centroids: Matrix, max_rounds: usize) -> Result<KMeansResult> {
    let c = centroids.rows();
    check(points, c)?;
    if centroids.cols() != points.cols() {
        return Err(Error::ShapeMismatch {
            op: "lloyd",
            lhs: points.shape(),
            rhs: centroids.shape(),
        });
    }
    let (n, d) = points.shape();
    let mut labels = vec![usize::MAX; n];
    let mut rounds = 0;
    while rounds < max_rounds {
        if !assign(points, &centroids, &mut labels) {
            break;
        }
        rounds += 1;
        let mut sums = Matrix::zeros(c, d);
        let mut counts = vec![0usize; c];
        for (i, &k) in labels.iter().enumerate() {
            counts[k] += 1;
            for (s, x) in sums.row_mut(k).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                let inv = 1.0 / counts[k] as f64;
                for (dst, s) in centroids.row_mut(k).iter_mut().zip(sums.row(k)) {
                    *dst = s * inv;
                }
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(points.row(a), centroids.row(labels[a]));
                    let db = sq_dist(points.row(b), centroids.row(labels[b]));
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .unwrap_or(0);
            counts[labels[far]] -= 1;
            counts[k] = 1;
            labels[far] = k;
            centroids.row_mut(k).copy_from_slice(points.row(far));
        }
    }
    if rounds == max_rounds {
        assign(points, &centroids, &mut labels);
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &k)| sq_dist(points.row(i), centroids.row(k)))
        .sum();
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
        rounds,
    })
}
