//! External clustering metrics: ACC (optimal label matching), F1, NMI, ARI.
//!
//! Labels may be arbitrary ids; both vectors are densified independently, so
//! every metric is invariant to relabelling either side.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Metric values plus the run metadata needed to aggregate reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub f1: f64,
    pub nmi: f64,
    pub ari: f64,
    pub n: usize,
    pub c: usize,
    pub seed: u64,
    pub variant: String,
    /// KL weight actually used (forced to 0 for the no-SC ablation).
    pub alpha: f64,
}

/// Seed, variant tag and effective KL weight attached to a report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMeta {
    pub seed: u64,
    pub variant: String,
    pub alpha: f64,
}

/// Maps arbitrary ids onto `0..c` in ascending id order.
pub fn densify(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        ids.entry(l).or_insert(0usize);
    }
    for (k, v) in ids.values_mut().enumerate() {
        *v = k;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

/// Counts `n_ij = |true class i ∩ predicted cluster j|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Contingency {
    pub counts: Vec<Vec<usize>>,
    pub true_sizes: Vec<usize>,
    pub pred_sizes: Vec<usize>,
    pub n: usize,
}

impl Contingency {
    pub fn new(y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::LengthMismatch {
                truth: y_true.len(),
                pred: y_pred.len(),
            });
        }
        if y_true.is_empty() {
            return Err(Error::EmptyLabels);
        }
        let (t, ct) = densify(y_true);
        let (p, cp) = densify(y_pred);
        let mut counts = vec![vec![0usize; cp]; ct];
        let mut true_sizes = vec![0; ct];
        let mut pred_sizes = vec![0; cp];
        for (&a, &b) in t.iter().zip(&p) {
            counts[a][b] += 1;
            true_sizes[a] += 1;
            pred_sizes[b] += 1;
        }
        Ok(Self {
            counts,
            true_sizes,
            pred_sizes,
            n: t.len(),
        })
    }

    /// For every predicted cluster, the true class it is matched to under the
    /// count-maximising bijection (`None` when there are more clusters than
    /// classes). Ties between equally accurate bijections go to the one with
    /// the larger summed per-pair F1, which keeps the choice independent of
    /// label order.
    pub fn best_matching(&self) -> Vec<Option<usize>> {
        const F1_SCALE: f64 = 1e9;
        let (ct, cp) = (self.true_sizes.len(), self.pred_sizes.len());
        let k = ct.max(cp);
        let tie_room = k as i128 * F1_SCALE as i128 + 1;
        let gain = |p: usize, t: usize| -> i128 {
            if p >= cp || t >= ct {
                return 0;
            }
            let n = self.counts[t][p];
            let f1 = 2.0 * n as f64 / (self.true_sizes[t] + self.pred_sizes[p]) as f64;
            n as i128 * tie_room + libm::round(f1 * F1_SCALE) as i128
        };
        let cost: Vec<Vec<i128>> = (0..k).map(|p| (0..k).map(|t| -gain(p, t)).collect()).collect();
        hungarian_min(&cost)
            .into_iter()
            .take(cp)
            .map(|t| (t < ct).then_some(t))
            .collect()
    }
}

/// Minimum-cost perfect assignment on a square matrix (shortest augmenting
/// path with potentials, O(k³)). Returns the column assigned to each row.
pub fn hungarian_min(cost: &[Vec<i128>]) -> Vec<usize> {
    let k = cost.len();
    const INF: i128 = i128::MAX / 4;
    let mut u = vec![0i128; k + 1];
    let mut v = vec![0i128; k + 1];
    let mut owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=k {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![INF; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = INF;
            let mut col1 = 0usize;
            for col in 1..=k {
                if used[col] {
                    continue;
                }
                let cur = cost[r - 1][col - 1] - u[r] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=k {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; k];
    for col in 1..=k {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Fraction of nodes whose predicted cluster maps onto their true class
/// under the best bijection.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = Contingency::new(y_true, y_pred)?;
    let matched: usize = table
        .best_matching()
        .iter()
        .enumerate()
        .filter_map(|(p, t)| t.map(|t| table.counts[t][p]))
        .sum();
    Ok(matched as f64 / table.n as f64)
}

/// Macro-averaged per-class F1 after the accuracy-optimal matching. Classes
/// with an empty precision or recall denominator contribute 0.
pub fn f1_score(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = Contingency::new(y_true, y_pred)?;
    let matching = table.best_matching();
    let ct = table.true_sizes.len();
    let mut cluster_of = vec![None; ct];
    for (p, t) in matching.iter().enumerate() {
        if let Some(t) = *t {
            cluster_of[t] = Some(p);
        }
    }
    let mut total = 0.0;
    for (t, cluster) in cluster_of.iter().enumerate() {
        let Some(p) = *cluster else { continue };
        let tp = table.counts[t][p] as f64;
        let predicted = table.pred_sizes[p] as f64;
        let actual = table.true_sizes[t] as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(total / ct as f64)
}

/// Pair counts over all `N(N−1)/2` node pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairCounts {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub tn: f64,
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

impl PairCounts {
    pub fn from_contingency(table: &Contingency) -> Self {
        let same_both: f64 = table.counts.iter().flatten().map(|&c| comb2(c)).sum();
        let same_true: f64 = table.true_sizes.iter().map(|&c| comb2(c)).sum();
        let same_pred: f64 = table.pred_sizes.iter().map(|&c| comb2(c)).sum();
        let total = comb2(table.n);
        Self {
            tp: same_both,
            fp: same_pred - same_both,
            fn_: same_true - same_both,
            tn: total - same_true - same_pred + same_both,
        }
    }

    pub fn rand_index(&self) -> f64 {
        (self.tp + self.tn) / (self.tp + self.fp + self.fn_ + self.tn)
    }
}

/// Pairwise F1: precision and recall over co-clustered node pairs.
pub fn pairwise_f1(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let pc = PairCounts::from_contingency(&Contingency::new(y_true, y_pred)?);
    let precision = if pc.tp + pc.fp > 0.0 { pc.tp / (pc.tp + pc.fp) } else { 0.0 };
    let recall = if pc.tp + pc.fn_ > 0.0 { pc.tp / (pc.tp + pc.fn_) } else { 0.0 };
    Ok(if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    })
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn nmi(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = Contingency::new(y_true, y_pred)?;
    let single_true = table.true_sizes.len() == 1;
    let single_pred = table.pred_sizes.len() == 1;
    if single_true || single_pred {
        // A single-cluster side has zero entropy and zero mutual information.
        return Ok(if single_true && single_pred { 1.0 } else { 0.0 });
    }
    let x_ln_x = |c: usize| if c == 0 { 0.0 } else { c as f64 * math::ln(c as f64) };
    let joint: f64 = table.counts.iter().flatten().map(|&c| x_ln_x(c)).sum();
    let a: f64 = table.true_sizes.iter().map(|&c| x_ln_x(c)).sum();
    let b: f64 = table.pred_sizes.iter().map(|&c| x_ln_x(c)).sum();
    let nf = table.n as f64;
    let ln_n = math::ln(nf);
    let mi = (joint - a - b) / nf + ln_n;
    let h_true = ln_n - a / nf;
    let h_pred = ln_n - b / nf;
    Ok((2.0 * mi / (h_true + h_pred)).clamp(0.0, 1.0))
}

/// Adjusted Rand index from the contingency margins.
pub fn ari(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = Contingency::new(y_true, y_pred)?;
    let index: f64 = table.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_true: f64 = table.true_sizes.iter().map(|&c| comb2(c)).sum();
    let sum_pred: f64 = table.pred_sizes.iter().map(|&c| comb2(c)).sum();
    let total = comb2(table.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_true * sum_pred / total;
    let max = (sum_true + sum_pred) / 2.0;
    if max == expected {
        // Both partitions trivial (all singletons or one block) and equal.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

pub fn evaluate(y_true: &[usize], y_pred: &[usize], meta: RunMeta) -> Result<MetricsReport> {
    Ok(MetricsReport {
        acc: accuracy(y_true, y_pred)?,
        f1: f1_score(y_true, y_pred)?,
        nmi: nmi(y_true, y_pred)?,
        ari: ari(y_true, y_pred)?,
        n: y_true.len(),
        c: densify(y_true).1,
        seed: meta.seed,
        variant: meta.variant,
        alpha: meta.alpha,
    })
}
