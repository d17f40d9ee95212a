//! Loss terms: mutual-information maximisation between each view embedding
//! and the fused representation, specific-information reconstruction of the
//! adjacency, and the self-supervised clustering head.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diffmath::{Activation, Matrix, Tape, Tensor};
use crate::encoder::ge_forward;
use crate::graphdata::SparseAdjacency;
use crate::math;
use crate::{Error, Result};

/// Row norms are floored at this value before dividing.
pub const NORM_FLOOR: f64 = 1e-12;

/// Decoder stack for specific-information reconstruction. `widths` are the
/// per-layer output widths; the input width is the encoder's `d_e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirConfig {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            widths: vec![64, 64, 32],
            activations: vec![Activation::Relu, Activation::Relu, Activation::Identity],
        }
    }
}

impl SirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::InvalidConfig("SIR decoder needs at least one layer".into()));
        }
        if self.widths.len() != self.activations.len() {
            return Err(Error::InvalidConfig(format!(
                "{} SIR widths but {} activations",
                self.widths.len(),
                self.activations.len()
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidConfig("SIR widths must be positive".into()));
        }
        Ok(())
    }
}

/// Student's-t clustering head over trainable centroids `μ` (`c × d_S`).
#[derive(Clone, Copy, Debug)]
pub struct ClusterHead {
    pub centroids: Tensor,
    pub degrees_of_freedom: f64,
}

impl ClusterHead {
    pub fn clusters(&self) -> usize {
        self.centroids.rows()
    }
}

/// Divides every row by its (floored) Euclidean norm.
pub fn normalize_rows(tape: &mut Tape<'_>, t: Tensor) -> Result<Tensor> {
    let sq = tape.mul(t, t)?;
    let sums = tape.row_sum(sq);
    let floored = tape.clamp_min(sums, NORM_FLOOR * NORM_FLOOR);
    let inv = tape.powf(floored, -0.5)?;
    tape.mul_col(t, inv)
}

/// Mutual-information loss `−Σ_v I(H^v, S)`.
///
/// `I(H, S) = (1/N) Σ_j [sim(h_j, s_j) − ln Σ_{j'≠j} exp(sim(h_j, s_{j'}))]`
/// with cosine similarity divided by `temperature`.
pub fn mim_loss(tape: &mut Tape<'_>, hs: &[Tensor], s: Tensor, temperature: f64) -> Result<Tensor> {
    if s.rows() < 2 {
        return Err(Error::TooFewPoints { need: 2, got: s.rows() });
    }
    if hs.is_empty() {
        return Err(Error::InvalidConfig("mutual information needs at least one view".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    let sn = normalize_rows(tape, s)?;
    let sn_t = tape.transpose(sn);
    let mut total: Option<Tensor> = None;
    for &h in hs {
        if h.shape() != s.shape() {
            return Err(Error::ShapeMismatch {
                op: "mim_loss",
                lhs: h.shape(),
                rhs: s.shape(),
            });
        }
        let hn = normalize_rows(tape, h)?;
        let mut sim = tape.matmul(hn, sn_t)?;
        if temperature != 1.0 {
            sim = tape.scale(sim, 1.0 / temperature);
        }
        let positive = tape.diag(sim)?;
        let negative = tape.row_logsumexp(sim, true)?;
        let per_node = tape.sub(positive, negative)?;
        let info = tape.mean(per_node);
        total = Some(match total {
            Some(acc) => tape.add(acc, info)?,
            None => info,
        });
    }
    Ok(tape.scale(total.expect("hs is non-empty"), -1.0))
}

/// `σ(Z Zᵀ)`.
pub fn inner_product_decoder(tape: &mut Tape<'_>, z: Tensor) -> Result<Tensor> {
    let zt = tape.transpose(z);
    let gram = tape.matmul(z, zt)?;
    Ok(tape.sigmoid(gram))
}

/// View-specific reconstruction `Â_s = σ(R_r R_rᵀ)` where
/// `R_l = σ_l(A R_{l−1} θ_l)` and `R_0 = H`.
pub fn sir_forward<'g>(
    tape: &mut Tape<'g>,
    view: &'g SparseAdjacency,
    h: Tensor,
    thetas: &[Tensor],
    activations: &[Activation],
) -> Result<Tensor> {
    let r = ge_forward(tape, view, h, thetas, activations)?;
    inner_product_decoder(tape, r)
}

/// `Σ_v ‖A^v − (σ(H^v H^vᵀ) + Â_s^v)‖_F²`; without `specific` the consensus
/// term alone reconstructs each view.
pub fn recon_loss(
    tape: &mut Tape<'_>,
    targets: &[Tensor],
    hs: &[Tensor],
    specific: Option<&[Tensor]>,
) -> Result<Tensor> {
    if targets.len() != hs.len() || specific.is_some_and(|s| s.len() != hs.len()) || hs.is_empty() {
        return Err(Error::InvalidConfig("one target and one embedding per view".into()));
    }
    let mut total: Option<Tensor> = None;
    for (v, (&target, &h)) in targets.iter().zip(hs).enumerate() {
        if target.shape() != (h.rows(), h.rows()) {
            return Err(Error::ShapeMismatch {
                op: "recon_loss",
                lhs: target.shape(),
                rhs: (h.rows(), h.rows()),
            });
        }
        let mut rec = inner_product_decoder(tape, h)?;
        if let Some(s) = specific {
            rec = tape.add(rec, s[v])?;
        }
        let resid = tape.sub(target, rec)?;
        let term = tape.frobenius_sq(resid);
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one view"))
}

/// Student's-t soft assignment
/// `q_ij ∝ (1 + ‖s_i − μ_j‖²)^{−(o+1)/2}`, rows normalised.
pub fn soft_assign(tape: &mut Tape<'_>, s: Tensor, head: &ClusterHead) -> Result<Tensor> {
    if head.clusters() < 2 {
        return Err(Error::InvalidConfig("clustering head needs c ≥ 2".into()));
    }
    if !(head.degrees_of_freedom > 0.0) {
        return Err(Error::InvalidConfig("degrees of freedom must be positive".into()));
    }
    let d = tape.pairwise_sq_dist(s, head.centroids)?;
    let shifted = tape.add_scalar(d, 1.0);
    let kernel = tape.powf(shifted, -(head.degrees_of_freedom + 1.0) / 2.0)?;
    let sums = tape.row_sum(kernel);
    let inv = tape.powf(sums, -1.0)?;
    tape.mul_col(kernel, inv)
}

/// Sharpened target `p_ij ∝ q_ij² / f_j` with `f_j = Σ_i q_ij`. Plain values:
/// the target is held constant during backpropagation.
pub fn target_distribution(q: &Matrix) -> Result<Matrix> {
    let (n, c) = q.shape();
    let mut freq = vec![0.0; c];
    for i in 0..n {
        for (f, x) in freq.iter_mut().zip(q.row(i)) {
            *f += x;
        }
    }
    if let Some(j) = freq.iter().position(|&f| !(f > 0.0)) {
        return Err(Error::EmptyCluster(j));
    }
    let mut p = Matrix::zeros(n, c);
    for i in 0..n {
        let row = p.row_mut(i);
        for (j, x) in q.row(i).iter().enumerate() {
            row[j] = x * x / freq[j];
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
    }
    Ok(p)
}

/// `KL(P‖Q) = Σ p log(p/q)` with `0·log 0 = 0`; gradient flows into `q` only.
pub fn kl_loss(tape: &mut Tape<'_>, p: &Matrix, q: Tensor) -> Result<Tensor> {
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch {
            op: "kl_loss",
            lhs: p.shape(),
            rhs: q.shape(),
        });
    }
    let entropy_term: f64 = p
        .as_slice()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * math::ln(x))
        .sum();
    let log_q = tape.log(q)?;
    let target = tape.constant(p.clone());
    let weighted = tape.mul(target, log_q)?;
    let cross = tape.sum(weighted);
    let neg = tape.scale(cross, -1.0);
    Ok(tape.add_scalar(neg, entropy_term))
}

/// `L = L_I + L_R + α·L_KL`; a missing KL term counts as zero.
pub fn total_loss(
    tape: &mut Tape<'_>,
    mim: Option<Tensor>,
    recon: Tensor,
    kl: Option<Tensor>,
    alpha: f64,
) -> Result<Tensor> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidConfig(format!("alpha must be non-negative, got {alpha}")));
    }
    let mut total = recon;
    if let Some(m) = mim {
        total = tape.add(total, m)?;
    }
    if let Some(k) = kl {
        let weighted = tape.scale(k, alpha);
        total = tape.add(total, weighted)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::{finite_difference_check, ParamStore};
    use crate::graphdata::normalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
        dot / (na * nb)
    }

    /// Double loop over the definition of `I(H, S)`.
    fn mim_oracle(hs: &[Matrix], s: &Matrix) -> f64 {
        let n = s.rows();
        let mut total = 0.0;
        for h in hs {
            let mut info = 0.0;
            for j in 0..n {
                let pos = cosine(h.row(j), s.row(j)).exp();
                let neg: f64 = (0..n).filter(|&k| k != j).map(|k| cosine(h.row(j), s.row(k)).exp()).sum();
                info += (pos / neg).ln();
            }
            total += info / n as f64;
        }
        -total
    }

    fn mim_value(hs: &[Matrix], s: &Matrix) -> f64 {
        let mut tape = Tape::new();
        let ht: Vec<_> = hs.iter().map(|h| tape.constant(h.clone())).collect();
        let st = tape.constant(s.clone());
        let l = mim_loss(&mut tape, &ht, st, 1.0).unwrap();
        tape.scalar(l)
    }

    #[test]
    fn mim_hand_case() {
        let h = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!((mim_value(std::slice::from_ref(&h), &h) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn mim_identical_rows_is_finite() {
        let s = Matrix::filled(4, 3, 0.7);
        let h = Matrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64);
        assert!(mim_value(&[h], &s).is_finite());
        let dead = Matrix::zeros(4, 3);
        assert!(mim_value(std::slice::from_ref(&dead), &dead).is_finite());
    }

    #[test]
    fn mim_matches_brute_force_and_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.random_range(2..12);
            let hs = [rand_matrix(n, 4, &mut rng), rand_matrix(n, 4, &mut rng)];
            let s = rand_matrix(n, 4, &mut rng);
            let got = mim_value(&hs, &s);
            assert!((got - mim_oracle(&hs, &s)).abs() < 1e-10);

            let scale_rows = |m: &Matrix, rng: &mut ChaCha8Rng| {
                let k: Vec<f64> = (0..m.rows()).map(|_| rng.random_range(0.1..10.0)).collect();
                Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) * k[i])
            };
            let hs2 = [scale_rows(&hs[0], &mut rng), scale_rows(&hs[1], &mut rng)];
            let s2 = scale_rows(&s, &mut rng);
            assert!((mim_value(&hs2, &s2) - got).abs() < 1e-9);
        }
    }

    #[test]
    fn mim_needs_two_nodes() {
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::filled(1, 2, 1.0));
        assert!(matches!(mim_loss(&mut tape, &[h], h, 1.0), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn sir_zero_weights_give_half() {
        let a = normalize(&SparseAdjacency::from_edges(4, [(0, 1), (2, 3)]).unwrap());
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::from_fn(4, 3, |i, j| (i * j) as f64 + 0.5));
        let t1 = tape.constant(Matrix::zeros(3, 3));
        let t2 = tape.constant(Matrix::zeros(3, 2));
        let out = sir_forward(&mut tape, &a, h, &[t1, t2], &[Activation::Relu, Activation::Identity]).unwrap();
        assert_eq!(tape.value(out), &Matrix::filled(4, 4, 0.5));
    }

    #[test]
    fn sir_single_node() {
        let a = normalize(&SparseAdjacency::from_edges(1, []).unwrap());
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::from_rows(&[[0.3, -0.4]]));
        let t = tape.constant(Matrix::identity(2));
        let out = sir_forward(&mut tape, &a, h, &[t], &[Activation::Identity]).unwrap();
        assert!((tape.scalar(out) - crate::math::sigmoid(0.25)).abs() < 1e-15);
    }

    #[test]
    fn sir_matches_dense_unrolled_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 9;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.4 {
                    edges.push((i, j));
                }
            }
        }
        let a = normalize(&SparseAdjacency::from_edges(n, edges).unwrap());
        let dense = a.to_dense();
        let h = rand_matrix(n, 4, &mut rng);
        let thetas = [rand_matrix(4, 5, &mut rng), rand_matrix(5, 5, &mut rng), rand_matrix(5, 3, &mut rng)];
        let acts = [Activation::Relu, Activation::Relu, Activation::Identity];
        let mut r = h.clone();
        for (t, act) in thetas.iter().zip(&acts) {
            let ar = Matrix::from_fn(n, r.cols(), |i, j| (0..n).map(|k| dense.get(i, k) * r.get(k, j)).sum());
            r = Matrix::from_fn(n, t.cols(), |i, j| {
                act.apply((0..t.rows()).map(|k| ar.get(i, k) * t.get(k, j)).sum())
            });
        }
        let want = Matrix::from_fn(n, n, |i, j| {
            let dot: f64 = r.row(i).iter().zip(r.row(j)).map(|(x, y)| x * y).sum();
            1.0 / (1.0 + (-dot).exp())
        });
        let mut tape = Tape::new();
        let ht = tape.constant(h);
        let tt: Vec<_> = thetas.iter().map(|t| tape.constant(t.clone())).collect();
        let out = sir_forward(&mut tape, &a, ht, &tt, &acts).unwrap();
        assert!(tape.value(out).max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn recon_hand_cases() {
        let mut tape = Tape::new();
        let target = tape.constant(Matrix::scalar(1.0));
        let h = tape.constant(Matrix::zeros(1, 2));
        let spec = tape.constant(Matrix::scalar(0.5));
        let l = recon_loss(&mut tape, &[target], &[h], Some(&[spec])).unwrap();
        assert_eq!(tape.scalar(l), 0.0);

        // Target built to equal the reconstruction exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hm = rand_matrix(5, 3, &mut rng);
        let mut t2 = Tape::new();
        let h2 = t2.constant(hm.clone());
        let cons = inner_product_decoder(&mut t2, h2).unwrap();
        let exact = t2.constant(t2.value(cons).clone());
        let l2 = recon_loss(&mut t2, &[exact], &[h2], None).unwrap();
        assert!(t2.scalar(l2) < 1e-24);
    }

    #[test]
    fn recon_matches_entrywise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 7;
        let targets = [rand_matrix(n, n, &mut rng), rand_matrix(n, n, &mut rng)];
        let hs = [rand_matrix(n, 3, &mut rng), rand_matrix(n, 3, &mut rng)];
        let specs = [rand_matrix(n, n, &mut rng), rand_matrix(n, n, &mut rng)];
        let mut want = 0.0;
        for v in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = hs[v].row(i).iter().zip(hs[v].row(j)).map(|(a, b)| a * b).sum();
                    let rec = 1.0 / (1.0 + (-dot).exp()) + specs[v].get(i, j);
                    want += (targets[v].get(i, j) - rec).powi(2);
                }
            }
        }
        let mut tape = Tape::new();
        let tt: Vec<_> = targets.iter().map(|m| tape.constant(m.clone())).collect();
        let ht: Vec<_> = hs.iter().map(|m| tape.constant(m.clone())).collect();
        let st: Vec<_> = specs.iter().map(|m| tape.constant(m.clone())).collect();
        let l = recon_loss(&mut tape, &tt, &ht, Some(&st)).unwrap();
        assert!((tape.scalar(l) - want).abs() < 1e-10);
    }

    fn q_value(s: &Matrix, mu: &Matrix, o: f64) -> Matrix {
        let mut tape = Tape::new();
        let st = tape.constant(s.clone());
        let head = ClusterHead {
            centroids: tape.constant(mu.clone()),
            degrees_of_freedom: o,
        };
        let q = soft_assign(&mut tape, st, &head).unwrap();
        tape.value(q).clone()
    }

    #[test]
    fn soft_assign_hand_cases() {
        let q = q_value(&Matrix::from_rows(&[[0.0, 0.0]]), &Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]), 1.0);
        assert!(q.max_abs_diff(&Matrix::from_rows(&[[2.0 / 3.0, 1.0 / 3.0]])).unwrap() < 1e-15);

        let mu = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]);
        let q = q_value(&Matrix::from_rows(&[[0.0, 0.0]]), &mu, 1.0);
        assert!(q.max_abs_diff(&Matrix::filled(1, 4, 0.25)).unwrap() < 1e-15);
    }

    #[test]
    fn soft_assign_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for o in [1.0, 2.5] {
            let s = rand_matrix(10, 3, &mut rng);
            let mu = rand_matrix(4, 3, &mut rng);
            let got = q_value(&s, &mu, o);
            let kernel = |i: usize, j: usize| {
                let d: f64 = s.row(i).iter().zip(mu.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                (1.0 + d).powf(-(o + 1.0) / 2.0)
            };
            let want = Matrix::from_fn(10, 4, |i, j| kernel(i, j) / (0..4).map(|k| kernel(i, k)).sum::<f64>());
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
        }
    }

    #[test]
    fn target_distribution_cases() {
        let q = Matrix::from_rows(&[[0.8, 0.2], [0.6, 0.4]]);
        let p = target_distribution(&q).unwrap();
        let want = Matrix::from_rows(&[[48.0 / 55.0, 7.0 / 55.0], [27.0 / 55.0, 28.0 / 55.0]]);
        assert!(p.max_abs_diff(&want).unwrap() < 1e-12);

        let uniform = Matrix::filled(3, 3, 1.0 / 3.0);
        assert!(target_distribution(&uniform).unwrap().max_abs_diff(&uniform).unwrap() < 1e-15);

        let onehot = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let p1 = target_distribution(&onehot).unwrap();
        assert_eq!(p1, onehot);
        assert_eq!(target_distribution(&p1).unwrap(), onehot);

        let empty = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(target_distribution(&empty), Err(Error::EmptyCluster(1)));
    }

    fn kl_value(p: &Matrix, q: &Matrix) -> Result<f64> {
        let mut tape = Tape::new();
        let qt = tape.constant(q.clone());
        let l = kl_loss(&mut tape, p, qt)?;
        Ok(tape.scalar(l))
    }

    #[test]
    fn kl_cases() {
        let q = Matrix::from_rows(&[[0.3, 0.7], [0.5, 0.5]]);
        assert!(kl_value(&q, &q).unwrap().abs() < 1e-15);
        let got = kl_value(&Matrix::from_rows(&[[1.0, 0.0]]), &Matrix::from_rows(&[[0.5, 0.5]])).unwrap();
        assert!((got - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(
            kl_value(&Matrix::from_rows(&[[1.0, 0.0]]), &Matrix::from_rows(&[[1.0, 0.0]])),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let stochastic = |rng: &mut ChaCha8Rng| {
            let raw = Matrix::from_fn(3, 4, |_, _| rng.random_range(0.01..1.0));
            Matrix::from_fn(3, 4, |i, j| raw.get(i, j) / raw.row(i).iter().sum::<f64>())
        };
        for _ in 0..1000 {
            let (p, q) = (stochastic(&mut rng), stochastic(&mut rng));
            assert!(kl_value(&p, &q).unwrap() >= -1e-15);
        }
    }

    #[test]
    fn total_loss_arithmetic() {
        let mut tape = Tape::new();
        let li = tape.constant(Matrix::scalar(-1.0));
        let lr = tape.constant(Matrix::scalar(2.0));
        let lk = tape.constant(Matrix::scalar(0.5));
        let l = total_loss(&mut tape, Some(li), lr, Some(lk), 0.01).unwrap();
        assert!((tape.scalar(l) - 1.005).abs() < 1e-15);
        let l0 = total_loss(&mut tape, Some(li), lr, Some(lk), 0.0).unwrap();
        assert_eq!(tape.scalar(l0), 1.0);
        let z = tape.constant(Matrix::scalar(0.0));
        let lz = total_loss(&mut tape, Some(z), z, Some(z), 0.3).unwrap();
        assert_eq!(tape.scalar(lz), 0.0);
        assert!(total_loss(&mut tape, None, lr, None, -1.0).is_err());
    }

    #[test]
    fn each_term_passes_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 6;
        let a = normalize(&SparseAdjacency::from_edges(n, [(0, 1), (1, 2), (3, 4), (4, 5), (2, 5)]).unwrap());
        let target = a.to_dense();
        let mut store = ParamStore::new();
        store.insert("h1", rand_matrix(n, 3, &mut rng)).unwrap();
        store.insert("h2", rand_matrix(n, 3, &mut rng)).unwrap();
        store.insert("s", rand_matrix(n, 3, &mut rng)).unwrap();
        store.insert("theta", rand_matrix(3, 2, &mut rng)).unwrap();
        store.insert("mu", rand_matrix(2, 3, &mut rng)).unwrap();
        let q0 = q_value(store.value("s").unwrap(), store.value("mu").unwrap(), 1.0);
        let p = target_distribution(&q0).unwrap();

        let report = finite_difference_check(&mut store, 1e-5, |st| {
            let mut tape = Tape::new();
            let h1 = tape.param(st, "h1")?;
            let h2 = tape.param(st, "h2")?;
            let s = tape.param(st, "s")?;
            let theta = tape.param(st, "theta")?;
            let mu = tape.param(st, "mu")?;
            let li = mim_loss(&mut tape, &[h1, h2], s, 0.5)?;
            let spec = sir_forward(&mut tape, &a, h1, &[theta], &[Activation::Identity])?;
            let t = tape.constant(target.clone());
            let lr = recon_loss(&mut tape, &[t], &[h1], Some(&[spec]))?;
            let q = soft_assign(&mut tape, s, &ClusterHead { centroids: mu, degrees_of_freedom: 1.5 })?;
            let lk = kl_loss(&mut tape, &p, q)?;
            let l = total_loss(&mut tape, Some(li), lr, Some(lk), 0.7)?;
            Ok((tape, l))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
