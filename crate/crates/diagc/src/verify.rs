//! Oracle suites behind `diagc verify`: each check recomputes a result by an
//! independent route (brute force, dense products, finite differences) and
//! compares it against the library.

use std::time::Instant;

use diagc_core::graphdata::{generate_synthetic, normalize};
use diagc_core::metrics;
use diagc_core::objectives::{kl_loss, soft_assign, target_distribution, ClusterHead};
use diagc_core::trainer::{loss_graph, GraphInputs, Model};
use diagc_core::{Activation, Matrix, ParamStore, SparseAdjacency, SyntheticSpec, Tape, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Outcome of one oracle suite.
#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Worst discrepancy seen (meaning depends on the suite).
    pub max_error: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub detail: String,
}

impl OracleResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {} cases, max error {:.3e} (tolerance {:.0e}), {:.2}s{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance,
            self.seconds,
            if self.detail.is_empty() { String::new() } else { format!(" ({})", self.detail) }
        )
    }
}

fn timed(name: &'static str, tolerance: f64, f: impl FnOnce() -> (usize, f64, bool, String)) -> OracleResult {
    let start = Instant::now();
    let (cases, max_error, passed, detail) = f();
    OracleResult {
        name,
        passed,
        cases,
        max_error,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    }
}

// ---------------------------------------------------------------- gradients

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_EPS: f64 = 1e-6;
/// Rounding error of one loss evaluation, in units of `f64::EPSILON * |L|`.
pub const LOSS_ROUNDOFF_ULPS: f64 = 16.0;

/// Central differences carry an absolute error of about
/// `ulps * EPSILON * |L| / eps`. Relative error is only meaningful above the
/// gradient magnitude at which that error reaches the tolerance.
pub fn roundoff_floor(loss: f64, eps: f64) -> f64 {
    LOSS_ROUNDOFF_ULPS * f64::EPSILON * loss.abs().max(1.0) / eps / GRAD_TOLERANCE
}

/// A tiny random problem with the full objective.
pub struct GradInstance {
    pub config: TrainConfig,
    pub inputs: GraphInputs,
    pub params: ParamStore,
    pub target: Matrix,
}

pub fn tiny_train_config(clusters: usize, alpha: f64, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        clusters,
        alpha,
        seed,
        kmeans_restarts: 2,
        ..TrainConfig::default()
    };
    cfg.encoder.hidden = vec![8, 4];
    cfg.encoder.activations = vec![Activation::Relu, Activation::Identity];
    cfg.encoder.mlp_widths = vec![6, 4];
    cfg.encoder.mlp_activations = vec![Activation::Relu, Activation::Identity];
    cfg.sir.widths = vec![5, 3];
    cfg.sir.activations = vec![Activation::Relu, Activation::Identity];
    cfg
}

/// N ∈ [8, 12], d = 5, V = 2, c ∈ {2, 3}, random α. Every parameter is
/// jittered after initialisation: zero biases under a dead ReLU row give an
/// exactly-zero row of `S`, where the floored cosine normalisation has a
/// slope of ~1e12 that no finite difference can resolve.
pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=12);
    let c = rng.random_range(2..=3);
    let spec = SyntheticSpec {
        feature_dim: 5,
        ..SyntheticSpec::planted(n, c, 2, rng.random_range(0.3..0.8), rng.random_range(0.0..0.2), 1.0, seed)
    };
    let data = generate_synthetic(&spec).expect("valid spec");
    let config = tiny_train_config(c, rng.random_range(0.05..1.0), seed);
    let inputs = GraphInputs::new(&data, false);
    let mut model = Model::init(&inputs, &config).expect("valid instance");
    let names: Vec<String> = model.params.names().map(String::from).collect();
    for name in names {
        let base = model.params.value(&name).expect("known");
        let value = Matrix::from_fn(base.rows(), base.cols(), |i, j| base.get(i, j) + rng.random_range(-0.1..0.1));
        model.params.set_value(&name, value).expect("same shape");
    }
    let mut target = None;
    let mut tape = Tape::new();
    loss_graph(&mut tape, &model.params, &config, &inputs, &mut target, true).expect("loss builds");
    GradInstance {
        config,
        params: model.params,
        target: target.expect("full variant computes a target"),
        inputs,
    }
}

impl GradInstance {
    pub fn loss(&self, store: &ParamStore) -> f64 {
        let mut tape = Tape::new();
        let mut target = Some(self.target.clone());
        let g = loss_graph(&mut tape, store, &self.config, &self.inputs, &mut target, false).expect("loss builds");
        tape.scalar(g.total)
    }

    pub fn analytic(&self) -> Vec<Matrix> {
        let mut store = self.params.clone();
        let mut tape = Tape::new();
        let mut target = Some(self.target.clone());
        let g = loss_graph(&mut tape, &store, &self.config, &self.inputs, &mut target, false).expect("loss builds");
        tape.backward(g.total, &mut store).expect("scalar loss");
        store.iter().map(|p| p.grad.clone().expect("filled by backward")).collect()
    }

    pub fn floor(&self, eps: f64) -> f64 {
        roundoff_floor(self.loss(&self.params), eps)
    }

    /// Central differences, one coordinate at a time.
    pub fn numeric(&self, eps: f64) -> Vec<Matrix> {
        let mut store = self.params.clone();
        let names: Vec<String> = store.names().map(String::from).collect();
        names
            .iter()
            .map(|name| {
                let base = store.value(name).expect("known").clone();
                let mut grad = Matrix::zeros(base.rows(), base.cols());
                for i in 0..base.rows() {
                    for j in 0..base.cols() {
                        let mut m = base.clone();
                        m.set(i, j, base.get(i, j) + eps);
                        store.set_value(name, m.clone()).expect("same shape");
                        let up = self.loss(&store);
                        m.set(i, j, base.get(i, j) - eps);
                        store.set_value(name, m).expect("same shape");
                        let down = self.loss(&store);
                        grad.set(i, j, (up - down) / (2.0 * eps));
                    }
                }
                store.set_value(name, base).expect("same shape");
                grad
            })
            .collect()
    }
}

/// Worst relative error and where it occurred.
/// Errors divide by `max(|analytic|, |numeric|, floor)`.
pub fn worst_relative_error(names: &[String], analytic: &[Matrix], numeric: &[Matrix], floor: f64) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for ((name, a), n) in names.iter().zip(analytic).zip(numeric) {
        for (k, (&x, &y)) in a.as_slice().iter().zip(n.as_slice()).enumerate() {
            let err = (x - y).abs() / x.abs().max(y.abs()).max(floor);
            if !(err <= worst.0) {
                worst = (err, format!("{name}[{k}]: analytic {x:.6e}, numeric {y:.6e}"));
            }
        }
    }
    worst
}

pub fn gradient_oracle(instances: usize, seed: u64) -> OracleResult {
    timed("full-loss gradients vs central differences", GRAD_TOLERANCE, || {
        let mut worst = (0.0, String::new());
        for k in 0..instances as u64 {
            let inst = grad_instance(seed.wrapping_add(k));
            let names: Vec<String> = inst.params.names().map(String::from).collect();
            let e = worst_relative_error(&names, &inst.analytic(), &inst.numeric(GRAD_EPS), inst.floor(GRAD_EPS));
            if !(e.0 <= worst.0) {
                worst = (e.0, format!("instance {k}: {}", e.1));
            }
        }
        (instances, worst.0, worst.0 < GRAD_TOLERANCE, worst.1)
    })
}

/// Negative control: flipping the sign of one parameter's analytic gradient
/// must make the comparison fail. Passes when the fault is detected.
pub fn sign_flip_fixture(seed: u64) -> OracleResult {
    timed("gradient oracle detects an injected sign error", GRAD_TOLERANCE, || {
        let inst = grad_instance(seed);
        let names: Vec<String> = inst.params.names().map(String::from).collect();
        let mut analytic = inst.analytic();
        let target = names.iter().position(|n| n == "encoder.w0").expect("encoder weight exists");
        analytic[target] = analytic[target].map(|x| -x);
        let (err, detail) = worst_relative_error(&names, &analytic, &inst.numeric(GRAD_EPS), inst.floor(GRAD_EPS));
        (1, err, err >= GRAD_TOLERANCE, detail)
    })
}

// ------------------------------------------------------------------ metrics

fn for_each_permutation(k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(v: &mut Vec<usize>, at: usize, f: &mut impl FnMut(&[usize])) {
        if at == v.len() {
            f(v);
            return;
        }
        for i in at..v.len() {
            v.swap(at, i);
            rec(v, at + 1, f);
            v.swap(at, i);
        }
    }
    rec(&mut (0..k).collect(), 0, f);
}

/// Best accuracy over every bijection between predicted and true ids.
pub fn exhaustive_accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let k = truth.iter().chain(pred).max().map_or(0, |m| m + 1);
    let mut best = 0;
    for_each_permutation(k, &mut |perm| {
        let hits = truth.iter().zip(pred).filter(|(t, p)| perm[**p] == **t).count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

/// ARI from counts over every node pair.
pub fn pair_enumeration_ari(truth: &[usize], pred: &[usize]) -> f64 {
    let (mut tp, mut fp, mut fn_, mut tn) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..truth.len() {
        for j in i + 1..truth.len() {
            match (truth[i] == truth[j], pred[i] == pred[j]) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
    }
    let den = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (tp * tn - fn_ * fp) / den
    }
}

/// NMI from probabilities, `2 I / (H(Y) + H(Y*))`.
pub fn entropy_nmi(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0.0; kp]; kt];
    let (mut pt, mut pp) = (vec![0.0; kt], vec![0.0; kp]);
    for (&t, &p) in truth.iter().zip(pred) {
        joint[t][p] += 1.0 / n;
        pt[t] += 1.0 / n;
        pp[p] += 1.0 / n;
    }
    let h = |ps: &[f64]| -ps.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    let mut mi = 0.0;
    for t in 0..kt {
        for p in 0..kp {
            if joint[t][p] > 0.0 {
                mi += joint[t][p] * (joint[t][p] / (pt[t] * pp[p])).ln();
            }
        }
    }
    let denom = h(&pt) + h(&pp);
    if denom == 0.0 {
        1.0
    } else {
        2.0 * mi / denom
    }
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, max_c: usize) -> Vec<usize> {
    let c = rng.random_range(1..=max_c);
    (0..n).map(|_| rng.random_range(0..c)).collect()
}

pub fn accuracy_oracle(cases: usize, seed: u64) -> OracleResult {
    timed("ACC vs exhaustive bijection search", 0.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = (0.0f64, String::new());
        for _ in 0..cases {
            let n = rng.random_range(1..=12);
            let truth = random_labels(&mut rng, n, 5);
            let pred = random_labels(&mut rng, n, 5);
            let got = metrics::accuracy(&truth, &pred).expect("valid labels");
            let err = (got - exhaustive_accuracy(&truth, &pred)).abs();
            if err > worst.0 {
                worst = (err, format!("{truth:?} vs {pred:?}"));
            }
        }
        (cases, worst.0, worst.0 == 0.0, worst.1)
    })
}

pub fn ari_oracle(cases: usize, seed: u64) -> OracleResult {
    timed("ARI vs pair enumeration", 1e-12, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let n = rng.random_range(2..=200);
            let truth = random_labels(&mut rng, n, 8);
            let pred = if rng.random_bool(0.3) {
                // Noisy copies exercise the high-agreement regime.
                truth.iter().map(|&t| if rng.random_bool(0.1) { rng.random_range(0..8) } else { t }).collect()
            } else {
                random_labels(&mut rng, n, 8)
            };
            let got = metrics::ari(&truth, &pred).expect("valid labels");
            worst = worst.max((got - pair_enumeration_ari(&truth, &pred)).abs());
        }
        (cases, worst, worst < 1e-12, String::new())
    })
}

pub fn nmi_oracle(cases: usize, seed: u64) -> OracleResult {
    timed("NMI exact cases and entropy formula", 1e-12, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut exact_ok = true;
        for _ in 0..cases {
            let n = rng.random_range(2..=60);
            let truth = random_labels(&mut rng, n, 6);
            let pred = random_labels(&mut rng, n, 6);
            let got = metrics::nmi(&truth, &pred).expect("valid labels");
            worst = worst.max((got - entropy_nmi(&truth, &pred).clamp(0.0, 1.0)).abs());
            exact_ok &= metrics::nmi(&truth, &truth).expect("valid labels") == 1.0;
            let c = rng.random_range(2..=5);
            let balanced: Vec<usize> = (0..c * rng.random_range(1..=10)).map(|i| i % c).collect();
            let constant = vec![0; balanced.len()];
            exact_ok &= metrics::nmi(&balanced, &constant).expect("valid labels") == 0.0;
        }
        let detail = if exact_ok { String::new() } else { "identical ≠ 1 or constant ≠ 0".into() };
        (cases, worst, exact_ok && worst < 1e-12, detail)
    })
}

// ------------------------------------------------------------ distributions

/// `q_ij ∝ (1 + ‖s_i − μ_j‖²)^{-1}` by direct loops (one degree of freedom).
pub fn direct_soft_assign(s: &Matrix, mu: &Matrix) -> Matrix {
    let mut q = Matrix::zeros(s.rows(), mu.rows());
    for i in 0..s.rows() {
        let mut total = 0.0;
        for j in 0..mu.rows() {
            let d: f64 = s.row(i).iter().zip(mu.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = 1.0 / (1.0 + d);
            q.set(i, j, k);
            total += k;
        }
        for j in 0..mu.rows() {
            q.set(i, j, q.get(i, j) / total);
        }
    }
    q
}

pub fn distribution_oracle(cases: usize, seed: u64) -> OracleResult {
    timed("Q/P row sums, KL sign and KL(Q‖Q)", 1e-9, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut row_err, mut q_err, mut min_kl, mut self_kl) = (0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
        for _ in 0..cases {
            let (n, d, c) = (rng.random_range(2..=20), rng.random_range(1..=6), rng.random_range(2..=6));
            let scale = rng.random_range(0.1..5.0);
            let s = Matrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale));
            let mu = Matrix::from_fn(c, d, |_, _| rng.random_range(-scale..scale));
            let mut tape = Tape::new();
            let st = tape.constant(s.clone());
            let head = ClusterHead {
                centroids: tape.constant(mu.clone()),
                degrees_of_freedom: 1.0,
            };
            let qt = soft_assign(&mut tape, st, &head).expect("valid shapes");
            let q = tape.value(qt).clone();
            let p = target_distribution(&q).expect("q is positive");
            for m in [&q, &p] {
                for i in 0..n {
                    row_err = row_err.max((m.row(i).iter().sum::<f64>() - 1.0).abs());
                }
            }
            q_err = q_err.max(q.max_abs_diff(&direct_soft_assign(&s, &mu)).unwrap_or(f64::INFINITY));
            let kl = kl_loss(&mut tape, &p, qt).expect("valid shapes");
            min_kl = min_kl.min(tape.scalar(kl));
            let kl_self = kl_loss(&mut tape, &q, qt).expect("valid shapes");
            self_kl = self_kl.max(tape.scalar(kl_self).abs());
        }
        let passed = row_err < 1e-9 && q_err < 1e-12 && min_kl >= 0.0 && self_kl < 1e-12;
        let detail = format!("min KL(P‖Q) {min_kl:.3e}, max |KL(Q‖Q)| {self_kl:.3e}, Q vs direct {q_err:.3e}");
        (cases, row_err, passed, detail)
    })
}

// ------------------------------------------------------------ normalization

/// `D^{-1/2}(Ã+I)D^{-1/2}` with explicit dense products.
pub fn dense_normalize(raw: &Matrix) -> Matrix {
    let n = raw.rows();
    let a = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { raw.get(i, j) });
    let d_inv_sqrt = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 / a.row(i).iter().sum::<f64>().sqrt()
        } else {
            0.0
        }
    });
    let product = |x: &Matrix, y: &Matrix| {
        Matrix::from_fn(n, n, |i, j| (0..n).map(|k| x.get(i, k) * y.get(k, j)).sum())
    };
    product(&product(&d_inv_sqrt, &a), &d_inv_sqrt)
}

pub fn normalization_oracle(cases: usize, seed: u64) -> OracleResult {
    timed("normalize vs dense D^-1/2 (A+I) D^-1/2", 1e-12, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut symmetric = true;
        for _ in 0..cases {
            let n = rng.random_range(1..=20);
            let p = rng.random_range(0.0..1.0);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random_bool(p) {
                        edges.push((i, j));
                    }
                }
            }
            let adj = SparseAdjacency::from_edges(n, edges).expect("valid edges");
            let got = normalize(&adj).to_dense();
            worst = worst.max(got.max_abs_diff(&dense_normalize(&adj.to_dense())).unwrap_or(f64::INFINITY));
            symmetric &= (0..n).all(|i| (0..n).all(|j| got.get(i, j) == got.get(j, i)));
        }
        let detail = if symmetric { String::new() } else { "asymmetric output".into() };
        (cases, worst, symmetric && worst < 1e-12, detail)
    })
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Vec<OracleResult> {
    vec![
        gradient_oracle(20, seed),
        sign_flip_fixture(seed),
        accuracy_oracle(1000, seed),
        ari_oracle(200, seed),
        nmi_oracle(200, seed),
        distribution_oracle(1000, seed),
        normalization_oracle(100, seed),
    ]
}
