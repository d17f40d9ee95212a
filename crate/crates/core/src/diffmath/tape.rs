use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::matrix::gemm_acc;
use super::{Matrix, ParamStore};
use crate::graphdata::SparseAdjacency;
use crate::math;
use crate::{Error, Result};

/// Inputs below this are clamped before `ln`.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`]. Cheap to copy; carries its shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn rows(self) -> usize {
        self.rows
    }

    pub fn cols(self) -> usize {
        self.cols
    }

    pub fn shape(self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    #[default]
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // `f64::max` would map NaN to 0 and hide a diverged layer.
            Activation::Relu => if x < 0.0 { 0.0 } else { x },
            Activation::Sigmoid => math::sigmoid(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug)]
enum Op<'g> {
    Leaf,
    Param,
    MatMul(Tensor, Tensor),
    Spmm(&'g SparseAdjacency, Tensor),
    Transpose(Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    AddRow(Tensor, Tensor),
    MulCol(Tensor, Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor),
    Act(Tensor, Activation),
    Log(Tensor),
    Powf(Tensor, f64),
    ClampMin(Tensor, f64),
    RowSum(Tensor),
    Sum(Tensor),
    FrobeniusSq(Tensor),
    ConcatCols(Vec<Tensor>),
    PairwiseSqDist(Tensor, Tensor),
    RowLogSumExp(Tensor, bool),
    Diag(Tensor),
}

struct Node<'g> {
    value: Matrix,
    op: Op<'g>,
    needs_grad: bool,
}

/// Records one forward pass for reverse-mode differentiation.
///
/// `'g` is the lifetime of the sparse adjacencies referenced by `spmm`.
#[derive(Default)]
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
    params: BTreeMap<usize, Tensor>,
}

fn mismatch(op: &'static str, a: Tensor, b: Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op<'g>, needs_grad: bool) -> Tensor {
        let t = Tensor {
            id: self.nodes.len(),
            rows: value.rows(),
            cols: value.cols(),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        t
    }

    fn needs(&self, t: Tensor) -> bool {
        self.nodes[t.id].needs_grad
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.id].value
    }

    /// Value of a 1×1 tensor.
    pub fn scalar(&self, t: Tensor) -> f64 {
        self.nodes[t.id].value.get(0, 0)
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.needs(t)
    }

    /// A constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.push(value, Op::Leaf, false)
    }

    /// Copies a parameter onto the tape. Registering the same parameter twice
    /// returns the same node, so shared weights accumulate one gradient.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Tensor> {
        let id = store.id(name)?;
        if let Some(&t) = self.params.get(&id) {
            return Ok(t);
        }
        let t = self.push(store.by_id(id).value.clone(), Op::Param, true);
        self.params.insert(id, t);
        Ok(t)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(mismatch("matmul", a, b));
        }
        let mut out = Matrix::zeros(a.rows, b.cols);
        gemm_acc(self.value(a), false, self.value(b), false, &mut out);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Sparse-times-dense product; the adjacency is a constant.
    pub fn spmm(&mut self, adj: &'g SparseAdjacency, b: Tensor) -> Result<Tensor> {
        if adj.n() != b.rows {
            return Err(Error::ShapeMismatch {
                op: "spmm",
                lhs: (adj.n(), adj.n()),
                rhs: b.shape(),
            });
        }
        let out = adj.spmm(self.value(b));
        let ng = self.needs(b);
        Ok(self.push(out, Op::Spmm(adj, b), ng))
    }

    pub fn transpose(&mut self, a: Tensor) -> Tensor {
        let out = self.value(a).transpose();
        let ng = self.needs(a);
        self.push(out, Op::Transpose(a), ng)
    }

    fn zip(&mut self, a: Tensor, b: Tensor, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if a.shape() != b.shape() {
            return Err(mismatch(name, a, b));
        }
        let (va, vb) = (self.value(a).as_slice(), self.value(b).as_slice());
        let data = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(a.rows, a.cols, data)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// `a + 1·row` where `row` is `1 × a.cols`.
    pub fn add_row(&mut self, a: Tensor, row: Tensor) -> Result<Tensor> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(mismatch("add_row", a, row));
        }
        let r = self.value(row).as_slice().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            for (x, y) in out.row_mut(i).iter_mut().zip(&r) {
                *x += y;
            }
        }
        let ng = self.needs(a) || self.needs(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    /// Scales row `i` of `a` by `col[i]` where `col` is `a.rows × 1`.
    pub fn mul_col(&mut self, a: Tensor, col: Tensor) -> Result<Tensor> {
        if col.cols != 1 || col.rows != a.rows {
            return Err(mismatch("mul_col", a, col));
        }
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            let s = self.nodes[col.id].value.get(i, 0);
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let ng = self.needs(a) || self.needs(col);
        Ok(self.push(out, Op::MulCol(a, col), ng))
    }

    pub fn scale(&mut self, a: Tensor, s: f64) -> Tensor {
        let out = self.value(a).map(|x| s * x);
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Tensor, s: f64) -> Tensor {
        let out = self.value(a).map(|x| x + s);
        let ng = self.needs(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    pub fn activation(&mut self, a: Tensor, kind: Activation) -> Tensor {
        if kind == Activation::Identity {
            return a;
        }
        let out = self.value(a).map(|x| kind.apply(x));
        let ng = self.needs(a);
        self.push(out, Op::Act(a, kind), ng)
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        self.activation(a, Activation::Relu)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        self.activation(a, Activation::Sigmoid)
    }

    /// Natural log, computed as `ln(max(x, 1e-12))`. Non-positive inputs are
    /// rejected.
    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        if let Some(&bad) = self.value(a).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain { op: "log", value: bad });
        }
        let out = self.value(a).map(|x| math::ln(x.max(LOG_FLOOR)));
        let ng = self.needs(a);
        Ok(self.push(out, Op::Log(a), ng))
    }

    /// Elementwise `x^p`. Non-integer exponents need non-negative inputs.
    pub fn powf(&mut self, a: Tensor, p: f64) -> Result<Tensor> {
        let integral = p == libm::trunc(p);
        if !integral {
            if let Some(&bad) = self.value(a).as_slice().iter().find(|&&x| x < 0.0) {
                return Err(Error::Domain { op: "powf", value: bad });
            }
        }
        let out = self.value(a).map(|x| math::powf(x, p));
        let ng = self.needs(a);
        Ok(self.push(out, Op::Powf(a, p), ng))
    }

    pub fn clamp_min(&mut self, a: Tensor, floor: f64) -> Tensor {
        let out = self.value(a).map(|x| x.max(floor));
        let ng = self.needs(a);
        self.push(out, Op::ClampMin(a, floor), ng)
    }

    /// `rows × 1` vector of row sums.
    pub fn row_sum(&mut self, a: Tensor) -> Tensor {
        let v = self.value(a);
        let out = Matrix::from_fn(v.rows(), 1, |i, _| v.row(i).iter().sum());
        let ng = self.needs(a);
        self.push(out, Op::RowSum(a), ng)
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let out = Matrix::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(out, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Tensor) -> Tensor {
        let n = (a.rows * a.cols).max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Squared Frobenius norm as a 1×1 tensor.
    pub fn frobenius_sq(&mut self, a: Tensor) -> Tensor {
        let out = Matrix::scalar(self.value(a).as_slice().iter().map(|x| x * x).sum());
        let ng = self.needs(a);
        self.push(out, Op::FrobeniusSq(a), ng)
    }

    /// Column-wise (feature-axis) concatenation.
    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let first = *parts.first().ok_or(Error::ShapeMismatch {
            op: "concat_cols",
            lhs: (0, 0),
            rhs: (0, 0),
        })?;
        if let Some(&bad) = parts.iter().find(|p| p.rows != first.rows) {
            return Err(mismatch("concat_cols", first, bad));
        }
        let total: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Matrix::zeros(first.rows, total);
        for i in 0..first.rows {
            let mut offset = 0;
            for p in parts {
                let src = self.nodes[p.id].value.row(i);
                out.row_mut(i)[offset..offset + p.cols].copy_from_slice(src);
                offset += p.cols;
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// `out[i][j] = ‖x_i − y_j‖²` for `x: n×k`, `y: m×k`.
    pub fn pairwise_sq_dist(&mut self, x: Tensor, y: Tensor) -> Result<Tensor> {
        if x.cols != y.cols {
            return Err(mismatch("pairwise_sq_dist", x, y));
        }
        let (vx, vy) = (self.value(x), self.value(y));
        let out = Matrix::from_fn(x.rows, y.rows, |i, j| {
            vx.row(i)
                .iter()
                .zip(vy.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        });
        let ng = self.needs(x) || self.needs(y);
        Ok(self.push(out, Op::PairwiseSqDist(x, y), ng))
    }

    /// Per-row `ln Σ_j exp(a_ij)` with max-subtraction. With
    /// `skip_diagonal` the input must be square and `a_ii` is left out.
    pub fn row_logsumexp(&mut self, a: Tensor, skip_diagonal: bool) -> Result<Tensor> {
        let min_cols = if skip_diagonal { 2 } else { 1 };
        if (skip_diagonal && a.rows != a.cols) || a.cols < min_cols {
            return Err(Error::ShapeMismatch {
                op: "row_logsumexp",
                lhs: a.shape(),
                rhs: (a.rows, min_cols),
            });
        }
        let v = self.value(a);
        let mut out = Matrix::zeros(a.rows, 1);
        for i in 0..a.rows {
            let row = v.row(i);
            let keep = |j: usize| !(skip_diagonal && i == j);
            let m = (0..a.cols)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (0..a.cols)
                .filter(|&j| keep(j))
                .map(|j| math::exp(row[j] - m))
                .sum();
            out.set(i, 0, m + math::ln(s));
        }
        let ng = self.needs(a);
        Ok(self.push(out, Op::RowLogSumExp(a, skip_diagonal), ng))
    }

    /// Diagonal of a square matrix as a column vector.
    pub fn diag(&mut self, a: Tensor) -> Result<Tensor> {
        if a.rows != a.cols {
            return Err(mismatch("diag", a, a));
        }
        let v = self.value(a);
        let out = Matrix::from_fn(a.rows, 1, |i, _| v.get(i, i));
        let ng = self.needs(a);
        Ok(self.push(out, Op::Diag(a), ng))
    }

    /// Gradient of `loss` with respect to every node (None where no gradient
    /// flows).
    pub fn node_grads(&self, loss: Tensor) -> Result<Vec<Option<Matrix>>> {
        if loss.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: loss.rows,
                cols: loss.cols,
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(Matrix::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(grads)
    }

    /// Writes `∂loss/∂param` into every parameter of `store`; parameters the
    /// loss does not reach get zeros.
    pub fn backward(&self, loss: Tensor, store: &mut ParamStore) -> Result<()> {
        let grads = self.node_grads(loss)?;
        store.zero_grads();
        for (&pid, &t) in &self.params {
            if let Some(g) = &grads[t.id] {
                let slot = store.by_id_mut(pid).grad.as_mut().expect("zeroed above");
                if slot.shape() != g.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "backward",
                        lhs: slot.shape(),
                        rhs: g.shape(),
                    });
                }
                slot.add_assign(g);
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node<'g>, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |t: Tensor| &self.nodes[t.id].value;
        let mut acc = |t: Tensor, f: &mut dyn FnMut(&mut Matrix)| {
            if !self.nodes[t.id].needs_grad {
                return;
            }
            let slot = grads[t.id].get_or_insert_with(|| Matrix::zeros(t.rows, t.cols));
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul(a, b) => {
                acc(a, &mut |s| gemm_acc(g, false, val(b), true, s));
                acc(b, &mut |s| gemm_acc(val(a), true, g, false, s));
            }
            &Op::Spmm(adj, b) => acc(b, &mut |s| adj.spmm_transpose_acc(g, s)),
            &Op::Transpose(a) => acc(a, &mut |s| s.add_assign(&g.transpose())),
            &Op::Add(a, b) => {
                acc(a, &mut |s| s.add_assign(g));
                acc(b, &mut |s| s.add_assign(g));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |s| s.add_assign(g));
                acc(b, &mut |s| s.add_scaled(g, -1.0));
            }
            &Op::Mul(a, b) => {
                acc(a, &mut |s| zip_acc(s, g, val(b), |g, y| g * y));
                acc(b, &mut |s| zip_acc(s, g, val(a), |g, x| g * x));
            }
            &Op::AddRow(a, row) => {
                acc(a, &mut |s| s.add_assign(g));
                acc(row, &mut |s| {
                    for i in 0..g.rows() {
                        for (x, y) in s.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                });
            }
            &Op::MulCol(a, col) => {
                let (va, vc) = (val(a), val(col));
                acc(a, &mut |s| {
                    for i in 0..g.rows() {
                        let c = vc.get(i, 0);
                        for (x, y) in s.row_mut(i).iter_mut().zip(g.row(i)) {
                            *x += c * y;
                        }
                    }
                });
                acc(col, &mut |s| {
                    for i in 0..g.rows() {
                        let d: f64 = g.row(i).iter().zip(va.row(i)).map(|(x, y)| x * y).sum();
                        s.as_mut_slice()[i] += d;
                    }
                });
            }
            &Op::Scale(a, k) => acc(a, &mut |s| s.add_scaled(g, k)),
            &Op::AddScalar(a) => acc(a, &mut |s| s.add_assign(g)),
            &Op::Act(a, kind) => {
                let (x, y) = (val(a), &node.value);
                acc(a, &mut |s| match kind {
                    Activation::Relu => zip_acc(s, g, x, |g, x| if x > 0.0 { g } else { 0.0 }),
                    Activation::Sigmoid => zip_acc(s, g, y, |g, y| g * y * (1.0 - y)),
                    Activation::Identity => s.add_assign(g),
                });
            }
            &Op::Log(a) => acc(a, &mut |s| {
                zip_acc(s, g, val(a), |g, x| if x > LOG_FLOOR { g / x } else { 0.0 })
            }),
            &Op::Powf(a, p) => acc(a, &mut |s| {
                zip_acc(s, g, val(a), |g, x| g * p * math::powf(x, p - 1.0))
            }),
            &Op::ClampMin(a, floor) => {
                acc(a, &mut |s| zip_acc(s, g, val(a), |g, x| if x > floor { g } else { 0.0 }))
            }
            &Op::RowSum(a) => acc(a, &mut |s| {
                for i in 0..s.rows() {
                    let gi = g.get(i, 0);
                    s.row_mut(i).iter_mut().for_each(|x| *x += gi);
                }
            }),
            &Op::Sum(a) => {
                let g0 = g.get(0, 0);
                acc(a, &mut |s| s.as_mut_slice().iter_mut().for_each(|x| *x += g0));
            }
            &Op::FrobeniusSq(a) => {
                let g0 = g.get(0, 0);
                acc(a, &mut |s| s.add_scaled(val(a), 2.0 * g0));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    acc(p, &mut |s| {
                        for i in 0..g.rows() {
                            let src = &g.row(i)[offset..offset + p.cols];
                            for (x, y) in s.row_mut(i).iter_mut().zip(src) {
                                *x += y;
                            }
                        }
                    });
                    offset += p.cols;
                }
            }
            &Op::PairwiseSqDist(x, y) => {
                let (vx, vy) = (val(x), val(y));
                acc(x, &mut |s| {
                    for i in 0..vx.rows() {
                        for j in 0..vy.rows() {
                            let w = 2.0 * g.get(i, j);
                            for ((o, a), b) in s.row_mut(i).iter_mut().zip(vx.row(i)).zip(vy.row(j)) {
                                *o += w * (a - b);
                            }
                        }
                    }
                });
                acc(y, &mut |s| {
                    for i in 0..vx.rows() {
                        for j in 0..vy.rows() {
                            let w = 2.0 * g.get(i, j);
                            for ((o, a), b) in s.row_mut(j).iter_mut().zip(vx.row(i)).zip(vy.row(j)) {
                                *o += w * (b - a);
                            }
                        }
                    }
                });
            }
            &Op::RowLogSumExp(a, skip) => {
                let (va, out) = (val(a), &node.value);
                acc(a, &mut |s| {
                    for i in 0..va.rows() {
                        let (gi, lse) = (g.get(i, 0), out.get(i, 0));
                        let row = va.row(i);
                        for (j, o) in s.row_mut(i).iter_mut().enumerate() {
                            if !(skip && i == j) {
                                *o += gi * math::exp(row[j] - lse);
                            }
                        }
                    }
                });
            }
            &Op::Diag(a) => acc(a, &mut |s| {
                for i in 0..s.rows() {
                    let v = s.get(i, i) + g.get(i, 0);
                    s.set(i, i, v);
                }
            }),
        }
    }
}

fn zip_acc(slot: &mut Matrix, g: &Matrix, other: &Matrix, f: impl Fn(f64, f64) -> f64) {
    for ((s, &gv), &o) in slot.as_mut_slice().iter_mut().zip(g.as_slice()).zip(other.as_slice()) {
        *s += f(gv, o);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::{finite_difference_check, ParamStore};
    use crate::graphdata::normalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
    }

    /// Finite-difference check of `sum(C ∘ build(params))` for a fixed random
    /// weighting `C`, over several random draws.
    fn check_op<'g>(
        shapes: &[(usize, usize)],
        range: (f64, f64),
        tol: f64,
        build: impl Fn(&mut Tape<'g>, &[Tensor]) -> Result<Tensor>,
    ) {
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            for (k, &(r, c)) in shapes.iter().enumerate() {
                store.insert(&format!("p{k}"), random(r, c, range.0, range.1, &mut rng)).unwrap();
            }
            let report = finite_difference_check(&mut store, 1e-5, |s| {
                let mut tape = Tape::new();
                let inputs: Vec<Tensor> = (0..shapes.len()).map(|k| tape.param(s, &format!("p{k}")).unwrap()).collect();
                let out = build(&mut tape, &inputs)?;
                let mut w_rng = ChaCha8Rng::seed_from_u64(99);
                let weights = tape.constant(random(out.rows(), out.cols(), -1.0, 1.0, &mut w_rng));
                let weighted = tape.mul(out, weights)?;
                let loss = tape.sum(weighted);
                Ok((tape, loss))
            })
            .unwrap();
            assert!(report.max_rel_error < tol, "seed {seed}: {report:?}");
        }
    }

    const UNIT: (f64, f64) = (-1.0, 1.0);
    const POSITIVE: (f64, f64) = (0.5, 1.5);

    #[test]
    fn primitive_gradients() {
        check_op(&[(3, 4), (4, 2)], UNIT, 1e-6, |t, p| t.matmul(p[0], p[1]));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.transpose(p[0])));
        check_op(&[(3, 4), (3, 4)], UNIT, 1e-6, |t, p| t.add(p[0], p[1]));
        check_op(&[(3, 4), (3, 4)], UNIT, 1e-6, |t, p| t.sub(p[0], p[1]));
        check_op(&[(3, 4), (3, 4)], UNIT, 1e-6, |t, p| t.mul(p[0], p[1]));
        check_op(&[(3, 4), (1, 4)], UNIT, 1e-6, |t, p| t.add_row(p[0], p[1]));
        check_op(&[(3, 4), (3, 1)], UNIT, 1e-6, |t, p| t.mul_col(p[0], p[1]));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.scale(p[0], -2.5)));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.add_scalar(p[0], 0.7)));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.relu(p[0])));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.activation(p[0], Activation::Identity)));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.clamp_min(p[0], -0.95)));
        check_op(&[(3, 4)], POSITIVE, 1e-6, |t, p| t.powf(p[0], -0.5));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.row_sum(p[0])));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.sum(p[0])));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.mean(p[0])));
        check_op(&[(3, 4)], UNIT, 1e-6, |t, p| Ok(t.frobenius_sq(p[0])));
        check_op(&[(3, 2), (3, 3)], UNIT, 1e-6, |t, p| t.concat_cols(&[p[0], p[1], p[0]]));
        check_op(&[(4, 3), (2, 3)], UNIT, 1e-6, |t, p| t.pairwise_sq_dist(p[0], p[1]));
        check_op(&[(4, 4)], UNIT, 1e-6, |t, p| t.diag(p[0]));
    }

    #[test]
    fn saturating_gradients() {
        check_op(&[(3, 4)], UNIT, 1e-4, |t, p| Ok(t.sigmoid(p[0])));
        check_op(&[(3, 4)], POSITIVE, 1e-4, |t, p| t.log(p[0]));
        check_op(&[(4, 4)], UNIT, 1e-4, |t, p| t.row_logsumexp(p[0], false));
        check_op(&[(4, 4)], UNIT, 1e-4, |t, p| t.row_logsumexp(p[0], true));
    }

    #[test]
    fn spmm_gradient_flows_to_the_dense_side() {
        let adj = normalize(&SparseAdjacency::from_edges(5, [(0, 1), (1, 2), (3, 4), (0, 4)]).unwrap());
        check_op(&[(5, 3)], UNIT, 1e-6, |t, p| t.spmm(&adj, p[0]));
    }

    #[test]
    fn hand_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::from_rows(&[[1.0, 2.0]]));
        let b = tape.constant(Matrix::from_rows(&[[3.0], [4.0]]));
        let ab = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(ab), &Matrix::from_rows(&[[11.0]]));

        let m = tape.constant(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let eye = tape.constant(Matrix::identity(2));
        let im = tape.matmul(eye, m).unwrap();
        assert_eq!(tape.value(im), tape.value(m));
        let f = tape.frobenius_sq(m);
        assert_eq!(tape.scalar(f), 30.0);

        let x = tape.constant(Matrix::from_rows(&[[-1.0, 2.0]]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).as_slice(), &[0.0, 2.0]);

        let c = tape.constant(Matrix::zeros(4, 2));
        let d = tape.constant(Matrix::zeros(4, 3));
        assert_eq!(tape.concat_cols(&[c, d]).unwrap().shape(), (4, 5));
        assert!(matches!(tape.matmul(c, d), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn spmm_on_normalized_path() {
        let adj = normalize(&SparseAdjacency::from_edges(2, [(0, 1)]).unwrap());
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[[1.0], [0.0]]));
        let y = tape.spmm(&adj, x).unwrap();
        let v = tape.value(y);
        assert!((v.get(0, 0) - 0.5).abs() < 1e-15 && (v.get(1, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut store = ParamStore::new();
        store.insert("x", Matrix::zeros(1, 1)).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, "x").unwrap();
        let s = tape.sigmoid(x);
        assert_eq!(tape.scalar(s), 0.5);
        tape.backward(s, &mut store).unwrap();
        assert_eq!(store.grad("x").unwrap().unwrap().get(0, 0), 0.25);
    }

    #[test]
    fn analytic_gradients() {
        let w0 = Matrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 0.0, -1.5]]);
        let target = Matrix::from_rows(&[[0.0, 1.0, 1.0], [2.0, -2.0, 0.5]]);
        let mut store = ParamStore::new();
        store.insert("w", w0.clone()).unwrap();
        store.insert("unused", Matrix::filled(2, 2, 7.0)).unwrap();

        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let s = tape.sum(w);
        tape.backward(s, &mut store).unwrap();
        assert_eq!(store.grad("w").unwrap().unwrap(), &Matrix::filled(2, 3, 1.0));
        assert_eq!(store.grad("unused").unwrap().unwrap(), &Matrix::zeros(2, 2));

        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let t = tape.constant(target.clone());
        let diff = tape.sub(w, t).unwrap();
        let f = tape.frobenius_sq(diff);
        tape.backward(f, &mut store).unwrap();
        let expected = Matrix::from_fn(2, 3, |i, j| 2.0 * (w0.get(i, j) - target.get(i, j)));
        assert_eq!(store.grad("w").unwrap().unwrap(), &expected);

        // ∂ sum(ab) / ∂a = 1 bᵀ
        let b0 = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        store.insert("b", b0.clone()).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let b = tape.param(&store, "b").unwrap();
        let p = tape.matmul(w, b).unwrap();
        let s = tape.sum(p);
        tape.backward(s, &mut store).unwrap();
        let expected = Matrix::from_fn(2, 3, |_, k| b0.row(k).iter().sum());
        assert_eq!(store.grad("w").unwrap().unwrap(), &expected);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut store = ParamStore::new();
        store.insert("w", Matrix::from_rows(&[[3.0]])).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, "w").unwrap();
        let b = tape.param(&store, "w").unwrap();
        assert_eq!(a, b);
        let sq = tape.mul(a, b).unwrap();
        tape.backward(sq, &mut store).unwrap();
        assert_eq!(store.grad("w").unwrap().unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn errors() {
        let mut store = ParamStore::new();
        store.insert("w", Matrix::filled(2, 2, 1.0)).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        assert_eq!(tape.backward(w, &mut store), Err(Error::NonScalarLoss { rows: 2, cols: 2 }));
        let z = tape.constant(Matrix::from_rows(&[[1.0, -1.0]]));
        assert!(matches!(tape.log(z), Err(Error::Domain { op: "log", .. })));
        assert!(matches!(tape.param(&store, "missing"), Err(Error::UnknownParameter(_))));
    }

    #[test]
    fn sum_of_squares_check_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        store.insert("x", random(4, 3, -1.0, 1.0, &mut rng)).unwrap();
        let report = finite_difference_check(&mut store, 1e-4, |s| {
            let mut tape = Tape::new();
            let x = tape.param(s, "x")?;
            let f = tape.frobenius_sq(x);
            Ok((tape, f))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.coordinates, 12);
        let zero = finite_difference_check(&mut store, 0.0, |s| {
            let mut tape = Tape::new();
            let x = tape.param(s, "x")?;
            let f = tape.sum(x);
            Ok((tape, f))
        });
        assert_eq!(zero.unwrap_err(), Error::InvalidEpsilon(0.0));
    }
}
