use alloc::vec;
use alloc::vec::Vec;

use crate::diffmath::Matrix;
use crate::math;
use crate::{Error, Result};

/// Square sparse matrix in CSR form with sorted column indices.
///
/// Raw adjacencies built by [`SparseAdjacency::from_edges`] are binary,
/// symmetric and have an empty diagonal; [`normalize`] produces the
/// self-loop-augmented, degree-scaled matrix used by the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseAdjacency {
    /// Binary symmetric adjacency from undirected edges. Self-loops are
    /// dropped, each edge may appear once or twice, duplicates collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut pairs = Vec::new();
        for (u, v) in edges {
            for idx in [u, v] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self::from_sorted(n, pairs.into_iter().map(|(i, j)| (i, j, 1.0)), true))
    }

    /// General constructor; rejects out-of-range indices and duplicate
    /// coordinates. The symmetric flag is computed.
    pub fn from_triplets(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut all: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, w) in entries {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if !w.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            all.push((i, j, w));
        }
        all.sort_unstable_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = all.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::DuplicateEntry {
                row: w[0].0,
                col: w[0].1,
            });
        }
        let mut adj = Self::from_sorted(n, all.into_iter(), false);
        adj.symmetric = adj.check_symmetric().is_ok();
        Ok(adj)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted(n, (0..n).map(|i| (i, i, 1.0)), true)
    }

    fn from_sorted(n: usize, entries: impl Iterator<Item = (usize, usize, f64)>, symmetric: bool) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (i, j, w) in entries {
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(w);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// All stored `(row, col, value)` triplets in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &w)| (i, j, w))
        })
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn upper_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries().filter(|&(i, j, _)| i < j).map(|(i, j, _)| (i, j))
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (i, j, w) in self.entries() {
            m.set(i, j, w);
        }
        m
    }

    fn check_symmetric(&self) -> Result<()> {
        for (i, j, w) in self.entries() {
            if self.get(j, i) != w {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
        Ok(())
    }

    /// `self · b`.
    pub fn spmm(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.n, b.rows(), "spmm shape");
        let mut out = Matrix::zeros(self.n, b.cols());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let dst = out.row_mut(i);
            for (&k, &w) in cols.iter().zip(vals) {
                for (o, x) in dst.iter_mut().zip(b.row(k)) {
                    *o += w * x;
                }
            }
        }
        out
    }

    /// `out += selfᵀ · g`.
    pub fn spmm_transpose_acc(&self, g: &Matrix, out: &mut Matrix) {
        assert_eq!(out.shape(), (self.n, g.cols()), "spmm_transpose shape");
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&k, &w) in cols.iter().zip(vals) {
                let src = g.row(i);
                for (o, x) in out.row_mut(k).iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
    }
}

/// `D^{-1/2}(Ã + I)D^{-1/2}` with degrees taken from `Ã + I`, so isolated
/// nodes stay well defined. Diagonal entries of the input are ignored.
pub fn normalize(adj: &SparseAdjacency) -> SparseAdjacency {
    let n = adj.n();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let (cols, vals) = adj.row(i);
            let d: f64 = 1.0
                + cols
                    .iter()
                    .zip(vals)
                    .filter(|(&j, _)| j != i)
                    .map(|(_, w)| w)
                    .sum::<f64>();
            1.0 / math::sqrt(d)
        })
        .collect();
    let mut entries = Vec::with_capacity(adj.nnz() + n);
    for i in 0..n {
        let (cols, vals) = adj.row(i);
        let mut diag_done = false;
        for (&j, &w) in cols.iter().zip(vals) {
            if j == i {
                continue;
            }
            if j > i && !diag_done {
                entries.push((i, i, inv_sqrt_deg[i] * inv_sqrt_deg[i]));
                diag_done = true;
            }
            entries.push((i, j, inv_sqrt_deg[i] * w * inv_sqrt_deg[j]));
        }
        if !diag_done {
            entries.push((i, i, inv_sqrt_deg[i] * inv_sqrt_deg[i]));
        }
    }
    let symmetric = adj.is_symmetric();
    SparseAdjacency::from_sorted(n, entries.into_iter(), symmetric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dense `D^{-1/2}(Ã+I)D^{-1/2}` by explicit matrix products.
    fn dense_normalize(raw: &Matrix) -> Matrix {
        let n = raw.rows();
        let a_hat = Matrix::from_fn(n, n, |i, j| raw.get(i, j) + if i == j { 1.0 } else { 0.0 });
        let d_inv_sqrt = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 / (0..n).map(|k| a_hat.get(i, k)).sum::<f64>().sqrt()
            } else {
                0.0
            }
        });
        let naive = |a: &Matrix, b: &Matrix| {
            Matrix::from_fn(n, n, |i, j| (0..n).map(|k| a.get(i, k) * b.get(k, j)).sum())
        };
        naive(&naive(&d_inv_sqrt, &a_hat), &d_inv_sqrt)
    }

    #[test]
    fn symmetrises_and_drops_self_loops() {
        let a = SparseAdjacency::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(a.entries().collect::<Vec<_>>(), vec![(0, 1, 1.0), (1, 0, 1.0)]);
        let b = SparseAdjacency::from_edges(3, [(0, 1), (1, 0), (2, 2), (0, 1)]).unwrap();
        assert_eq!(b.nnz(), 2);
        assert!(b.is_symmetric());
    }

    #[test]
    fn empty_and_bad_inputs() {
        assert_eq!(SparseAdjacency::from_edges(3, []).unwrap().nnz(), 0);
        assert_eq!(
            SparseAdjacency::from_edges(3, [(0, 5)]),
            Err(Error::IndexOutOfRange { index: 5, n: 3 })
        );
        assert_eq!(SparseAdjacency::from_edges(0, []), Err(Error::EmptyGraph));
        assert!(matches!(
            SparseAdjacency::from_triplets(2, [(0, 1, 1.0), (0, 1, 2.0)]),
            Err(Error::DuplicateEntry { .. })
        ));
    }

    #[test]
    fn normalize_hand_cases() {
        let single = normalize(&SparseAdjacency::from_edges(1, []).unwrap());
        assert_eq!(single.to_dense(), Matrix::scalar(1.0));

        let pair = normalize(&SparseAdjacency::from_edges(2, [(0, 1)]).unwrap()).to_dense();
        assert!(pair.max_abs_diff(&Matrix::filled(2, 2, 0.5)).unwrap() < 1e-15);

        let tri = normalize(&SparseAdjacency::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap());
        assert!(tri.to_dense().max_abs_diff(&Matrix::filled(3, 3, 1.0 / 3.0)).unwrap() < 1e-15);
    }

    #[test]
    fn normalize_ignores_input_diagonal() {
        let with_loop = SparseAdjacency::from_triplets(2, [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let without = SparseAdjacency::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(normalize(&with_loop).to_dense(), normalize(&without).to_dense());
    }

    #[test]
    fn spmm_identity_and_path() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(SparseAdjacency::identity(2).spmm(&m), m);
        let a = normalize(&SparseAdjacency::from_edges(2, [(0, 1)]).unwrap());
        let got = a.spmm(&Matrix::from_rows(&[[1.0], [0.0]]));
        assert!(got.max_abs_diff(&Matrix::from_rows(&[[0.5], [0.5]])).unwrap() < 1e-15);
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..=20).prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 0..60)))
    }

    proptest! {
        #[test]
        fn normalize_matches_dense_oracle((n, edges) in random_graph()) {
            let raw = SparseAdjacency::from_edges(n, edges).unwrap();
            let got = normalize(&raw).to_dense();
            let want = dense_normalize(&raw.to_dense());
            prop_assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
            for i in 0..n {
                prop_assert!(got.get(i, i) > 0.0);
                for j in 0..n {
                    prop_assert_eq!(got.get(i, j), got.get(j, i));
                }
            }
        }

        #[test]
        fn spmm_matches_dense((n, edges) in random_graph(), seed in 0u64..1000) {
            let a = normalize(&SparseAdjacency::from_edges(n, edges).unwrap());
            let b = Matrix::from_fn(n, 3, |i, j| ((i * 7 + j * 3) as f64 + seed as f64).sin());
            let dense = a.to_dense();
            let want = Matrix::from_fn(n, 3, |i, j| (0..n).map(|k| dense.get(i, k) * b.get(k, j)).sum());
            prop_assert!(a.spmm(&b).max_abs_diff(&want).unwrap() < 1e-12);
        }
    }
}
