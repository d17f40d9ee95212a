//! Graph encoder (per-view GCN stack) and the fusion MLP.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{Activation, Matrix, Tape, Tensor};
use crate::graphdata::SparseAdjacency;
use crate::math;
use crate::{Error, Result};

/// Layer widths and activations for the encoder and fusion network.
///
/// `hidden` lists the output width of each encoder layer (the input width is
/// the feature dimension). `mlp_widths` likewise lists fusion-layer outputs;
/// the fusion input is `V · d_e`, and its last width must equal `d_e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub activations: Vec<Activation>,
    pub mlp_widths: Vec<usize>,
    pub mlp_activations: Vec<Activation>,
    /// One weight stack per view instead of a shared one.
    pub per_view_weights: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 64],
            activations: vec![Activation::Relu, Activation::Identity],
            mlp_widths: vec![128, 64],
            mlp_activations: vec![Activation::Relu, Activation::Identity],
            per_view_weights: false,
        }
    }
}

impl EncoderConfig {
    /// Output width `d_e` of the encoder.
    pub fn embedding_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::InvalidConfig("encoder needs at least one layer".into()));
        }
        if self.hidden.len() != self.activations.len() {
            return Err(Error::InvalidConfig(format!(
                "{} encoder widths but {} activations",
                self.hidden.len(),
                self.activations.len()
            )));
        }
        if self.mlp_widths.is_empty() {
            return Err(Error::InvalidConfig("fusion MLP needs at least one layer".into()));
        }
        if self.mlp_widths.len() != self.mlp_activations.len() {
            return Err(Error::InvalidConfig(format!(
                "{} fusion widths but {} activations",
                self.mlp_widths.len(),
                self.mlp_activations.len()
            )));
        }
        if self.hidden.iter().chain(&self.mlp_widths).any(|&w| w == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.mlp_widths.last() != self.hidden.last() {
            return Err(Error::InvalidConfig(format!(
                "fusion output width {} must equal encoder output width {}",
                self.mlp_widths.last().unwrap(),
                self.embedding_dim()
            )));
        }
        Ok(())
    }
}

/// Per-view low-level representations and the fused high-level one.
#[derive(Clone, Debug)]
pub struct Embeddings {
    pub views: Vec<Tensor>,
    pub fused: Tensor,
}

/// One fully connected fusion layer.
#[derive(Clone, Copy, Debug)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub activation: Activation,
}

/// Glorot-uniform matrix: entries in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound))
}

/// `Z_l = σ_l(A Z_{l−1} W_l)` with `Z_0 = x`; returns `Z_e`.
pub fn ge_forward<'g>(
    tape: &mut Tape<'g>,
    view: &'g SparseAdjacency,
    x: Tensor,
    weights: &[Tensor],
    activations: &[Activation],
) -> Result<Tensor> {
    if weights.len() != activations.len() {
        return Err(Error::InvalidConfig("one activation per encoder layer".into()));
    }
    let mut z = x;
    for (&w, &act) in weights.iter().zip(activations) {
        // A(ZW) and (AZ)W agree; multiply by the narrower side first.
        let pre = if w.cols() < w.rows() {
            let zw = tape.matmul(z, w)?;
            tape.spmm(view, zw)?
        } else {
            let az = tape.spmm(view, z)?;
            tape.matmul(az, w)?
        };
        z = tape.activation(pre, act);
    }
    Ok(z)
}

/// `S = MLP([H^1, …, H^V])` with column-wise concatenation.
pub fn fuse(tape: &mut Tape<'_>, hs: &[Tensor], layers: &[DenseLayer]) -> Result<Tensor> {
    let first = *hs
        .first()
        .ok_or_else(|| Error::InvalidConfig("fusion needs at least one view".into()))?;
    if let Some(&bad) = hs.iter().find(|h| h.shape() != first.shape()) {
        return Err(Error::ShapeMismatch {
            op: "fuse",
            lhs: first.shape(),
            rhs: bad.shape(),
        });
    }
    let mut z = if hs.len() == 1 { first } else { tape.concat_cols(hs)? };
    for layer in layers {
        let mut pre = tape.matmul(z, layer.weight)?;
        if let Some(b) = layer.bias {
            pre = tape.add_row(pre, b)?;
        }
        z = tape.activation(pre, layer.activation);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::normalize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_chain(a: &Matrix, x: &Matrix, ws: &[Matrix], acts: &[Activation]) -> Matrix {
        let n = a.rows();
        let mut z = x.clone();
        for (w, act) in ws.iter().zip(acts) {
            let az = Matrix::from_fn(n, z.cols(), |i, j| (0..n).map(|k| a.get(i, k) * z.get(k, j)).sum());
            let azw = Matrix::from_fn(n, w.cols(), |i, j| (0..w.rows()).map(|k| az.get(i, k) * w.get(k, j)).sum());
            z = azw.map(|v| act.apply(v));
        }
        z
    }

    fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> SparseAdjacency {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.3 {
                    edges.push((i, j));
                }
            }
        }
        normalize(&SparseAdjacency::from_edges(n, edges).unwrap())
    }

    #[test]
    fn isolated_node_hand_case() {
        let a = normalize(&SparseAdjacency::from_edges(1, []).unwrap());
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::scalar(2.0));
        let w = tape.constant(Matrix::scalar(3.0));
        let h = ge_forward(&mut tape, &a, x, &[w], &[Activation::Relu]).unwrap();
        assert_eq!(tape.value(h), &Matrix::scalar(6.0));
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_graph(6, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_fn(6, 4, |i, j| (i + j) as f64));
        let w1 = tape.constant(Matrix::zeros(4, 5));
        let w2 = tape.constant(Matrix::zeros(5, 3));
        let h = ge_forward(&mut tape, &a, x, &[w1, w2], &[Activation::Relu, Activation::Relu]).unwrap();
        assert_eq!(tape.value(h), &Matrix::zeros(6, 3));
    }

    #[test]
    fn two_layers_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_graph(10, &mut rng);
        let x = Matrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
        let ws = [glorot_uniform(4, 6, &mut rng), glorot_uniform(6, 3, &mut rng)];
        let acts = [Activation::Relu, Activation::Identity];
        let mut tape = Tape::new();
        let xt = tape.constant(x.clone());
        let wt: Vec<_> = ws.iter().map(|w| tape.constant(w.clone())).collect();
        let h = ge_forward(&mut tape, &a, xt, &wt, &acts).unwrap();
        let want = dense_chain(&a.to_dense(), &x, &ws, &acts);
        assert!(tape.value(h).max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn identity_fusion_is_passthrough() {
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::from_fn(5, 3, |i, j| i as f64 - j as f64));
        let w = tape.constant(Matrix::identity(3));
        let s = fuse(
            &mut tape,
            &[h],
            &[DenseLayer {
                weight: w,
                bias: None,
                activation: Activation::Identity,
            }],
        )
        .unwrap();
        assert_eq!(tape.value(s), tape.value(h));
    }

    #[test]
    fn fusion_matches_dense_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h1 = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let h2 = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let w1 = glorot_uniform(6, 4, &mut rng);
        let b1 = Matrix::from_fn(1, 4, |_, _| rng.random_range(-1.0..1.0));
        let w2 = glorot_uniform(4, 3, &mut rng);
        let mut tape = Tape::new();
        let (t1, t2) = (tape.constant(h1.clone()), tape.constant(h2.clone()));
        let l1 = DenseLayer {
            weight: tape.constant(w1.clone()),
            bias: Some(tape.constant(b1.clone())),
            activation: Activation::Relu,
        };
        let l2 = DenseLayer {
            weight: tape.constant(w2.clone()),
            bias: None,
            activation: Activation::Identity,
        };
        let cat = tape.concat_cols(&[t1, t2]).unwrap();
        assert_eq!(cat.shape(), (6, 6));
        let s = fuse(&mut tape, &[t1, t2], &[l1, l2]).unwrap();

        let concat = Matrix::from_fn(6, 6, |i, j| if j < 3 { h1.get(i, j) } else { h2.get(i, j - 3) });
        let hidden = Matrix::from_fn(6, 4, |i, j| {
            let v: f64 = (0..6).map(|k| concat.get(i, k) * w1.get(k, j)).sum::<f64>() + b1.get(0, j);
            v.max(0.0)
        });
        let want = Matrix::from_fn(6, 3, |i, j| (0..4).map(|k| hidden.get(i, k) * w2.get(k, j)).sum());
        assert!(tape.value(s).max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn inconsistent_widths_rejected() {
        let mut tape = Tape::new();
        let h1 = tape.constant(Matrix::zeros(4, 3));
        let h2 = tape.constant(Matrix::zeros(4, 2));
        assert!(fuse(&mut tape, &[h1, h2], &[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        let bad = EncoderConfig {
            mlp_widths: vec![128, 32],
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
        let ragged = EncoderConfig {
            activations: vec![Activation::Relu],
            ..EncoderConfig::default()
        };
        assert!(ragged.validate().is_err());
    }
}
