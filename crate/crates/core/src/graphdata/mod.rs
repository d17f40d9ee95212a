//! Multi-view attributed graphs: sparse adjacency, normalisation, datasets
//! and a planted-partition generator.

mod adjacency;
mod synthetic;

pub use adjacency::{normalize, SparseAdjacency};
pub use synthetic::{generate_synthetic, SyntheticSpec, ViewProbs, DEFAULT_FEATURE_DIM};

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::diffmath::Matrix;
use crate::{Error, Result};

/// Dense node-attribute matrix `X ∈ ℝ^{n×d}` with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if let Some((row, col)) = values.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn d(&self) -> usize {
        self.0.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

/// One feature matrix shared by `V ≥ 1` raw adjacency views, plus optional
/// ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewGraph {
    features: FeatureMatrix,
    views: Vec<SparseAdjacency>,
    labels: Option<Vec<usize>>,
    names: Option<Vec<String>>,
}

impl MultiViewGraph {
    pub fn new(
        features: FeatureMatrix,
        views: Vec<SparseAdjacency>,
        labels: Option<Vec<usize>>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidDataset("at least one view is required".into()));
        }
        let n = features.n();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        for (v, a) in views.iter().enumerate() {
            if a.n() != n {
                return Err(Error::InvalidDataset(format!(
                    "view {v} has {} nodes but features have {n}",
                    a.n()
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
            let c = labels.iter().max().map_or(0, |m| m + 1);
            let mut seen = vec![false; c];
            labels.iter().for_each(|&l| seen[l] = true);
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::InvalidDataset(format!(
                    "cluster id {missing} never occurs in labels 0..{c}"
                )));
            }
        }
        if let Some(names) = &names {
            if names.len() != views.len() {
                return Err(Error::InvalidDataset(format!(
                    "{} view names for {} views",
                    names.len(),
                    views.len()
                )));
            }
        }
        Ok(Self {
            features,
            views,
            labels,
            names,
        })
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn views(&self) -> &[SparseAdjacency] {
        &self.views
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Number of ground-truth clusters, when labels are present.
    pub fn num_clusters(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Applies a node permutation: node `i` of the result is node `perm[i]`
    /// of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::InvalidDataset("permutation length".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::InvalidDataset("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let x = self.features.values();
        let features = FeatureMatrix::new(Matrix::from_fn(n, x.cols(), |i, j| x.get(perm[i], j)))?;
        let views = self
            .views
            .iter()
            .map(|a| {
                SparseAdjacency::from_triplets(
                    n,
                    a.entries().map(|(i, j, w)| (inverse[i], inverse[j], w)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&p| l[p]).collect());
        Self::new(features, views, labels, self.names.clone())
    }
}
