//! Multi-view attributed graph clustering with dual information enhancement.
//!
//! A graph encoder embeds every view of a multi-view attributed graph, a
//! fusion MLP recovers a shared high-level representation `S`, and training
//! jointly maximises the agreement between `S` and each view embedding,
//! reconstructs every view's adjacency from a consensus term plus a
//! view-specific decoder, and sharpens Student's-t soft assignments around
//! trainable centroids. Final labels come from k-means on `S`.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! clocks or the command line lives in the `diagc` companion crate.
//!
//! Module map:
//!
//! - [`graphdata`]: sparse adjacency, normalisation, multi-view datasets and
//!   the planted-partition generator.
//! - [`diffmath`]: dense matrices, the reverse-mode tape, parameters, Adam and
//!   the finite-difference gradient check.
//! - [`encoder`]: the graph encoder and the fusion MLP.
//! - [`objectives`]: every loss term and the clustering head.
//! - [`trainer`]: initialisation, the training loop, prediction, ablations and
//!   k-means.
//! - [`metrics`]: ACC, F1, NMI and ARI.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod diffmath;
pub mod encoder;
mod error;
pub mod graphdata;
pub(crate) mod math;
pub mod metrics;
pub mod objectives;
pub mod rng;
pub mod trainer;

pub use diffmath::{Activation, AdamConfig, AdamState, Matrix, ParamStore, Tape, Tensor};
pub use error::{Error, Result};
pub use graphdata::{FeatureMatrix, MultiViewGraph, SparseAdjacency, SyntheticSpec};
pub use metrics::MetricsReport;
pub use trainer::{ClusterPartition, Model, TrainConfig, TrainHistory, Variant};
