//! Initialisation, the joint training loop, prediction and ablations.

pub mod kmeans;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffmath::{adam_step, AdamConfig, AdamState, Matrix, ParamStore, Tape, Tensor};
use crate::encoder::{fuse, ge_forward, glorot_uniform, DenseLayer, EncoderConfig};
use crate::graphdata::{normalize, MultiViewGraph, SparseAdjacency};
use crate::metrics::{self, MetricsReport, RunMeta};
use crate::objectives::{
    kl_loss, mim_loss, recon_loss, sir_forward, soft_assign, target_distribution, total_loss, ClusterHead,
    SirConfig,
};
use crate::rng;
use crate::{Error, Result};

pub use kmeans::{kmeans, KMeansResult};

/// Model variant: the full objective or one of the three ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// No fusion network: `S' = (1/V) Σ_v H^v` and no mutual-information term.
    NoMim,
    /// Consensus-only reconstruction `Σ_v ‖A^v − σ(H^v H^vᵀ)‖²`.
    NoSir,
    /// No KL term; `α` is treated as 0.
    NoSc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoMim, Variant::NoSir, Variant::NoSc];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMim => "no_mim",
            Variant::NoSir => "no_sir",
            Variant::NoSc => "no_sc",
        }
    }

    pub fn uses_mim(self) -> bool {
        self != Variant::NoMim
    }

    pub fn uses_sir(self) -> bool {
        self != Variant::NoSir
    }

    pub fn uses_kl(self) -> bool {
        self != Variant::NoSc
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::UnknownVariant(s.into()))
    }
}

/// Where final labels come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// k-means on the trained representation.
    #[default]
    Kmeans,
    /// Row-wise argmax of the soft assignment `Q`.
    ArgmaxQ,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the KL term.
    pub alpha: f64,
    /// Number of optimiser steps `T`.
    pub iterations: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Number of clusters `c`. The default 0 means unset and fails
    /// validation; run configs fill it in from the dataset labels.
    pub clusters: usize,
    pub encoder: EncoderConfig,
    pub sir: SirConfig,
    /// Student's-t degrees of freedom of the clustering head.
    pub degrees_of_freedom: f64,
    /// Temperature dividing cosine similarities in the MI estimator.
    pub temperature: f64,
    pub variant: Variant,
    /// Refresh the target distribution every this many iterations.
    pub p_update_every: usize,
    /// Reconstruct the raw binary adjacency instead of the normalised one.
    pub raw_recon_target: bool,
    pub labels_from: LabelSource,
    pub kmeans_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            iterations: 400,
            adam: AdamConfig::default(),
            seed: 0,
            clusters: 0,
            encoder: EncoderConfig::default(),
            sir: SirConfig::default(),
            degrees_of_freedom: 1.0,
            temperature: 1.0,
            variant: Variant::Full,
            p_update_every: 1,
            raw_recon_target: false,
            labels_from: LabelSource::Kmeans,
            kmeans_restarts: kmeans::DEFAULT_RESTARTS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        if self.clusters < 2 {
            return bad(format!("need at least 2 clusters, got {}", self.clusters));
        }
        if self.p_update_every == 0 {
            return bad("p_update_every must be at least 1".into());
        }
        if !(self.degrees_of_freedom > 0.0) {
            return bad("degrees_of_freedom must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be at least 1".into());
        }
        let a = &self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite()) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad(format!("invalid Adam settings {a:?}"));
        }
        if self.variant.uses_mim() {
            self.encoder.validate()?;
        } else if self.encoder.hidden.is_empty() || self.encoder.hidden.len() != self.encoder.activations.len() {
            return bad("encoder needs one activation per layer".into());
        }
        if self.encoder.hidden.contains(&0) {
            return bad("encoder widths must be positive".into());
        }
        if self.variant.uses_sir() {
            self.sir.validate()?;
        }
        Ok(())
    }

    /// The KL weight actually applied.
    pub fn effective_alpha(&self) -> f64 {
        if self.variant.uses_kl() {
            self.alpha
        } else {
            0.0
        }
    }
}

/// Preprocessed inputs shared by every iteration: features, normalised
/// adjacencies for propagation, and dense reconstruction targets.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub features: Matrix,
    pub adjacency: Vec<SparseAdjacency>,
    pub targets: Vec<Matrix>,
}

impl GraphInputs {
    pub fn new(data: &MultiViewGraph, raw_target: bool) -> Self {
        let adjacency: Vec<SparseAdjacency> = data.views().iter().map(normalize).collect();
        let targets = if raw_target {
            data.views().iter().map(SparseAdjacency::to_dense).collect()
        } else {
            adjacency.iter().map(SparseAdjacency::to_dense).collect()
        };
        Self {
            features: data.features().values().clone(),
            adjacency,
            targets,
        }
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn num_views(&self) -> usize {
        self.adjacency.len()
    }
}

/// Hard cluster labels in `0..clusters`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub labels: Vec<usize>,
    pub clusters: usize,
}

impl ClusterPartition {
    pub fn new(labels: Vec<usize>, clusters: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= clusters) {
            return Err(Error::IndexOutOfRange { index: bad, n: clusters });
        }
        Ok(Self { labels, clusters })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Loss values of one iteration, measured before its optimiser step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub total: f64,
    pub mim: f64,
    pub recon: f64,
    /// 0 when the variant has no KL term.
    pub kl: f64,
    /// Clock reading (seconds since training started) after the step.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.total)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.total)
    }
}

fn layer_name(prefix: &str, per_view: bool, view: usize, layer: usize) -> String {
    if per_view {
        format!("{prefix}.v{view}.w{layer}")
    } else {
        format!("{prefix}.w{layer}")
    }
}

pub const CENTROIDS: &str = "head.mu";

/// Registers every parameter the variant uses, in a fixed order, drawing
/// weights from `rng`. Centroids start at zero.
pub fn init_params(cfg: &TrainConfig, feature_dim: usize, num_views: usize, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = rng::rng_for(seed, rng::INIT);
    let mut store = ParamStore::new();
    let enc = &cfg.encoder;
    let stacks = if enc.per_view_weights { num_views } else { 1 };
    for v in 0..stacks {
        let mut fan_in = feature_dim;
        for (l, &w) in enc.hidden.iter().enumerate() {
            store.insert(&layer_name("encoder", enc.per_view_weights, v, l), glorot_uniform(fan_in, w, &mut rng))?;
            fan_in = w;
        }
    }
    let d_e = enc.embedding_dim();
    if cfg.variant.uses_mim() {
        let mut fan_in = num_views * d_e;
        for (l, &w) in enc.mlp_widths.iter().enumerate() {
            store.insert(&format!("mlp.w{l}"), glorot_uniform(fan_in, w, &mut rng))?;
            store.insert(&format!("mlp.b{l}"), Matrix::zeros(1, w))?;
            fan_in = w;
        }
    }
    if cfg.variant.uses_sir() {
        for v in 0..stacks {
            let mut fan_in = d_e;
            for (l, &w) in cfg.sir.widths.iter().enumerate() {
                store.insert(&layer_name("sir", enc.per_view_weights, v, l), glorot_uniform(fan_in, w, &mut rng))?;
                fan_in = w;
            }
        }
    }
    store.insert(CENTROIDS, Matrix::zeros(cfg.clusters, d_e))?;
    Ok(store)
}

/// View embeddings `H^v` and the clustering representation (`S`, or `S'`
/// for the no-MIM variant).
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub views: Vec<Tensor>,
    pub s: Tensor,
}

fn stack<'g>(tape: &mut Tape<'g>, store: &ParamStore, prefix: &str, per_view: bool, view: usize, layers: usize) -> Result<Vec<Tensor>> {
    (0..layers)
        .map(|l| tape.param(store, &layer_name(prefix, per_view, view, l)))
        .collect()
}

pub fn forward<'g>(tape: &mut Tape<'g>, store: &ParamStore, cfg: &TrainConfig, inputs: &'g GraphInputs) -> Result<ForwardPass> {
    let enc = &cfg.encoder;
    let x = tape.constant(inputs.features.clone());
    let mut views = Vec::with_capacity(inputs.num_views());
    for (v, adj) in inputs.adjacency.iter().enumerate() {
        let weights = stack(tape, store, "encoder", enc.per_view_weights, v, enc.hidden.len())?;
        views.push(ge_forward(tape, adj, x, &weights, &enc.activations)?);
    }
    let s = if cfg.variant.uses_mim() {
        let layers = (0..enc.mlp_widths.len())
            .map(|l| {
                Ok(DenseLayer {
                    weight: tape.param(store, &format!("mlp.w{l}"))?,
                    bias: Some(tape.param(store, &format!("mlp.b{l}"))?),
                    activation: enc.mlp_activations[l],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        fuse(tape, &views, &layers)?
    } else {
        let mut sum = views[0];
        for &h in &views[1..] {
            sum = tape.add(sum, h)?;
        }
        tape.scale(sum, 1.0 / views.len() as f64)
    };
    Ok(ForwardPass { views, s })
}

/// Every node of one evaluation of the objective.
#[derive(Clone, Debug)]
pub struct LossGraph {
    pub pass: ForwardPass,
    pub mim: Option<Tensor>,
    pub recon: Tensor,
    pub q: Option<Tensor>,
    pub kl: Option<Tensor>,
    pub total: Tensor,
}

/// Builds the full objective on `tape`. When `refresh` is set (or no target
/// exists yet) the target distribution is recomputed from this pass's `Q`
/// and stored in `target`; otherwise the stored target is used as is.
pub fn loss_graph<'g>(
    tape: &mut Tape<'g>,
    store: &ParamStore,
    cfg: &TrainConfig,
    inputs: &'g GraphInputs,
    target: &mut Option<Matrix>,
    refresh: bool,
) -> Result<LossGraph> {
    let pass = forward(tape, store, cfg, inputs)?;
    let mim = if cfg.variant.uses_mim() {
        Some(mim_loss(tape, &pass.views, pass.s, cfg.temperature)?)
    } else {
        None
    };
    let targets: Vec<Tensor> = inputs.targets.iter().map(|a| tape.constant(a.clone())).collect();
    let recon = if cfg.variant.uses_sir() {
        let per_view = cfg.encoder.per_view_weights;
        let mut specific = Vec::with_capacity(pass.views.len());
        for (v, (&h, adj)) in pass.views.iter().zip(&inputs.adjacency).enumerate() {
            let thetas = stack(tape, store, "sir", per_view, v, cfg.sir.widths.len())?;
            specific.push(sir_forward(tape, adj, h, &thetas, &cfg.sir.activations)?);
        }
        recon_loss(tape, &targets, &pass.views, Some(&specific))?
    } else {
        recon_loss(tape, &targets, &pass.views, None)?
    };
    let (q, kl) = if cfg.variant.uses_kl() {
        let head = ClusterHead {
            centroids: tape.param(store, CENTROIDS)?,
            degrees_of_freedom: cfg.degrees_of_freedom,
        };
        let q = soft_assign(tape, pass.s, &head)?;
        if refresh || target.is_none() {
            *target = Some(target_distribution(tape.value(q))?);
        }
        let p = target.as_ref().expect("target set above");
        (Some(q), Some(kl_loss(tape, p, q)?))
    } else {
        (None, None)
    };
    let total = total_loss(tape, mim, recon, kl, cfg.effective_alpha())?;
    Ok(LossGraph {
        pass,
        mim,
        recon,
        q,
        kl,
        total,
    })
}

/// Parameters, optimiser state and the current target distribution.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub params: ParamStore,
    pub adam: AdamState,
    pub target: Option<Matrix>,
    /// Optimiser steps taken so far.
    pub iteration: usize,
}

impl Model {
    /// Random weights from the seed, then centroids from k-means on the
    /// initial representation.
    pub fn init(inputs: &GraphInputs, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if inputs.n() < cfg.clusters {
            return Err(Error::TooFewPoints {
                need: cfg.clusters,
                got: inputs.n(),
            });
        }
        let params = init_params(cfg, inputs.features.cols(), inputs.num_views(), cfg.seed)?;
        let mut model = Self {
            adam: AdamState::new(cfg.adam, &params),
            config: cfg.clone(),
            params,
            target: None,
            iteration: 0,
        };
        let s = model.embed(inputs)?;
        let init = kmeans::kmeans_restarts(&s, cfg.clusters, cfg.seed, cfg.kmeans_restarts)?;
        model.params.set_value(CENTROIDS, init.centroids)?;
        Ok(model)
    }

    /// Restores a model from saved parameters and optimiser state.
    pub fn from_parts(config: TrainConfig, params: ParamStore, adam: AdamState, iteration: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params,
            adam,
            target: None,
            iteration,
        })
    }

    /// The clustering representation as plain values.
    pub fn embed(&self, inputs: &GraphInputs) -> Result<Matrix> {
        let mut tape = Tape::new();
        let pass = forward(&mut tape, &self.params, &self.config, inputs)?;
        let s = tape.value(pass.s);
        if s.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEmbedding { iteration: self.iteration });
        }
        Ok(s.clone())
    }

    pub fn soft_assignments(&self, inputs: &GraphInputs) -> Result<Matrix> {
        let mut tape = Tape::new();
        let pass = forward(&mut tape, &self.params, &self.config, inputs)?;
        let head = ClusterHead {
            centroids: tape.param(&self.params, CENTROIDS)?,
            degrees_of_freedom: self.config.degrees_of_freedom,
        };
        let q = soft_assign(&mut tape, pass.s, &head)?;
        Ok(tape.value(q).clone())
    }

    /// One forward/backward pass and Adam step. Returns the pre-step losses
    /// (with `seconds` left at 0).
    pub fn step(&mut self, inputs: &GraphInputs) -> Result<IterationRecord> {
        let iteration = self.iteration + 1;
        let refresh = self.iteration.is_multiple_of(self.config.p_update_every);
        let mut tape = Tape::new();
        let graph = loss_graph(&mut tape, &self.params, &self.config, inputs, &mut self.target, refresh)?;
        let read = |t: Option<Tensor>| t.map_or(0.0, |t| tape.scalar(t));
        let record = IterationRecord {
            iteration,
            total: tape.scalar(graph.total),
            mim: read(graph.mim),
            recon: tape.scalar(graph.recon),
            kl: read(graph.kl),
            seconds: 0.0,
        };
        for (term, value) in [("L_I", record.mim), ("L_R", record.recon), ("L_KL", record.kl), ("L", record.total)] {
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { term, iteration, value });
            }
        }
        tape.backward(graph.total, &mut self.params)?;
        adam_step(&mut self.params, &mut self.adam)?;
        self.iteration = iteration;
        Ok(record)
    }

    /// Runs the remaining `config.iterations − iteration` steps. `clock`
    /// returns seconds on any monotonic scale.
    pub fn fit(&mut self, inputs: &GraphInputs, clock: &mut dyn FnMut() -> f64) -> Result<TrainHistory> {
        let start = clock();
        let mut history = TrainHistory::default();
        while self.iteration < self.config.iterations {
            let mut record = self.step(inputs)?;
            record.seconds = clock() - start;
            history.records.push(record);
        }
        Ok(history)
    }

    pub fn predict(&self, inputs: &GraphInputs) -> Result<ClusterPartition> {
        let c = self.config.clusters;
        let labels = match self.config.labels_from {
            LabelSource::Kmeans => {
                let s = self.embed(inputs)?;
                kmeans::kmeans_restarts(&s, c, self.config.seed, self.config.kmeans_restarts)?.labels
            }
            LabelSource::ArgmaxQ => {
                let q = self.soft_assignments(inputs)?;
                (0..q.rows())
                    .map(|i| {
                        q.row(i)
                            .iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |best, (j, &x)| if x > best.1 { (j, x) } else { best })
                            .0
                    })
                    .collect()
            }
        };
        ClusterPartition::new(labels, c)
    }
}

fn no_clock() -> f64 {
    0.0
}

/// Initialises and trains on `data`. History timestamps are all 0; use
/// [`train_with_clock`] to record wall time.
pub fn train(data: &MultiViewGraph, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    train_with_clock(data, cfg, &mut no_clock)
}

pub fn train_with_clock(
    data: &MultiViewGraph,
    cfg: &TrainConfig,
    clock: &mut dyn FnMut() -> f64,
) -> Result<(Model, TrainHistory)> {
    let inputs = GraphInputs::new(data, cfg.raw_recon_target);
    let mut model = Model::init(&inputs, cfg)?;
    let history = model.fit(&inputs, clock)?;
    Ok((model, history))
}

pub fn predict(model: &Model, data: &MultiViewGraph) -> Result<ClusterPartition> {
    model.predict(&GraphInputs::new(data, model.config.raw_recon_target))
}

/// Scores a partition against the dataset's labels.
pub fn evaluate(data: &MultiViewGraph, cfg: &TrainConfig, partition: &ClusterPartition) -> Result<MetricsReport> {
    let truth = data.labels().ok_or(Error::MissingLabels)?;
    metrics::evaluate(
        truth,
        &partition.labels,
        RunMeta {
            seed: cfg.seed,
            variant: cfg.variant.as_str().into(),
            alpha: cfg.effective_alpha(),
        },
    )
}

/// Trains `variant` with otherwise identical settings and evaluates it.
pub fn ablate(data: &MultiViewGraph, cfg: &TrainConfig, variant: Variant) -> Result<(MetricsReport, TrainHistory)> {
    ablate_with_clock(data, cfg, variant, &mut no_clock)
}

pub fn ablate_with_clock(
    data: &MultiViewGraph,
    cfg: &TrainConfig,
    variant: Variant,
    clock: &mut dyn FnMut() -> f64,
) -> Result<(MetricsReport, TrainHistory)> {
    if data.labels().is_none() {
        return Err(Error::MissingLabels);
    }
    let cfg = TrainConfig { variant, ..cfg.clone() };
    let inputs = GraphInputs::new(data, cfg.raw_recon_target);
    let mut model = Model::init(&inputs, &cfg)?;
    let history = model.fit(&inputs, clock)?;
    let partition = model.predict(&inputs)?;
    Ok((evaluate(data, &cfg, &partition)?, history))
}
