//! Subcommand implementations, independent of argument parsing.
//!
//! Output layout for `train` (and each group of `sweep`/`ablate`):
//!
//! ```text
//! <output_dir>/config.toml            resolved run config
//! <output_dir>/run-00-seed-<s>/       checkpoint.json, history.csv,
//!                                     labels.txt, report.json, run_meta.json
//! <output_dir>/aggregate.{csv,json}   metric means over the runs
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use diagc_core::graphdata::generate_synthetic;
use diagc_core::trainer::{evaluate, GraphInputs, Model};
use diagc_core::{metrics, MetricsReport, MultiViewGraph, SyntheticSpec, TrainConfig, TrainHistory};

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, RunConfig};
use crate::formats;
use crate::report::{self, AggregateRow, RunMeta, RunReport};
use crate::verify::{self, OracleResult};

/// Command failure, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input: config, dataset, arguments or IO. Exit code 1.
    Validation(anyhow::Error),
    /// Training diverged (non-finite loss or embedding, collapsed
    /// assignments). Exit code 2.
    Numerical(anyhow::Error),
    /// An oracle suite failed. Exit code 3.
    Oracle(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Oracle(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "error: {e:#}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e:#}"),
            Failure::Oracle(msg) => write!(f, "oracle failure: {msg}"),
        }
    }
}

impl From<diagc_core::Error> for Failure {
    fn from(e: diagc_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.into())
        } else {
            Failure::Validation(e.into())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Core(core) => core.into(),
            other => Failure::Validation(other.into()),
        }
    }
}

fn invalid<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Validation(e.into())
}

pub type Result<T, E = Failure> = std::result::Result<T, E>;

/// Loads a run config and applies CLI overrides. An explicit output
/// directory is taken as given (relative to the working directory).
pub fn load_config(path: &Path, overrides: &[String], output: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path, overrides)?;
    if let Some(o) = output {
        cfg.output_dir = o.to_owned();
    }
    Ok(cfg)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Validation)
}

/// Trains one seed and writes its artifacts into `dir`.
pub fn run_once(data: &MultiViewGraph, cfg: &TrainConfig, dir: &Path) -> Result<(RunReport, TrainHistory)> {
    create_dir(dir)?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let start = Instant::now();
    let mut clock = || start.elapsed().as_secs_f64();
    let inputs = GraphInputs::new(data, cfg.raw_recon_target);
    let mut model = Model::init(&inputs, cfg)?;
    let history = model.fit(&inputs, &mut clock)?;
    let partition = model.predict(&inputs)?;
    let train_seconds = clock();

    let metrics = match data.labels() {
        Some(_) => Some(evaluate(data, cfg, &partition)?),
        None => None,
    };
    let run = RunReport {
        seed: cfg.seed,
        variant: cfg.variant.as_str().into(),
        alpha: cfg.effective_alpha(),
        clusters: cfg.clusters,
        n: data.n(),
        iterations: history.len(),
        initial_loss: history.initial_loss().unwrap_or(f64::NAN),
        final_loss: history.final_loss().unwrap_or(f64::NAN),
        metrics,
    };
    Checkpoint::from_model(&model).save(&dir.join("checkpoint.json")).map_err(invalid)?;
    report::write_history(&dir.join("history.csv"), &history).map_err(invalid)?;
    formats::save_labels(&dir.join("labels.txt"), &partition.labels).map_err(invalid)?;
    report::write_json(&dir.join("report.json"), &run).map_err(invalid)?;
    report::write_json(
        &dir.join("run_meta.json"),
        &RunMeta {
            started_unix,
            train_seconds,
        },
    )
    .map_err(invalid)?;
    Ok((run, history))
}

/// Seeds `cfg.seed, cfg.seed + 1, …`; reports come back in seed order
/// whether or not the runs execute in parallel.
pub fn run_repeats(data: &MultiViewGraph, cfg: &TrainConfig, repeat: usize, parallel: bool, dir: &Path) -> Result<Vec<RunReport>> {
    let jobs: Vec<(TrainConfig, PathBuf)> = (0..repeat)
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k as u64);
            (
                TrainConfig { seed, ..cfg.clone() },
                dir.join(format!("run-{k:02}-seed-{seed}")),
            )
        })
        .collect();
    let results: Vec<Result<(RunReport, TrainHistory)>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|(c, d)| s.spawn(move || run_once(data, c, d))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Failure::Validation(anyhow!("training thread panicked")))))
                .collect()
        })
    } else {
        jobs.iter().map(|(c, d)| run_once(data, c, d)).collect()
    };
    results.into_iter().map(|r| r.map(|(rep, _)| rep)).collect()
}

/// Loads the data and resolves the training config before anything is
/// written, so a bad config leaves no artifacts behind.
fn prepare(cfg: &RunConfig) -> Result<(MultiViewGraph, TrainConfig)> {
    let data = cfg.load_data()?;
    let train = cfg.resolve_train(&data)?;
    Ok((data, train))
}

fn write_config(cfg: &RunConfig, train: &TrainConfig) -> Result<()> {
    create_dir(&cfg.output_dir)?;
    let resolved = RunConfig {
        train: train.clone(),
        ..cfg.clone()
    };
    let path = cfg.output_dir.join("config.toml");
    fs::write(&path, resolved.to_toml())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Validation)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub reports: Vec<RunReport>,
    pub aggregate: Option<AggregateRow>,
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (data, train) = prepare(cfg)?;
    write_config(cfg, &train)?;
    let reports = run_repeats(&data, &train, cfg.repeat, cfg.parallel, &cfg.output_dir)?;
    let aggregate = AggregateRow::from_reports(train.variant.as_str(), &reports);
    if let Some(row) = &aggregate {
        report::write_aggregate(&cfg.output_dir, "aggregate", std::slice::from_ref(row)).map_err(invalid)?;
    }
    Ok(TrainOutcome { reports, aggregate })
}

/// Largest absolute metric spread across sweep points above which the
/// sweep reports α sensitivity.
pub const SWEEP_SPREAD: f64 = 0.15;

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<AggregateRow>,
    /// Max minus min of each metric mean (ACC, F1, NMI, ARI) across α.
    pub spread: [f64; 4],
}

impl SweepOutcome {
    pub fn stable(&self) -> bool {
        self.spread.iter().all(|&s| s <= SWEEP_SPREAD)
    }
}

fn alpha_label(alpha: f64) -> String {
    format!("alpha={alpha}")
}

pub fn sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let alphas = cfg.alphas();
    let (data, train) = prepare(cfg)?;
    if data.labels().is_none() {
        return Err(diagc_core::Error::MissingLabels.into());
    }
    write_config(cfg, &train)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let point = TrainConfig { alpha, ..train.clone() };
        point.validate()?;
        let dir = cfg.output_dir.join(alpha_label(alpha));
        let reports = run_repeats(&data, &point, cfg.repeat, cfg.parallel, &dir)?;
        let row = AggregateRow::from_reports(&alpha_label(alpha), &reports).expect("labelled data");
        report::write_aggregate(&dir, "aggregate", std::slice::from_ref(&row)).map_err(invalid)?;
        rows.push(row);
    }
    report::write_aggregate(&cfg.output_dir, "sweep", &rows).map_err(invalid)?;
    let range = |f: fn(&AggregateRow) -> f64| {
        let (lo, hi) = rows.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        hi - lo
    };
    let spread = [range(|r| r.acc), range(|r| r.f1), range(|r| r.nmi), range(|r| r.ari)];
    Ok(SweepOutcome { rows, spread })
}

pub fn ablate(cfg: &RunConfig) -> Result<Vec<AggregateRow>> {
    let variants = cfg.variants()?;
    let (data, train) = prepare(cfg)?;
    if data.labels().is_none() {
        return Err(diagc_core::Error::MissingLabels.into());
    }
    write_config(cfg, &train)?;
    let mut rows = Vec::with_capacity(variants.len());
    for variant in variants {
        let v_cfg = TrainConfig { variant, ..train.clone() };
        let dir = cfg.output_dir.join(variant.as_str());
        let reports = run_repeats(&data, &v_cfg, cfg.repeat, cfg.parallel, &dir)?;
        let row = AggregateRow::from_reports(variant.as_str(), &reports).expect("labelled data");
        report::write_aggregate(&dir, "aggregate", std::slice::from_ref(&row)).map_err(invalid)?;
        rows.push(row);
    }
    report::write_aggregate(&cfg.output_dir, "ablation", &rows).map_err(invalid)?;
    Ok(rows)
}

/// Generates a planted-partition dataset into `dir`; returns the manifest
/// path.
pub fn synth(spec: &SyntheticSpec, dir: &Path) -> Result<PathBuf> {
    let data = generate_synthetic(spec)?;
    formats::save_dataset(dir, &data, Some("synthetic")).map_err(invalid)
}

/// Metrics between two label files.
pub fn eval(truth: &Path, pred: &Path) -> Result<MetricsReport> {
    let t = formats::load_raw_labels(truth).map_err(invalid)?;
    let p = formats::load_raw_labels(pred).map_err(invalid)?;
    Ok(metrics::evaluate(&t, &p, metrics::RunMeta::default())?)
}

/// Runs every oracle suite; fails when any suite fails.
pub fn verify(seed: u64) -> Result<Vec<OracleResult>, (Vec<OracleResult>, Failure)> {
    let results = verify::run_all(seed);
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(results)
    } else {
        let msg = failed.join(", ");
        Err((results, Failure::Oracle(msg)))
    }
}

