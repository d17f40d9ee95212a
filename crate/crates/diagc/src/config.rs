//! Run configuration files (TOML) and `key=value` overrides.
//!
//! ```toml
//! output_dir = "runs/planted"   # relative to this file
//! repeat = 5                    # seeds train.seed, train.seed + 1, …
//!
//! [synthetic]                   # or: dataset = "data/acm/dataset.toml"
//! n = 300
//! c = 3
//!
//! [train]
//! iterations = 200
//! alpha = 0.01
//! ```
//!
//! Precedence is flag > config file > default. Overrides use dotted keys
//! (`train.encoder.hidden=[32,16]`); the value is read as a TOML literal
//! and falls back to a plain string.

use std::fs;
use std::path::{Path, PathBuf};

use diagc_core::graphdata::{generate_synthetic, ViewProbs, DEFAULT_FEATURE_DIM};
use diagc_core::{MultiViewGraph, SyntheticSpec, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::formats::{self, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("override {0:?}: expected key=value")]
    Override(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] diagc_core::Error),
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;

/// The α grid used by `sweep` when the config gives none.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0001, 0.001, 0.01, 0.1, 1.0];

/// Planted-partition dataset generated on the fly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n: usize,
    pub c: usize,
    pub views: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_signal: f64,
    /// Defaults to `train.seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Per-view probabilities; overrides `views`, `p_in` and `p_out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_probs: Option<Vec<ViewProbs>>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            n: 300,
            c: 3,
            views: 2,
            p_in: 0.2,
            p_out: 0.01,
            feature_dim: DEFAULT_FEATURE_DIM,
            feature_signal: 2.0,
            seed: None,
            view_probs: None,
        }
    }
}

impl SyntheticSection {
    pub fn spec(&self, fallback_seed: u64) -> SyntheticSpec {
        let views = self
            .view_probs
            .clone()
            .unwrap_or_else(|| vec![ViewProbs { p_in: self.p_in, p_out: self.p_out }; self.views]);
        SyntheticSpec {
            n: self.n,
            c: self.c,
            views,
            feature_dim: self.feature_dim,
            feature_signal: self.feature_signal,
            seed: self.seed.unwrap_or(fallback_seed),
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub repeat: usize,
    /// Run repeats on separate threads (results merge in seed order).
    #[serde(default)]
    pub parallel: bool,
    /// Variants for `ablate`; all four when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<String>>,
    /// α grid for `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    /// `train.clusters = 0` (or absent) takes `c` from the dataset labels.
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config deserializes")
    }
}

/// Sets `table[a][b]… = value` for the dotted `key`.
fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| ConfigError::Override(key.into()))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `key=value` overrides to a parsed table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        set_dotted(table, key.trim(), parse_literal(raw.trim()))?;
    }
    Ok(())
}

impl RunConfig {
    /// Parses `text` with overrides applied; relative paths stay relative.
    pub fn from_toml(text: &str, overrides: &[String], origin: &Path) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            msg: e.to_string(),
        })?;
        apply_overrides(&mut table, overrides)?;
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: origin.to_owned(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `dataset` and `output_dir` are resolved against
    /// the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, overrides, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &cfg.dataset {
            cfg.dataset = Some(base.join(d));
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("set either `dataset` or `[synthetic]`, not both".into())),
            (None, None) => return Err(ConfigError::Invalid("no data: set `dataset` or `[synthetic]`".into())),
            _ => {}
        }
        if self.repeat == 0 {
            return Err(ConfigError::Invalid("repeat must be at least 1".into()));
        }
        self.variants()?;
        if let Some(a) = &self.alphas {
            if a.is_empty() {
                return Err(ConfigError::Invalid("alphas must not be empty".into()));
            }
        }
        if let Some(s) = &self.synthetic {
            s.spec(self.train.seed).validate()?;
        }
        // Cluster count may still be inherited; check the rest with a stand-in.
        let probe = TrainConfig {
            clusters: self.train.clusters.max(2),
            ..self.train.clone()
        };
        probe.validate()?;
        Ok(())
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        match &self.variants {
            None => Ok(Variant::ALL.to_vec()),
            Some(v) if v.is_empty() => Err(ConfigError::Invalid("variants must not be empty".into())),
            Some(v) => Ok(v.iter().map(|s| s.parse()).collect::<Result<_, _>>()?),
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec())
    }

    pub fn load_data(&self) -> Result<MultiViewGraph> {
        match (&self.dataset, &self.synthetic) {
            (Some(path), None) => Ok(formats::load_dataset(path)?),
            (None, Some(s)) => Ok(generate_synthetic(&s.spec(self.train.seed))?),
            _ => Err(ConfigError::Invalid("set exactly one of `dataset` and `[synthetic]`".into())),
        }
    }

    /// The training config with `clusters` filled in from the data when
    /// inherited.
    pub fn resolve_train(&self, data: &MultiViewGraph) -> Result<TrainConfig> {
        let mut train = self.train.clone();
        if train.clusters == 0 {
            train.clusters = data.num_clusters().ok_or_else(|| {
                ConfigError::Invalid("train.clusters is not set and the dataset has no labels".into())
            })?;
        }
        train.validate()?;
        Ok(train)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
