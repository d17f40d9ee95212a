//! Per-run reports, loss history tables and aggregates.
//!
//! `report.json` holds only values that are reproducible from the config and
//! seed; wall-clock data goes to `run_meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use diagc_core::{MetricsReport, TrainHistory};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_owned(),
        source,
    }
}

/// One training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub variant: String,
    /// KL weight actually applied.
    pub alpha: f64,
    pub clusters: usize,
    pub n: usize,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Absent when the dataset has no labels.
    pub metrics: Option<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub started_unix: u64,
    pub train_seconds: f64,
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    #[serde(rename = "L")]
    total: f64,
    #[serde(rename = "L_I")]
    mim: f64,
    #[serde(rename = "L_R")]
    recon: f64,
    #[serde(rename = "L_KL")]
    kl: f64,
    seconds: f64,
}

pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in &history.records {
        w.serialize(HistoryRow {
            iteration: r.iteration,
            total: r.total,
            mim: r.mim,
            recon: r.recon,
            kl: r.kl,
            seconds: r.seconds,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

/// Mean and population standard deviation of each metric over a group of
/// runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub runs: usize,
    pub acc: f64,
    pub f1: f64,
    pub nmi: f64,
    pub ari: f64,
    pub acc_std: f64,
    pub f1_std: f64,
    pub nmi_std: f64,
    pub ari_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AggregateRow {
    /// `None` when no report carries metrics.
    pub fn from_reports(label: &str, reports: &[RunReport]) -> Option<Self> {
        let metrics: Vec<&MetricsReport> = reports.iter().filter_map(|r| r.metrics.as_ref()).collect();
        if metrics.is_empty() {
            return None;
        }
        let col = |f: fn(&MetricsReport) -> f64| mean_std(&metrics.iter().map(|m| f(m)).collect::<Vec<_>>());
        let (acc, acc_std) = col(|m| m.acc);
        let (f1, f1_std) = col(|m| m.f1);
        let (nmi, nmi_std) = col(|m| m.nmi);
        let (ari, ari_std) = col(|m| m.ari);
        Some(Self {
            label: label.into(),
            runs: metrics.len(),
            acc,
            f1,
            nmi,
            ari,
            acc_std,
            f1_std,
            nmi_std,
            ari_std,
        })
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_aggregate(dir: &Path, stem: &str, rows: &[AggregateRow]) -> Result<()> {
    let path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io(&path))?;
    write_json(&dir.join(format!("{stem}.json")), &rows)
}

/// Plain-text table of the four metric means.
pub fn format_table(rows: &[AggregateRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{:width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>4}\n", "", "ACC", "F1", "NMI", "ARI", "runs");
    for r in rows {
        out.push_str(&format!(
            "{:width$}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>4}\n",
            r.label, r.acc, r.f1, r.nmi, r.ari, r.runs
        ));
    }
    out
}
