//! Plain-text dataset files and the TOML dataset manifest.
//!
//! * Features: header `N D`, then `N` lines of `D` whitespace-separated reals.
//! * Edges (one file per view): one `u v` pair per line, 0-based. Each
//!   undirected edge may appear once or twice; self-loops are ignored.
//! * Labels: one integer per line. Ids are densified on load (sorted
//!   distinct ids map to `0..c`).
//!
//! Blank lines and lines starting with `#` are skipped in every file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use diagc_core::metrics::densify;
use diagc_core::{FeatureMatrix, Matrix, MultiViewGraph, SparseAdjacency};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: diagc_core::Error,
    },
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_owned(),
        line,
        msg: msg.into(),
    }
}

fn parse_usize(path: &Path, line: usize, tok: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("{what}: expected a non-negative integer, found {tok:?}")))
}

pub fn parse_features(path: &Path, text: &str) -> Result<FeatureMatrix> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "missing `N D` header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(path, hline, format!("header must be `N D`, found {header:?}")));
    }
    let n = parse_usize(path, hline, dims[0], "N")?;
    let d = parse_usize(path, hline, dims[1], "D")?;
    if n == 0 || d == 0 {
        return Err(parse_err(path, hline, "N and D must be positive"));
    }
    let mut values = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (line, l) in lines {
        rows += 1;
        if rows > n {
            return Err(parse_err(path, line, format!("expected {n} rows, found more")));
        }
        let before = values.len();
        for tok in l.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric value {tok:?}")))?;
            if !x.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
            }
            values.push(x);
        }
        if values.len() - before != d {
            return Err(parse_err(path, line, format!("expected {d} values, found {}", values.len() - before)));
        }
    }
    if rows != n {
        return Err(FormatError::Invalid {
            path: path.to_owned(),
            msg: format!("expected {n} rows, found {rows}"),
        });
    }
    let m = Matrix::from_vec(n, d, values).expect("row lengths checked");
    FeatureMatrix::new(m).map_err(|source| FormatError::Data {
        path: path.to_owned(),
        source,
    })
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    parse_features(path, &read(path)?)
}

pub fn format_features(features: &FeatureMatrix) -> String {
    let m = features.values();
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    write(path, &format_features(features))
}

pub fn parse_edges(path: &Path, text: &str, n: usize) -> Result<SparseAdjacency> {
    if n == 0 {
        return Err(FormatError::Invalid {
            path: path.to_owned(),
            msg: "node count must be positive".into(),
        });
    }
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(path, line, format!("expected `u v`, found {l:?}")));
        }
        let u = parse_usize(path, line, toks[0], "u")?;
        let v = parse_usize(path, line, toks[1], "v")?;
        if let Some(&bad) = [u, v].iter().find(|&&x| x >= n) {
            return Err(parse_err(path, line, format!("index {bad} ≥ n = {n}")));
        }
        edges.push((u, v));
    }
    SparseAdjacency::from_edges(n, edges).map_err(|source| FormatError::Data {
        path: path.to_owned(),
        source,
    })
}

pub fn load_edge_view(path: &Path, n: usize) -> Result<SparseAdjacency> {
    parse_edges(path, &read(path)?, n)
}

/// Each undirected edge once, as `u v` with `u < v`.
pub fn format_edges(adj: &SparseAdjacency) -> String {
    let mut out = String::new();
    for (u, v) in adj.upper_edges() {
        writeln!(out, "{u} {v}").expect("writing to a String");
    }
    out
}

pub fn save_edge_view(path: &Path, adj: &SparseAdjacency) -> Result<()> {
    write(path, &format_edges(adj))
}

/// Labels as written; see [`load_labels`] for the densified form.
pub fn parse_raw_labels(path: &Path, text: &str) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(line, l)| parse_usize(path, line, l, "label"))
        .collect()
}

pub fn load_raw_labels(path: &Path) -> Result<Vec<usize>> {
    parse_raw_labels(path, &read(path)?)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let raw = load_raw_labels(path)?;
    if raw.is_empty() {
        return Err(FormatError::Invalid {
            path: path.to_owned(),
            msg: "no labels".into(),
        });
    }
    Ok(densify(&raw).0)
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    write(path, &format_labels(labels))
}

/// One adjacency view in a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub edges: PathBuf,
}

/// Dataset manifest. Paths are relative to the manifest's directory.
///
/// ```toml
/// name = "acm"
/// features = "features.txt"
/// labels = "labels.txt"
/// clusters = 3
///
/// [[views]]
/// name = "PAP"
/// edges = "pap.txt"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Checked against the label file when both are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    pub views: Vec<ViewEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read(path)?).map_err(|e| FormatError::Invalid {
            path: path.to_owned(),
            msg: e.to_string(),
        })
    }
}

/// Loads every file named by the manifest at `path`.
pub fn load_dataset(path: &Path) -> Result<MultiViewGraph> {
    let manifest = DatasetManifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let features = load_features(&base.join(&manifest.features))?;
    let n = features.n();
    let views = manifest
        .views
        .iter()
        .map(|v| load_edge_view(&base.join(&v.edges), n))
        .collect::<Result<Vec<_>>>()?;
    let labels = match &manifest.labels {
        Some(p) => {
            let labels = load_labels(&base.join(p))?;
            let c = labels.iter().max().map_or(0, |m| m + 1);
            if manifest.clusters.is_some_and(|k| k != c) {
                return Err(FormatError::Invalid {
                    path: path.to_owned(),
                    msg: format!("manifest says {} clusters but labels have {c}", manifest.clusters.unwrap()),
                });
            }
            Some(labels)
        }
        None => None,
    };
    let names = if manifest.views.iter().all(|v| v.name.is_some()) {
        Some(manifest.views.iter().map(|v| v.name.clone().unwrap()).collect())
    } else {
        None
    };
    MultiViewGraph::new(features, views, labels, names).map_err(|source| FormatError::Data {
        path: path.to_owned(),
        source,
    })
}

/// Writes `features.txt`, `view{v}.txt`, `labels.txt` (when present) and
/// `dataset.toml` into `dir`; returns the manifest path.
pub fn save_dataset(dir: &Path, data: &MultiViewGraph, name: Option<&str>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| FormatError::Io {
        path: dir.to_owned(),
        source,
    })?;
    save_features(&dir.join("features.txt"), data.features())?;
    let mut views = Vec::new();
    for (v, adj) in data.views().iter().enumerate() {
        let file = PathBuf::from(format!("view{v}.txt"));
        save_edge_view(&dir.join(&file), adj)?;
        views.push(ViewEntry {
            name: data.names().map(|n| n[v].clone()),
            edges: file,
        });
    }
    let labels = match data.labels() {
        Some(l) => {
            save_labels(&dir.join("labels.txt"), l)?;
            Some(PathBuf::from("labels.txt"))
        }
        None => None,
    };
    let manifest = DatasetManifest {
        name: name.map(String::from),
        features: "features.txt".into(),
        labels,
        clusters: data.num_clusters(),
        views,
    };
    let path = dir.join("dataset.toml");
    write(&path, &toml::to_string(&manifest).expect("manifest serializes"))?;
    Ok(path)
}
