//! JSON checkpoints: parameters by name plus Adam state.

use std::fs;
use std::path::{Path, PathBuf};

use diagc_core::{AdamConfig, AdamState, Matrix, Model, ParamStore, TrainConfig};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "diagc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
}

/// One parameter, values row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub config: AdamConfig,
    pub step: u64,
    /// Moment estimates in parameter order.
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub iteration: usize,
    pub config: TrainConfig,
    pub params: Vec<ParamRecord>,
    pub adam: AdamRecord,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let params = model
            .params
            .iter()
            .map(|p| ParamRecord {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.as_slice().to_vec(),
            })
            .collect();
        let flat = |ms: &[Matrix]| ms.iter().map(|m| m.as_slice().to_vec()).collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            iteration: model.iteration,
            config: model.config.clone(),
            params,
            adam: AdamRecord {
                config: model.adam.config,
                step: model.adam.step_count(),
                first: flat(model.adam.first_moments()),
                second: flat(model.adam.second_moments()),
            },
        }
    }

    pub fn into_model(self) -> Result<Model, diagc_core::Error> {
        let mut store = ParamStore::new();
        let mut shapes = Vec::with_capacity(self.params.len());
        for p in self.params {
            shapes.push((p.rows, p.cols));
            store.insert(&p.name, Matrix::from_vec(p.rows, p.cols, p.values)?)?;
        }
        let unflat = |vs: Vec<Vec<f64>>| -> Result<Vec<Matrix>, diagc_core::Error> {
            if vs.len() != shapes.len() {
                return Err(diagc_core::Error::InvalidConfig(format!(
                    "{} moment entries for {} parameters",
                    vs.len(),
                    shapes.len()
                )));
            }
            vs.into_iter().zip(&shapes).map(|(v, &(r, c))| Matrix::from_vec(r, c, v)).collect()
        };
        let first = unflat(self.adam.first)?;
        let second = unflat(self.adam.second)?;
        let adam = AdamState::from_parts(self.adam.config, self.adam.step, first, second, &store)?;
        Model::from_parts(self.config, store, adam, self.iteration)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, text).map_err(|source| CheckpointError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let invalid = |msg: String| CheckpointError::Invalid {
            path: path.to_owned(),
            msg,
        };
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_owned(),
            source,
        })?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        if ck.format != FORMAT {
            return Err(invalid(format!("not a checkpoint (format {:?})", ck.format)));
        }
        if ck.version != VERSION {
            return Err(invalid(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use diagc_core::graphdata::generate_synthetic;
    use diagc_core::trainer::{train, GraphInputs};
    use diagc_core::{Activation, SyntheticSpec};

    #[test]
    fn round_trip_resumes_identically() {
        let data = generate_synthetic(&SyntheticSpec::planted(20, 2, 2, 0.5, 0.05, 2.0, 1)).unwrap();
        let mut cfg = TrainConfig {
            iterations: 4,
            clusters: 2,
            kmeans_restarts: 2,
            ..TrainConfig::default()
        };
        cfg.encoder.hidden = vec![8, 4];
        cfg.encoder.mlp_widths = vec![4];
        cfg.encoder.mlp_activations = vec![Activation::Identity];
        cfg.sir.widths = vec![3];
        cfg.sir.activations = vec![Activation::Identity];

        let (full, _) = train(&data, &cfg).unwrap();
        let (half, _) = train(&data, &TrainConfig { iterations: 2, ..cfg.clone() }).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        Checkpoint::from_model(&half).save(&path).unwrap();
        let mut resumed = Checkpoint::load(&path).unwrap().into_model().unwrap();
        assert_eq!(resumed.params, half.params);
        assert_eq!(resumed.adam, half.adam);

        resumed.config.iterations = 4;
        let inputs = GraphInputs::new(&data, false);
        resumed.fit(&inputs, &mut || 0.0).unwrap();
        assert_eq!(resumed.params, full.params);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        fs::write(&path, "{\"format\":\"other\"}").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
