use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("{op} requires positive inputs, found {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("node index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("node count must be positive")]
    EmptyGraph,
    #[error("duplicate adjacency entry ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("adjacency is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("finite-difference epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("cluster {0} has zero total soft assignment")]
    EmptyCluster(usize),
    #[error("non-finite {term} loss at iteration {iteration}: {value}")]
    NonFiniteLoss {
        term: &'static str,
        iteration: usize,
        value: f64,
    },
    #[error("non-finite embedding after {iteration} iterations")]
    NonFiniteEmbedding { iteration: usize },
    #[error("label vectors differ in length: {truth} vs {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label vector is empty")]
    EmptyLabels,
    #[error("unknown ablation variant `{0}`")]
    UnknownVariant(String),
    #[error("dataset has no ground-truth labels")]
    MissingLabels,
}

impl Error {
    /// Failures caused by the optimisation itself diverging rather than by
    /// bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFiniteEmbedding { .. } | Error::EmptyCluster(_) | Error::Domain { .. }
        )
    }
}
