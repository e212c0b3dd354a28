use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid disease code {0:?} (expected letter followed by two digits)")]
    InvalidCode(String),

    #[error("duplicate patient id {0:?}")]
    DuplicatePatientId(String),

    #[error("degenerate cohort: {0}")]
    DegenerateCohort(String),

    #[error("invalid cohort: {0}")]
    InvalidCohort(String),

    #[error("generator spec is not separable: p_case {p_case} <= p_base {p_base}")]
    NonSeparableSpec { p_case: f64, p_base: f64 },

    #[error("empty population")]
    EmptyPopulation,

    #[error("correlation undefined: both prevalences are zero")]
    UndefinedCorrelation,

    #[error("differential network has no nodes")]
    DegenerateDdn,

    #[error("pagerank did not converge after {iterations} iterations (residual {residual:e})")]
    PageRankDiverged { iterations: usize, residual: f64 },

    #[error("patient network is empty")]
    EmptyPatientNetwork,

    #[error("structural intervention fit diverged at iteration {iteration}; lower the learning rate")]
    StructFitDiverged { iteration: usize },

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("backward called without a recorded forward pass")]
    NoTape,

    #[error("empty mask")]
    EmptyMask,

    #[error("class {class} has {count} members; at least {required} required")]
    InsufficientClass {
        class: String,
        count: usize,
        required: usize,
    },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("no patient carries any target code")]
    NoTargetReached,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
