use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("sentence {index}: gold and predicted token sequences differ")]
    Alignment { index: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("sentence has no tokens")]
    EmptySentence,

    #[error("empty word")]
    EmptyWord,

    #[error("invalid score {value} at instance {batch}, span ({start}, {end})")]
    InvalidScore {
        batch: usize,
        start: usize,
        end: usize,
        value: f64,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("empty label set")]
    EmptyLabelSet,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{0}")]
    OutOfRange(String),

    #[error("backward called without a recorded forward pass")]
    NoTape,

    #[error("non-finite function value while differentiating coordinate {0}")]
    NonFiniteEvaluation(usize),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
