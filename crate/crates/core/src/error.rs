use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("malformed tour: {0}")]
    MalformedTour(String),
    #[error("exact oracle capacity exceeded: n={n} > limit {limit}")]
    ExactOracleCapacity { n: usize, limit: usize },
    #[error("invalid oracle value: {0}")]
    InvalidOracleValue(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("degenerate normalization after {0} attempts")]
    DegenerateNormalization(usize),
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput((usize, usize)),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("policy produced non-finite logits")]
    NonFiniteLogits,
    #[error("flow produced non-finite output")]
    NonFiniteFlow,
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("non-finite utility entry at ({row}, {col})")]
    NonFiniteUtility { row: usize, col: usize },
    #[error("meta-game LP failed: {0}")]
    LpFailed(String),
    #[error("utility cell ({row}, {col}): {source}")]
    Cell {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("training aborted at epoch {epoch}: {source}")]
    TrainingAborted {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("task selection: {0}")]
    TaskSelection(String),
    #[error("missing evaluation dataset for scale {0}")]
    MissingEvalSet(usize),
    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
