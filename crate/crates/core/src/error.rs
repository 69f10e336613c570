use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("LLM call budget exhausted ({limit} calls)")]
    BudgetExceeded { limit: u32 },
    #[error("scripted port requires ground-truth labels on the trajectory")]
    StubRequiresLabels,
    #[error("refinement rejected: {0}")]
    RefinementRejected(String),
    #[error("snapshot parse error at byte {offset} (line {line}, column {column}): {message}")]
    SnapshotParse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported snapshot version {0:?}")]
    SnapshotVersion(String),
    #[error("library at capacity and pruning yielded no slot")]
    CapacityExhausted,
    #[error("meta-procedure member {0} does not resolve in the library")]
    UnresolvedMember(String),
    #[error("bayes_superiority needs at least 1000 samples, got {0}")]
    TooFewSamples(usize),
    #[error("prior fit did not converge; last iterate ({0}, {1})")]
    FitFailed(f64, f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("task not parsable: {0}")]
    TaskUnparsable(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;
