use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chain has no states")]
    Empty,
    #[error("state {state}: row sums to {sum}")]
    NonStochasticRow { state: usize, sum: f64 },
    #[error("state {state}: invalid probability {value} for successor {target}")]
    InvalidProbability { state: usize, target: usize, value: f64 },
    #[error("state {state}: successor {target} out of range")]
    TargetOutOfRange { state: usize, target: usize },
    #[error("state {state}: label id {label} out of range")]
    UnknownLabel { state: usize, label: u32 },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("block {block} not lumpable: states {s} and {t} differ by {deviation}")]
    NotLumpable { block: usize, s: usize, t: usize, deviation: f64 },
    #[error("states {s} and {t} carry different labels")]
    LabelMismatch { s: usize, t: usize },
    #[error("pair ({0}, {0}) is not a pair of distinct states")]
    SameState(usize),
    #[error("state {0} out of range")]
    StateOutOfRange(usize),
    #[error("not a distribution: {0}")]
    NotADistribution(String),
    #[error("chain mismatch: {0}")]
    ChainMismatch(String),
    #[error("verification failed: {}", .0.join("; "))]
    VerificationFailed(Vec<String>),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema version {found} not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("validation: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
