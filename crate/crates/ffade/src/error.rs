use thiserror::Error;

/// Errors surfaced by parsing, streaming, scoring and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },

    #[error("event {index} at time {time} arrives after tick {current} was emitted")]
    OutOfOrder { index: u64, time: u64, current: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("skeleton is empty")]
    EmptySkeleton,

    #[error("group score requires a non-empty group")]
    EmptyGroup,

    #[error("intensity parameter must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("AUC needs both classes present (got {positives} positives, {negatives} negatives)")]
    OneClass { positives: usize, negatives: usize },

    #[error("scores/labels length mismatch: {scores} scores vs {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },

    #[error("snapshot version {found} is not supported (expected {expected})")]
    SnapshotVersion { found: u32, expected: u32 },

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
