use thiserror::Error;

/// Errors raised by model construction, profile handling and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input side {0} must lie in 32..=1024 and be divisible by 32")]
    InvalidInputSide(u32),

    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("the stem (block 1) can never be dropped")]
    StemDropped,

    #[error("block {0} is not droppable")]
    NotDroppable(usize),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("block {block} cannot be reached: the dropped run before it spans {sigma} blocks and no skip edge bridges it (max skip {max_skip})")]
    UnbridgeableDrop {
        block: usize,
        sigma: usize,
        max_skip: usize,
    },

    #[error("profile parse error: {0}")]
    Parse(String),

    #[error("invalid profile entry {entry}: {reason}")]
    Validation { entry: String, reason: String },

    #[error("no drop set reaches the accuracy threshold {threshold} (baseline {baseline})")]
    EmptyFeasibleSet { threshold: f64, baseline: f64 },

    #[error("request {request} drops the unprofiled set {drop_set}")]
    UnprofiledDropSet { request: usize, drop_set: String },

    #[error("block {block} of request {request} is kept but has no host device")]
    UncoveredBlock { request: usize, block: usize },

    #[error("infeasible instance: {0}")]
    InfeasibleInstance(String),

    #[error("exhaustive search needs {size} candidate evaluations, limit is {limit}")]
    InstanceTooLarge { size: u128, limit: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
