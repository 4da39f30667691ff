use thiserror::Error;

use crate::planner::StreamId;

pub type Result<T, E = IacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IacError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("last MAC carries {streams} streams but only {antennas} antennas are available")]
    UnseparableTail { streams: usize, antennas: usize },
    #[error("index {index} outside [{lo}, {hi}]")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("subset universe has {size} elements, exhaustive mode is capped at {cap}")]
    SubsetUniverseTooLarge { size: usize, cap: usize },
    #[error("cannot build a maximum-DoF configuration for K={macs}, M={antennas}: {reason}")]
    ConstructionImpossible {
        macs: usize,
        antennas: usize,
        reason: String,
    },
    #[error("configuration admits no closed-form solution; failing: {failing:?}")]
    Infeasible { failing: Vec<String> },
    #[error("invalid alignment plan: {0}")]
    InvalidPlan(String),
    #[error("alignment plan search exhausted without a pseudoforest")]
    PlanNotFound,
    #[error("unknown vertex {0}")]
    UnknownVertex(StreamId),
    #[error("component {component} has {cycles} independent cycles")]
    MoreThanOneLoop { component: usize, cycles: usize },
    #[error("channel from user [{user},{mac}] to receiver {receiver} is numerically singular")]
    SingularChannel { receiver: usize, mac: usize, user: usize },
    #[error("eigen-decomposition did not converge")]
    EigenFailure,
    #[error("precoder of user [{user},{mac}] has dependent columns (min singular value {min_sv:e})")]
    DependentColumns { mac: usize, user: usize, min_sv: f64 },
    #[error("receiver {receiver}: interference-free space has {available} dimensions, {required} required")]
    InsufficientSpace {
        receiver: usize,
        available: usize,
        required: usize,
    },
    #[error("receiver {receiver}: interference spans {interference} dimensions, leaving fewer than {required}")]
    ComplementTooSmall {
        receiver: usize,
        interference: usize,
        required: usize,
    },
    #[error("Monte Carlo result has no accepted runs")]
    EmptyResult,
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
