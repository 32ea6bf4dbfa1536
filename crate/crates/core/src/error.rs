use thiserror::Error;

use crate::boxes::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(ValidationReport),

    #[error("correlation value {0} lies outside [-1, 1]")]
    CorrelationOutOfRange(f64),

    #[error("mixing weight {0} lies outside [0, 1]")]
    WeightOutOfRange(f64),

    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),

    #[error("angle must be finite, got {0}")]
    NonFiniteAngle(f64),

    #[error("value must be finite, got {0}")]
    NonFinite(f64),

    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),

    #[error("experiment plan needs at least one round")]
    NoRounds,

    #[error("settings {0:?} were never sampled")]
    MissingSettings(Vec<(usize, usize)>),

    #[error("{which} box is signaling (worst marginal discrepancy {worst_violation:e})")]
    SignalingBox {
        which: &'static str,
        worst_violation: f64,
    },

    #[error("scenario is not admissible: failed {}", .0.join(", "))]
    Inadmissible(Vec<&'static str>),

    #[error("button schedule has {got} entries but the plan has {expected} rounds")]
    ScheduleLength { expected: usize, got: usize },

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
