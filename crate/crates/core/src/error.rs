use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("time {t} is outside the admissible range [0, {limit})")]
    TimeOutOfRange { t: f64, limit: f64 },

    #[error("rejection sampler acceptance rate {rate:.3e} fell below the floor {floor:.3e}")]
    AcceptanceFloor { rate: f64, floor: f64 },

    #[error("empty sample")]
    EmptyBatch,

    #[error("target {0} is outside [0, 1]")]
    TargetOutOfRange(f64),

    #[error("invalid tree market: {0}")]
    InvalidTree(String),

    #[error("equivalence violated at node {node} (time {time}): P(G = {signal} | node) = 0")]
    EquivalenceViolated {
        node: String,
        time: usize,
        signal: u32,
    },

    #[error("enumeration over {atoms} atoms exceeds the bound of {bound}")]
    EnumerationBound { atoms: usize, bound: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
