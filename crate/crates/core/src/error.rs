use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("receiver {receiver} comes within {distance:.3} m of the jammer")]
    SingularDistance { receiver: usize, distance: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no jammed receivers, position estimate unavailable")]
    NoJammedReceivers,

    #[error("receiver {0} carries no usable jamming information")]
    UnusableReceiver(usize),

    #[error("line search failed: step fell below {min_step:e}")]
    StepUnderflow { min_step: f64 },

    #[error("not a descent direction (directional derivative {0:e})")]
    NotDescentDirection(f64),

    #[error("least-squares solution unavailable: {0}")]
    LeastSquaresFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
