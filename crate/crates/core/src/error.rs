use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action range [{lo}, {hi}]: need finite lo < hi")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate bimodal geometry: stationary-point integral {gap:e} is too small to solve for the slope")]
    DegenerateGeometry { gap: f64 },

    #[error("could not draw a valid bimodal model after {attempts} attempts")]
    ResampleExhausted { attempts: usize },

    #[error("quadratic fit is rank deficient: {distinct} distinct action values (need at least 3)")]
    RankDeficient { distinct: usize },

    #[error("quadratic fit is numerically singular (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("logged stream is empty")]
    EmptyStream,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("config syntax error: {0}")]
    ConfigSyntax(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
