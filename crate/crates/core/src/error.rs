use thiserror::Error;

use crate::da::DaError;
use crate::odeint::IntegrationError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Algebra(#[from] DaError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("flow covariance lost positive definiteness at pseudo-time {lambda}")]
    CovarianceLost { lambda: f64 },
    #[error("flow map center differs from the prediction map's constant part by {distance:e}")]
    CenterMismatch { distance: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
