use thiserror::Error;

use awoisv_core::CoreError;
use awoisv_path::PathError;
use awoisv_predict::PredictError;
use awoisv_qp::QpError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("closed loop unstable: spectral radius {0} >= 1")]
    UnstableClosedLoop(f64),
    #[error("error-bound recursion does not contract: spectral radius {0} >= 1")]
    ContractionViolated(f64),
    #[error("tightened set empty: {0}")]
    EmptyTightenedSet(String),
    #[error("projection lost: {0}")]
    ProjectionLost(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Qp(#[from] QpError),
}
