use scrcea_core::{CohortError, EstimandError, FitError, InferenceError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid generator specification: {0}")]
    InvalidSpec(String),
    #[error("invalid truth request: {0}")]
    InvalidRequest(String),
    #[error("quadrature did not reach tolerance {tol:e} on [{a}, {b}] (estimated error {err:e})")]
    Quadrature { a: f64, b: f64, tol: f64, err: f64 },
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Estimand(#[from] EstimandError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("calibration did not converge: {0}")]
    Calibration(String),
}
