use std::path::PathBuf;

use scrcea_core::{CohortError, EstimandError, FitError, InferenceError};
use scrcea_sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("fit: {0}")]
    Fit(#[from] FitError),
    #[error("inference: {0}")]
    Inference(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
            CliError::Inference(_) => 5,
            CliError::Output { .. } => 1,
        }
    }

    pub fn output(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Output { path, source }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EstimandError> for CliError {
    fn from(e: EstimandError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Fit(f) => CliError::Fit(f),
            InferenceError::InvalidPlan(m) => CliError::Config(format!("bootstrap: {m}")),
            other => CliError::Inference(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidSpec(_) | SimError::InvalidRequest(_) => CliError::Config(e.to_string()),
            SimError::Cohort(c) => c.into(),
            SimError::Fit(f) => CliError::Fit(f),
            SimError::Estimand(m) => m.into(),
            SimError::Inference(i) => i.into(),
            SimError::Quadrature { .. } | SimError::Calibration(_) => CliError::Inference(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_classes_have_distinct_codes() {
        let errs = [
            CliError::Config("x".into()),
            CliError::Data("x".into()),
            CliError::Fit(FitError::NoEvents { transition: "0->1".into() }),
            CliError::from(InferenceError::TooManyFailures { failed: 3, total: 10, first: String::new() }),
        ];
        let codes: Vec<u8> = errs.iter().map(CliError::exit_code).collect();
        assert_eq!(codes, [2, 3, 4, 5]);
        let wrapped = CliError::from(InferenceError::Fit(FitError::NoEvents { transition: "0->2".into() }));
        assert_eq!(wrapped.exit_code(), 4);
    }
}
