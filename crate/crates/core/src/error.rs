use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("times and increments differ in length ({times} vs {increments})")]
    LengthMismatch { times: usize, increments: usize },
    #[error("non-finite value at jump {index}")]
    NonFinite { index: usize },
    #[error("negative increment {value} at jump {index}")]
    NegativeIncrement { index: usize, value: f64 },
    #[error("jump times not strictly increasing at jump {index}")]
    NotIncreasing { index: usize },
}

/// A single rejected row of a cohort file. Rows are numbered from 1 for the
/// first data line after the header.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("row {row}: {rule}")]
pub struct RowViolation {
    pub row: usize,
    pub rule: String,
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed delimited file: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("{0}")]
    Invalid(RowViolation),
    #[error("{} rows rejected; first: {}", .0.len(), .0[0])]
    InvalidRows(Vec<RowViolation>),
    #[error("duplicate subject id `{0}`")]
    DuplicateId(String),
    #[error("subject `{id}` has {got} covariates, expected {expected}")]
    CovariateDimension {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("cohort is empty")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("transition {transition}: no events")]
    NoEvents { transition: String },
    #[error("transition {transition}: covariate `{covariate}` has no variation within any event risk set")]
    NonIdentifiable {
        transition: String,
        covariate: String,
    },
    #[error("transition {transition}: information matrix is singular (collinear design)")]
    Singular { transition: String },
    #[error("transition {transition}: no convergence after {iterations} iterations (|score|_inf = {score_norm:e})")]
    Divergence {
        transition: String,
        iterations: usize,
        score_norm: f64,
    },
    #[error("transition {transition}: expected {expected} coefficients, got {got}")]
    CoefficientLength {
        transition: String,
        expected: usize,
        got: usize,
    },
    #[error("transition {transition}: non-finite coefficient")]
    NonFiniteCoefficient { transition: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimandError {
    #[error("covariate vector has length {got}, fit expects {expected}")]
    CovariateMismatch { expected: usize, got: usize },
    #[error("horizon {t} precedes onset age {onset}")]
    HorizonBeforeOnset { t: f64, onset: f64 },
    #[error("window [{t0}, {t}] must be finite with 0 <= t0 <= t")]
    BadHorizon { t: f64, t0: f64 },
    #[error("screening interval must be positive, got {0}")]
    NonPositiveInterval(f64),
    #[error("quality scores must lie in [0, 1]: {0}")]
    InvalidQuality(String),
    #[error("a quality profile is required for this measure")]
    MissingProfile,
    #[error("results do not share a horizon: {0} vs {1}")]
    MismatchedHorizon(f64, f64),
    #[error("results are for different measures: {0}")]
    MismatchedMeasure(String),
    #[error("cohort is empty")]
    EmptyCohort,
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid bootstrap plan: {0}")]
    InvalidPlan(String),
    #[error("{failed} of {total} bootstrap replicates failed (limit 20%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Estimand(#[from] EstimandError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}
