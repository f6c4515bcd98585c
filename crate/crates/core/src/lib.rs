//! Illness-death multi-state model with a time-dependent screening covariate
//! and counterfactual estimands for screening-initiation age.

pub mod cohort;
pub mod coxtd;
pub mod error;
pub mod estimands;
pub mod inference;
pub mod multistate;
pub mod step;
pub mod util;

pub use cohort::{ingest_cohort, read_cohort, Cohort, CohortSchema, Subject};
pub use coxtd::{fit_transition, CoxFit, SolverOptions, Transition, TransitionSpec};
pub use error::{CohortError, EstimandError, FitError, InferenceError, StepError};
pub use estimands::{evaluate_requests, EstimandRequest, EstimandResult, EvalMethod, Measure, QualityProfile, WeightSpec, Window};
pub use inference::{bootstrap, bootstrap_with_indices, resample_indices, BootstrapOutcome, BootstrapPlan, CiMethod};
pub use multistate::{fit_illness_death, hazard_components, MultiStateFit, Strategy};
pub use step::{step_integral, StepFunction};
