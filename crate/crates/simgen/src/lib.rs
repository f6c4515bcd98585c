//! Synthetic illness-death cohorts with a time-dependent screening covariate,
//! a ground-truth oracle for the counterfactual measures, and a replication
//! harness.

pub mod calibrate;
pub mod comparator;
pub mod error;
pub mod generate;
pub mod harness;
pub mod oracle;
pub mod payoff;
pub mod quad;
pub mod spec;
pub mod truth;

pub use error::SimError;
pub use generate::{generate, Latent, Path};
pub use oracle::monte_carlo;
pub use spec::{CensoringScenario, CensoringSpec, GeneratorSpec};
pub use truth::{truth, TruthOptions};
