//! Nonparametric bootstrap over subjects.
//!
//! Replicate `b` draws its resample from a ChaCha stream keyed by
//! `(seed, b)`, so the output does not depend on the number of workers or on
//! scheduling. Results are reduced in replicate order.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::coxtd::SolverOptions;
use crate::error::InferenceError;
use crate::estimands::{evaluate_requests, EstimandRequest, EstimandResult, EvalMethod};
use crate::multistate::fit_illness_death;
use crate::util::{quantile, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    Normal,
    Percentile,
}

impl std::str::FromStr for CiMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(CiMethod::Normal),
            "percentile" => Ok(CiMethod::Percentile),
            _ => Err(format!("unknown CI method `{s}` (expected normal or percentile)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapPlan {
    /// Number of replicates.
    pub b: usize,
    pub seed: u64,
    pub ci_method: CiMethod,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        BootstrapPlan {
            b: 50,
            seed: 1,
            ci_method: CiMethod::Normal,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    /// Point estimates on the full cohort with `se` and `ci` filled in.
    pub results: Vec<EstimandResult>,
    pub completed: usize,
    pub failed: usize,
    /// First failure message, if any replicate failed.
    pub first_failure: Option<String>,
}

/// Resample indices of replicate `replicate`.
pub fn resample_indices(n: usize, seed: u64, replicate: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn flatten(results: &[EstimandResult]) -> Vec<f64> {
    results.iter().flat_map(EstimandResult::values).collect()
}

/// Two-sided 95% interval from the bootstrap SE or the sorted replicates.
pub fn interval(method: CiMethod, est: f64, se: f64, sorted: &[f64]) -> (f64, f64) {
    match method {
        CiMethod::Normal => (est - 1.96 * se, est + 1.96 * se),
        CiMethod::Percentile => (quantile(sorted, 0.025), quantile(sorted, 0.975)),
    }
}

pub fn bootstrap(
    cohort: &Cohort,
    requests: &[EstimandRequest],
    plan: &BootstrapPlan,
    solver: &SolverOptions,
    method: EvalMethod,
) -> Result<BootstrapOutcome, InferenceError> {
    if plan.b < 2 {
        return Err(InferenceError::InvalidPlan(format!("B must be >= 2, got {}", plan.b)));
    }
    let n = cohort.len();
    let sets: Vec<Vec<usize>> = (0..plan.b as u64)
        .map(|r| resample_indices(n, plan.seed, r))
        .collect();
    bootstrap_with_indices(cohort, requests, &sets, plan, solver, method)
}

/// Bootstrap with explicit resample index sets, one per replicate.
pub fn bootstrap_with_indices(
    cohort: &Cohort,
    requests: &[EstimandRequest],
    index_sets: &[Vec<usize>],
    plan: &BootstrapPlan,
    solver: &SolverOptions,
    method: EvalMethod,
) -> Result<BootstrapOutcome, InferenceError> {
    if index_sets.len() < 2 {
        return Err(InferenceError::InvalidPlan(format!(
            "B must be >= 2, got {}",
            index_sets.len()
        )));
    }
    if let Some(bad) = index_sets.iter().flatten().find(|&&i| i >= cohort.len()) {
        return Err(InferenceError::InvalidPlan(format!("resample index {bad} out of range")));
    }
    let fit = fit_illness_death(cohort, solver)?;
    let mut results = evaluate_requests(&fit, cohort, requests, method)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| InferenceError::Pool(e.to_string()))?;
    let replicates: Vec<Result<Vec<f64>, String>> = pool.install(|| {
        index_sets
            .par_iter()
            .map(|idx| {
                let sample = cohort.resample(idx);
                let fit = fit_illness_death(&sample, solver).map_err(|e| e.to_string())?;
                let res = evaluate_requests(&fit, &sample, requests, method).map_err(|e| e.to_string())?;
                Ok(flatten(&res))
            })
            .collect()
    });

    let total = replicates.len();
    let failed = replicates.iter().filter(|r| r.is_err()).count();
    let first_failure = replicates.iter().find_map(|r| r.as_ref().err().cloned());
    if failed * 5 > total {
        return Err(InferenceError::TooManyFailures {
            failed,
            total,
            first: first_failure.unwrap_or_default(),
        });
    }
    let ok: Vec<&Vec<f64>> = replicates.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.len() < 2 {
        return Err(InferenceError::TooManyFailures {
            failed,
            total,
            first: first_failure.unwrap_or_default(),
        });
    }

    let mut slot = 0;
    let mut fill = |est: f64| -> (f64, (f64, f64)) {
        let mut column: Vec<f64> = ok.iter().map(|v| v[slot]).collect();
        slot += 1;
        let se = sample_sd(&column);
        column.sort_by(f64::total_cmp);
        (se, interval(plan.ci_method, est, se, &column))
    };
    for r in &mut results {
        let (se, ci) = fill(r.estimate);
        r.se = Some(se);
        r.ci = Some(ci);
        for c in &mut r.components {
            let (se, ci) = fill(c.estimate);
            c.se = Some(se);
            c.ci = Some(ci);
        }
    }
    Ok(BootstrapOutcome {
        results,
        completed: ok.len(),
        failed,
        first_failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        assert_eq!(resample_indices(100, 9, 3), resample_indices(100, 9, 3));
        assert_ne!(resample_indices(100, 9, 3), resample_indices(100, 9, 4));
        assert_ne!(resample_indices(100, 9, 3), resample_indices(100, 10, 3));
        assert!(resample_indices(50, 1, 0).iter().all(|&i| i < 50));
    }
}
