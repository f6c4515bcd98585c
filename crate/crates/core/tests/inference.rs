mod common;

use common::toy_cohort;
use scrcea_core::{
    bootstrap, bootstrap_with_indices, resample_indices, BootstrapPlan, CiMethod, EstimandRequest, EvalMethod,
    InferenceError, Measure, SolverOptions, Strategy, Window,
};

fn requests() -> Vec<EstimandRequest> {
    let w = Window::new(45.0, 75.0).unwrap();
    [Strategy::Never, Strategy::At(50.0)]
        .into_iter()
        .flat_map(|s| {
            [Measure::Rmst, Measure::LifeYearsLost].map(|m| EstimandRequest { measure: m, strategy: s, window: w })
        })
        .collect()
}

#[test]
fn identical_replicates_have_zero_spread() {
    let c = toy_cohort(300, 4, true);
    let idx = resample_indices(c.len(), 3, 0);
    let plan = BootstrapPlan { b: 2, ..BootstrapPlan::default() };
    let out = bootstrap_with_indices(&c, &requests(), &[idx.clone(), idx], &plan, &SolverOptions::default(), EvalMethod::Auto)
        .unwrap();
    assert_eq!(out.completed, 2);
    for r in &out.results {
        assert_eq!(r.se, Some(0.0));
        assert_eq!(r.ci, Some((r.estimate, r.estimate)));
        assert!(r.components.iter().all(|c| c.se == Some(0.0)));
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let c = toy_cohort(250, 8, true);
    let solver = SolverOptions::default();
    let mut plan = BootstrapPlan { b: 12, seed: 5, ci_method: CiMethod::Percentile, workers: 1 };
    let a = bootstrap(&c, &requests(), &plan, &solver, EvalMethod::Auto).unwrap();
    plan.workers = 3;
    let b = bootstrap(&c, &requests(), &plan, &solver, EvalMethod::Auto).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for r in &a.results {
        let (lo, hi) = r.ci.unwrap();
        assert!(lo <= hi && r.se.unwrap() > 0.0);
    }
    plan.seed = 6;
    let d = bootstrap(&c, &requests(), &plan, &solver, EvalMethod::Auto).unwrap();
    assert_ne!(a.results[0].se, d.results[0].se);
}

#[test]
fn normal_interval_uses_the_bootstrap_se() {
    let c = toy_cohort(250, 9, true);
    let plan = BootstrapPlan { b: 8, seed: 1, ci_method: CiMethod::Normal, workers: 1 };
    let out = bootstrap(&c, &requests(), &plan, &SolverOptions::default(), EvalMethod::Auto).unwrap();
    for r in &out.results {
        let (lo, hi) = r.ci.unwrap();
        let se = r.se.unwrap();
        assert!((lo - (r.estimate - 1.96 * se)).abs() < 1e-12);
        assert!((hi - (r.estimate + 1.96 * se)).abs() < 1e-12);
    }
}

#[test]
fn degenerate_plans_and_failures_are_errors() {
    let c = toy_cohort(200, 2, true);
    let solver = SolverOptions::default();
    let plan = BootstrapPlan { b: 1, ..BootstrapPlan::default() };
    assert!(matches!(
        bootstrap(&c, &requests(), &plan, &solver, EvalMethod::Auto),
        Err(InferenceError::InvalidPlan(_))
    ));
    let good: Vec<Vec<usize>> = (0..10).map(|r| resample_indices(c.len(), 1, r)).collect();
    // A sample of one repeated subject cannot be fitted.
    let broken = vec![0usize; c.len()];
    let mut sets = good.clone();
    sets[0] = broken.clone();
    sets[1] = broken.clone();
    let plan = BootstrapPlan::default();
    let out = bootstrap_with_indices(&c, &requests(), &sets, &plan, &solver, EvalMethod::Auto).unwrap();
    assert_eq!((out.completed, out.failed), (8, 2));
    assert!(out.first_failure.is_some());
    sets[2] = broken;
    let err = bootstrap_with_indices(&c, &requests(), &sets, &plan, &solver, EvalMethod::Auto).unwrap_err();
    assert!(matches!(err, InferenceError::TooManyFailures { failed: 3, total: 10, .. }), "{err}");
    sets[3] = vec![c.len(); c.len()];
    assert!(matches!(
        bootstrap_with_indices(&c, &requests(), &sets, &plan, &solver, EvalMethod::Auto),
        Err(InferenceError::InvalidPlan(_))
    ));
}

#[test]
fn resampling_copies_records() {
    let c = toy_cohort(100, 6, false);
    let idx = resample_indices(c.len(), 42, 7);
    let r = c.resample(&idx);
    assert_eq!(r.len(), c.len());
    for (k, (&i, s)) in idx.iter().zip(r.subjects()).enumerate() {
        let orig = &c.subjects()[i];
        assert_eq!(s.id, format!("{}#{k}", orig.id));
        let mut renamed = s.clone();
        renamed.id = orig.id.clone();
        assert_eq!(&renamed, orig);
    }
}
