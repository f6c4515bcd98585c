use scrcea_core::multistate::cohort_meta;
use scrcea_core::{
    evaluate_requests, fit_transition, EstimandRequest, EvalMethod, Measure, MultiStateFit, SolverOptions, StepFunction,
    Strategy, Transition, TransitionSpec, Window,
};
use scrcea_sim::comparator::{fit_overall_mortality, overall_rmst};
use scrcea_sim::harness::{run_harness, HarnessPlan, MULTI_STATE};
use scrcea_sim::spec::Weibull;
use scrcea_sim::{generate, CensoringScenario, GeneratorSpec};

fn window() -> Window {
    Window::new(40.0, 70.0).unwrap()
}

#[test]
fn comparator_coincides_with_multi_state_without_disease() {
    let mut spec = GeneratorSpec::setting_one(CensoringScenario::Independent);
    spec.hazard01.weibull = Weibull { shape: 5.2, scale: 1e12 };
    spec.n = 1500;
    let cohort = generate(&spec, 4).unwrap();
    assert_eq!(cohort.event_counts().disease, 0);
    let opts = SolverOptions::default();
    let overall = fit_overall_mortality(&cohort, &opts).unwrap();
    let fit02 = fit_transition(&cohort, TransitionSpec::new(Transition::HealthyToDeath), &opts).unwrap();
    // Without disease events the 0->1 and 1->3 baselines are identically zero.
    let mut fit01 = fit02.clone();
    fit01.transition = Transition::HealthyToDisease;
    fit01.baseline = StepFunction::zero();
    let mut fit13 = fit02.clone();
    fit13.transition = Transition::DiseaseToDeath;
    fit13.baseline = StepFunction::zero();
    fit13.names.push("onset_age".into());
    fit13.coefficients.push(0.0);
    fit13.covariance = vec![vec![0.0; 3]; 3];
    let ms = MultiStateFit {
        fit01,
        fit02,
        fit13,
        cohort_meta: cohort_meta(&cohort),
    };
    for s in [Strategy::Never, Strategy::At(50.0), Strategy::At(65.0)] {
        let req = EstimandRequest { measure: Measure::Rmst, strategy: s, window: window() };
        let multi = evaluate_requests(&ms, &cohort, &[req], EvalMethod::Exact).unwrap()[0].estimate;
        let comp = overall_rmst(&overall, &cohort, s, window(), EvalMethod::Exact);
        assert!((multi - comp).abs() < 1e-6, "{s}: {multi} vs {comp}");
    }
}

#[test]
fn comparator_interpolation_matches_direct_sums() {
    let mut spec = GeneratorSpec::setting_one(CensoringScenario::Conditional);
    spec.n = 3000;
    let cohort = generate(&spec, 9).unwrap();
    let fit = fit_overall_mortality(&cohort, &SolverOptions::default()).unwrap();
    for s in [Strategy::Never, Strategy::At(50.0)] {
        let a = overall_rmst(&fit, &cohort, s, window(), EvalMethod::Auto);
        let b = overall_rmst(&fit, &cohort, s, window(), EvalMethod::Exact);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

fn small_plan(replicates: usize, b: usize) -> HarnessPlan {
    let mut plan = HarnessPlan { replicates, seed: 17, ..HarnessPlan::default() };
    plan.bootstrap.b = b;
    plan
}

fn rmst_requests() -> Vec<EstimandRequest> {
    [Strategy::Never, Strategy::At(50.0)]
        .map(|s| EstimandRequest { measure: Measure::Rmst, strategy: s, window: window() })
        .to_vec()
}

#[test]
fn null_screening_effect_is_not_detected() {
    let mut spec = GeneratorSpec::setting_one(CensoringScenario::Independent);
    spec.hazard01.log_hr_screen = 0.0;
    spec.hazard02.log_hr_screen = 0.0;
    spec.n = 1000;
    let mut plan = small_plan(20, 20);
    plan.comparator = false;
    let report = run_harness(&spec, &rmst_requests(), &plan).unwrap();
    assert_eq!(report.failed, 0);
    let never = report.find(MULTI_STATE, "rmst", Strategy::Never, "total").unwrap();
    let scr = report.find(MULTI_STATE, "rmst", Strategy::At(50.0), "total").unwrap();
    assert!((never.truth - scr.truth).abs() < 1e-9);
    let pairs = report.paired(never, scr);
    let close = pairs
        .iter()
        .filter(|(a, b)| (a.estimate - b.estimate).abs() < 2.0 * a.se.max(b.se))
        .count();
    assert!(close as f64 >= 0.9 * pairs.len() as f64, "{close} of {}", pairs.len());
}

#[test]
fn harness_is_deterministic_across_worker_counts() {
    let mut spec = GeneratorSpec::setting_one(CensoringScenario::Conditional);
    spec.n = 600;
    let mut plan = small_plan(4, 5);
    plan.workers = 1;
    let a = run_harness(&spec, &rmst_requests(), &plan).unwrap();
    plan.workers = 3;
    plan.bootstrap.workers = 2;
    let b = run_harness(&spec, &rmst_requests(), &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_long(','), b.to_long(','));
    // Headline, two components, and the comparator for each arm.
    assert_eq!(a.rows.len(), 2 * 3 + 2);
    assert!(a.rows.iter().all(|r| (0.0..=1.0).contains(&r.cp) && r.n_ok == 4));
    let table = a.to_table('\t');
    assert_eq!(table.lines().count(), 6);
    assert!(table.lines().nth(1).unwrap().starts_with("True\t"));
}

#[test]
fn harness_rejects_degenerate_plans() {
    let spec = GeneratorSpec::setting_one(CensoringScenario::Independent);
    assert!(run_harness(&spec, &rmst_requests(), &small_plan(1, 5)).is_err());
    assert!(run_harness(&spec, &[], &small_plan(3, 5)).is_err());
}
