use scrcea_core::{EstimandRequest, Measure, QualityProfile, Strategy, WeightSpec, Window};
use scrcea_sim::spec::Weibull;
use scrcea_sim::truth::truth_one;
use scrcea_sim::{monte_carlo, truth, CensoringScenario, GeneratorSpec, TruthOptions};
use statrs::function::gamma::{gamma, gamma_lr};

fn window() -> Window {
    Window::new(40.0, 70.0).unwrap()
}

#[test]
fn healthy_only_rmst_has_weibull_closed_form() {
    let mut spec = GeneratorSpec::setting_one(CensoringScenario::Independent);
    spec.hazard01.weibull = Weibull { shape: 5.2, scale: 1e12 };
    spec.hazard02.log_hr_x = 0.0;
    let (k, lam) = (spec.hazard02.weibull.shape, spec.hazard02.weibull.scale);
    let w = window();
    let lower = |t: f64| lam / k * gamma(1.0 / k) * gamma_lr(1.0 / k, (t / lam).powf(k));
    let closed = lower(w.t) - lower(w.t0);
    let est = truth_one(&spec, Measure::Rmst, Strategy::Never, w, &TruthOptions::default()).unwrap();
    assert!((est.estimate - closed).abs() < 1e-6, "{} vs {closed}", est.estimate);
    assert!(est.component("disease_state").unwrap().abs() < 1e-12);
}

#[test]
fn refinement_changes_truth_below_tolerance() {
    let spec = GeneratorSpec::setting_one(CensoringScenario::Independent);
    let p = QualityProfile::new(0.8, 0.9, 0.5).unwrap();
    let reqs: Vec<EstimandRequest> = [Measure::Rmst, Measure::LifeYearsLost, Measure::Qaly { profile: p }]
        .into_iter()
        .flat_map(|m| {
            [Strategy::Never, Strategy::At(50.0)]
                .map(|s| EstimandRequest { measure: m, strategy: s, window: window() })
        })
        .collect();
    let coarse = truth(&spec, &reqs, &TruthOptions::default()).unwrap();
    let fine = truth(&spec, &reqs, &TruthOptions { hermite_nodes: 80, tol: 1e-11 }).unwrap();
    for (a, b) in coarse.iter().zip(&fine) {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }
}

#[test]
fn quadrature_agrees_with_path_simulation() {
    let spec = GeneratorSpec::setting_one(CensoringScenario::Independent);
    let p = QualityProfile::new(0.7, 0.9, 0.4).unwrap();
    let w = window();
    let mut reqs = Vec::new();
    for s in [Strategy::Never, Strategy::At(50.0), Strategy::At(62.5)] {
        for m in [
            Measure::Rmst,
            Measure::LifeYearsLost,
            Measure::Qaly { profile: p },
            Measure::QalyLostDisease { profile: p },
            Measure::Screenings { interval: 3.0 },
            Measure::Unified {
                w1: WeightSpec::ScreeningCount { interval: 5.0, start: Some(41.0) },
                w2: WeightSpec::ScreeningCount { interval: 5.0, start: Some(41.0) },
            },
        ] {
            reqs.push(EstimandRequest { measure: m, strategy: s, window: w });
        }
    }
    let exact = truth(&spec, &reqs, &TruthOptions::default()).unwrap();
    let mc = monte_carlo(&spec, &reqs, 1_000_000, 77).unwrap();
    for (a, b) in exact.iter().zip(&mc) {
        let se = b.se.unwrap();
        assert!(
            (a.estimate - b.estimate).abs() < 3.0 * se.max(1e-12),
            "{} {}: {} vs {} (se {se})",
            a.measure.label(),
            a.strategy,
            a.estimate,
            b.estimate
        );
        for (ca, cb) in a.components.iter().zip(&b.components) {
            let se = cb.se.unwrap();
            assert!((ca.estimate - cb.estimate).abs() < 3.0 * se.max(1e-12), "{}: {ca:?} vs {cb:?}", a.measure.label());
        }
    }
}

#[test]
fn screening_reduces_disease_path_loss_in_low_incidence_setting() {
    let spec = GeneratorSpec::setting_two();
    let w = window();
    let opts = TruthOptions::default();
    let never = truth_one(&spec, Measure::LifeYearsLost, Strategy::Never, w, &opts).unwrap();
    let scr = truth_one(&spec, Measure::LifeYearsLost, Strategy::At(50.0), w, &opts).unwrap();
    assert!(scr.component("death_after_disease").unwrap() < never.component("death_after_disease").unwrap());
}

#[test]
fn truth_rejects_bad_requests() {
    let spec = GeneratorSpec::setting_one(CensoringScenario::Independent);
    let bad = TruthOptions { hermite_nodes: 0, tol: 1e-9 };
    assert!(truth_one(&spec, Measure::Rmst, Strategy::Never, window(), &bad).is_err());
    let r = EstimandRequest {
        measure: Measure::Screenings { interval: 0.0 },
        strategy: Strategy::At(50.0),
        window: window(),
    };
    assert!(truth(&spec, &[r], &TruthOptions::default()).is_err());
}
