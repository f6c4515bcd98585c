mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use scrcea_core::estimands::{cif_death_healthy, cif_disease, p1};
use scrcea_core::util::{order_invariant_mean, quantile};
use scrcea_core::{
    fit_illness_death, read_cohort, step_integral, BootstrapPlan, CiMethod, Cohort, CohortSchema, EstimandRequest,
    Measure, MultiStateFit, QualityProfile, SolverOptions, StepFunction, Subject, WeightSpec, Window,
};

fn model() -> &'static MultiStateFit {
    static FIT: OnceLock<MultiStateFit> = OnceLock::new();
    FIT.get_or_init(|| fit_illness_death(&common::toy_cohort(400, 13, true), &SolverOptions::default()).unwrap())
}

fn strategy() -> impl proptest::strategy::Strategy<Value = scrcea_core::Strategy> {
    prop_oneof![Just(scrcea_core::Strategy::Never), (0.0f64..120.0).prop_map(scrcea_core::Strategy::At)]
}

fn step_function() -> impl proptest::strategy::Strategy<Value = StepFunction> {
    prop::collection::btree_set(0u32..10_000, 0..30).prop_flat_map(|times| {
        let n = times.len();
        prop::collection::vec(0.0f64..2.0, n).prop_map(move |inc| {
            StepFunction::new(times.iter().map(|&t| t as f64 / 100.0).collect(), inc).unwrap()
        })
    })
}

fn subject_record() -> impl proptest::strategy::Strategy<Value = Subject> {
    (0.0f64..60.0, 0.01f64..40.0, 0u8..3, any::<bool>(), 0.0f64..20.0, prop::option::of(0.0f64..100.0), -3.0f64..3.0)
        .prop_map(|(entry, gap, kind, died, v, s, x)| {
            let d1 = kind == 1;
            Subject {
                id: String::new(),
                entry_age: entry,
                u_time: entry + gap,
                delta1: d1,
                delta2: kind == 2,
                v_time: if d1 { v } else { 0.0 },
                delta3: d1 && died,
                screen_age: s,
                covariates: vec![x],
            }
        })
}

fn measure() -> impl proptest::strategy::Strategy<Value = Measure> {
    let profile = (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b, c)| QualityProfile::new(a, b, c).unwrap());
    prop_oneof![
        Just(Measure::Rmst),
        Just(Measure::LifeYearsLost),
        profile.clone().prop_map(|profile| Measure::Qaly { profile }),
        profile.prop_map(|profile| Measure::QalyLostDisease { profile }),
        (0.1f64..10.0).prop_map(|interval| Measure::Screenings { interval }),
        (0.1f64..10.0, prop::option::of(0.0f64..90.0)).prop_map(|(interval, start)| Measure::Unified {
            w1: WeightSpec::ScreeningCount { interval, start },
            w2: WeightSpec::Identity,
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn step_integral_is_additive(f in step_function(), a in 0.0f64..100.0, len in 0.0f64..100.0, frac in 0.0f64..=1.0) {
        let b = a + len;
        let m = a + frac * len;
        let g = |u: f64| 1.0 + 0.01 * u;
        let whole = step_integral(&f, g, a, b);
        let parts = step_integral(&f, g, a, m) + step_integral(&f, g, m, b);
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()));
        prop_assert!((step_integral(&f, |_| 1.0, a, b) - (f.value(b) - f.value(a))).abs() < 1e-12 * (1.0 + f.total()));
    }

    #[test]
    fn step_function_is_monotone(f in step_function(), a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(f.value(lo) <= f.value(hi));
        prop_assert!(f.value_left(lo) <= f.value(lo));
    }

    #[test]
    fn cohort_text_round_trips(mut subs in prop::collection::vec(subject_record(), 1..40)) {
        for (k, s) in subs.iter_mut().enumerate() {
            s.id = format!("p{k}");
        }
        let c = Cohort::new(subs, vec!["x".into()]).unwrap();
        let mut buf = Vec::new();
        c.write_delimited(&mut buf, b',').unwrap();
        prop_assert_eq!(read_cohort(buf.as_slice(), &CohortSchema::default()).unwrap(), c);
    }

    #[test]
    fn requests_round_trip_through_json(m in measure(), s in strategy(), t0 in 0.0f64..60.0, len in 0.0f64..50.0) {
        let req = EstimandRequest { measure: m, strategy: s, window: Window::new(t0, t0 + len).unwrap() };
        let text = serde_json::to_string(&req).unwrap();
        prop_assert_eq!(serde_json::from_str::<EstimandRequest>(&text).unwrap(), req);
        let parsed: scrcea_core::Strategy = s.to_string().parse().unwrap();
        prop_assert_eq!(parsed, s);
    }

    #[test]
    fn bootstrap_plan_round_trips(b in 2usize..500, seed in any::<u64>(), pct in any::<bool>(), workers in 0usize..8) {
        let plan = BootstrapPlan { b, seed, ci_method: if pct { CiMethod::Percentile } else { CiMethod::Normal }, workers };
        let text = serde_json::to_string(&plan).unwrap();
        prop_assert_eq!(serde_json::from_str::<BootstrapPlan>(&text).unwrap(), plan);
    }

    #[test]
    fn state_occupation_sums_to_one(x in -1.5f64..1.5, s in strategy(), t in 30.0f64..110.0) {
        let f = model();
        let total = p1(f, &[x], s, t).unwrap()
            + cif_disease(f, &[x], s, t).unwrap().total()
            + cif_death_healthy(f, &[x], s, t).unwrap().total();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mean_ignores_order(mut v in prop::collection::vec(-1e6f64..1e6, 1..200), rot in 0usize..200) {
        let a = order_invariant_mean(&mut v.clone());
        let k = rot % v.len();
        v.rotate_left(k);
        v.reverse();
        prop_assert_eq!(a.to_bits(), order_invariant_mean(&mut v).to_bits());
    }

    #[test]
    fn quantiles_stay_in_range(mut v in prop::collection::vec(-1e3f64..1e3, 1..100), p in 0.0f64..=1.0) {
        v.sort_by(f64::total_cmp);
        let q = quantile(&v, p);
        prop_assert!(v[0] <= q && q <= v[v.len() - 1]);
    }
}
