mod common;

use common::{brute_loglik, brute_mle, subject, toy_cohort};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scrcea_core::coxtd::{breslow, loglik_score_info};
use scrcea_core::{fit_transition, Cohort, FitError, SolverOptions, Transition, TransitionSpec};

const KINDS: [(Transition, u8); 3] = [
    (Transition::HealthyToDisease, 1),
    (Transition::HealthyToDeath, 2),
    (Transition::DiseaseToDeath, 3),
];

#[test]
fn matches_enumerated_partial_likelihood() {
    let c = toy_cohort(90, 12, true);
    let opts = SolverOptions { tol: 1e-12, ..SolverOptions::default() };
    for (t, kind) in KINDS {
        let spec = TransitionSpec::new(t);
        let fit = fit_transition(&c, spec, &opts).unwrap();
        let dim = fit.coefficients.len();
        let oracle = brute_mle(c.subjects(), kind, dim, 8.0);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{t}: {:?} vs {oracle:?}", fit.coefficients);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(kind.into());
        for _ in 0..5 {
            let beta: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0) * if kind == 3 && dim > 2 { 0.05 } else { 1.0 }).collect();
            let lib = loglik_score_info(&c, spec, &beta).unwrap();
            let (ll, grad) = brute_loglik(c.subjects(), kind, &beta);
            assert!((lib.loglik - ll).abs() < 1e-9 * ll.abs().max(1.0), "{t}: {} vs {ll}", lib.loglik);
            for k in 0..dim {
                assert!((lib.score[k] - grad[k]).abs() < 1e-8 * grad[k].abs().max(1.0));
            }
        }
    }
}

#[test]
fn score_and_information_match_finite_differences() {
    let c = toy_cohort(400, 21, true);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (t, _) in KINDS {
        let spec = TransitionSpec::new(t);
        let dim = spec.covariate_labels(&c).len();
        for _ in 0..3 {
            let mut beta: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.8..0.8)).collect();
            if t == Transition::DiseaseToDeath {
                beta[dim - 1] *= 0.05;
            }
            let e = loglik_score_info(&c, spec, &beta).unwrap();
            for k in 0..dim {
                let h = 1e-5;
                let shifted = |d: f64| {
                    let mut b = beta.clone();
                    b[k] += d;
                    loglik_score_info(&c, spec, &b).unwrap()
                };
                let (up, dn) = (shifted(h), shifted(-h));
                let fd = (up.loglik - dn.loglik) / (2.0 * h);
                assert!((fd - e.score[k]).abs() <= 1e-6 * e.score[k].abs().max(1.0), "{t} score {k}: {fd} vs {}", e.score[k]);
                for j in 0..dim {
                    let fd = -(up.score[j] - dn.score[j]) / (2.0 * h);
                    let want = e.information[(j, k)];
                    assert!((fd - want).abs() <= 1e-4 * want.abs().max(1.0), "{t} info {j},{k}: {fd} vs {want}");
                }
            }
        }
    }
}

#[test]
fn fitted_coefficients_are_a_stationary_maximum() {
    let c = toy_cohort(600, 4, true);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (t, _) in KINDS {
        let spec = TransitionSpec::new(t);
        let fit = fit_transition(&c, spec, &SolverOptions::default()).unwrap();
        let e = loglik_score_info(&c, spec, &fit.coefficients).unwrap();
        assert!(e.score.amax() < 1e-8, "{t}: score {}", e.score.amax());
        assert!((e.loglik - fit.loglik).abs() < 1e-12 * fit.loglik.abs());
        let dim = fit.coefficients.len();
        for _ in 0..100 {
            let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let mut prev = e.loglik;
            for step in [0.05, 0.1, 0.2, 0.4] {
                let b: Vec<f64> = fit.coefficients.iter().zip(&dir).map(|(c, d)| c + step * d / norm).collect();
                let ll = loglik_score_info(&c, spec, &b).unwrap().loglik;
                assert!(ll <= prev + 1e-9, "{t}: not concave along {dir:?}");
                prev = ll;
            }
        }
        // Reported covariance is the inverse information.
        let inv = e.information.clone().try_inverse().unwrap();
        for j in 0..dim {
            for k in 0..dim {
                assert!((inv[(j, k)] - fit.covariance[j][k]).abs() < 1e-8 * inv[(j, j)].abs());
            }
        }
    }
}

fn refit(subjects: Vec<scrcea_core::Subject>, t: Transition) -> scrcea_core::CoxFit {
    let c = Cohort::new(subjects, vec!["x".into()]).unwrap();
    fit_transition(&c, TransitionSpec::new(t), &SolverOptions::default()).unwrap()
}

#[test]
fn fit_is_invariant_to_record_order() {
    let c = toy_cohort(300, 8, true);
    let mut rev = c.subjects().to_vec();
    rev.reverse();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut shuffled = c.subjects().to_vec();
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.random_range(0..=i));
    }
    for (t, _) in KINDS {
        let a = refit(c.subjects().to_vec(), t);
        for other in [rev.clone(), shuffled.clone()] {
            let b = refit(other, t);
            assert_eq!(a.coefficients, b.coefficients, "{t}");
            assert_eq!(a.baseline, b.baseline, "{t}");
        }
    }
}

#[test]
fn subjects_outside_every_risk_set_do_not_change_the_baseline() {
    let c = toy_cohort(250, 14, true);
    let spec = TransitionSpec::new(Transition::HealthyToDisease);
    let fit = fit_transition(&c, spec, &SolverOptions::default()).unwrap();
    let last = *fit.baseline.times().last().unwrap();
    let first = fit.baseline.times()[0];
    let max_u = c.subjects().iter().map(|s| s.u_time).fold(0.0, f64::max);
    let mut subs = c.subjects().to_vec();
    // Entering at or after the last event time, and leaving before the first.
    subs.push(subject("late", last, max_u + 0.5, false, false, 0.0, false, Some(last - 10.0), 0.4));
    subs.push(subject("late2", max_u + 0.5, max_u + 1.0, true, false, 1.0, false, None, -0.3));
    subs.push(subject("early", first - 3.0, first - 1.0, false, false, 0.0, false, None, 0.9));
    let bigger = Cohort::new(subs, vec!["x".into()]).unwrap();
    let b = breslow(&bigger, spec, &fit.coefficients).unwrap();
    // The added disease event, alone in its risk set, adds one jump.
    assert_eq!(b.len(), fit.baseline.len() + 1);
    for (x, y) in fit.baseline.increments().iter().zip(b.increments()) {
        assert!((x - y).abs() <= 1e-12 * x, "{x} vs {y}");
    }
    let before = loglik_score_info(&c, spec, &fit.coefficients).unwrap();
    let after = loglik_score_info(&bigger, spec, &fit.coefficients).unwrap();
    // Only the new singleton risk set contributes, with log(1) = 0 and score 0.
    assert!((before.loglik - after.loglik).abs() < 1e-10, "{} vs {}", before.loglik, after.loglik);
}

#[test]
fn tied_records_are_exchangeable() {
    let mut subs = vec![
        subject("a", 40.0, 60.0, true, false, 2.0, true, Some(50.0), 0.5),
        subject("b", 40.0, 60.0, true, false, 2.0, true, None, -0.5),
        subject("c", 42.0, 60.0, false, false, 0.0, false, Some(55.0), 0.1),
        subject("d", 41.0, 65.0, true, false, 1.0, false, None, 0.8),
        subject("e", 45.0, 65.0, false, true, 0.0, false, Some(48.0), -1.0),
        subject("f", 43.0, 70.0, false, false, 0.0, false, None, 0.3),
        subject("g", 40.0, 62.0, true, false, 3.0, true, Some(47.0), -0.2),
    ];
    let spec = TransitionSpec::new(Transition::HealthyToDisease);
    let beta = [0.3, -0.7];
    let eval = |subs: &[scrcea_core::Subject]| {
        let c = Cohort::new(subs.to_vec(), vec!["x".into()]).unwrap();
        (loglik_score_info(&c, spec, &beta).unwrap(), breslow(&c, spec, &beta).unwrap())
    };
    let (e1, b1) = eval(&subs);
    subs.swap(0, 1);
    subs.swap(2, 5);
    let (e2, b2) = eval(&subs);
    assert_eq!(e1.loglik, e2.loglik);
    assert_eq!(e1.score, e2.score);
    assert_eq!(b1, b2);
    let (ll, _) = brute_loglik(&subs, 1, &beta);
    assert!((ll - e1.loglik).abs() < 1e-12);
}

#[test]
fn constant_screening_status_is_not_identifiable() {
    let subs: Vec<_> = (0..30)
        .map(|i| {
            let u = 50.0 + i as f64;
            subject(&format!("s{i}"), 40.0, u, i % 3 == 0, i % 3 == 1, if i % 3 == 0 { 1.0 } else { 0.0 }, false, None, (i % 5) as f64)
        })
        .collect();
    let c = Cohort::new(subs, vec!["x".into()]).unwrap();
    let err = fit_transition(&c, TransitionSpec::new(Transition::HealthyToDisease), &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, FitError::NonIdentifiable { .. }), "{err}");
    assert!(err.to_string().contains("screen"), "{err}");
    let err = fit_transition(&c, TransitionSpec::new(Transition::DiseaseToDeath), &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, FitError::NoEvents { .. }), "{err}");
}
