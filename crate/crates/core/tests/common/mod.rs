#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scrcea_core::{Cohort, Subject};

#[allow(clippy::too_many_arguments)]
pub fn subject(id: &str, entry: f64, u: f64, d1: bool, d2: bool, v: f64, d3: bool, s: Option<f64>, x: f64) -> Subject {
    Subject {
        id: id.into(),
        entry_age: entry,
        u_time: u,
        delta1: d1,
        delta2: d2,
        v_time: v,
        delta3: d3,
        screen_age: s,
        covariates: vec![x],
    }
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Age at which `(t / scale)^shape * m` (times `hr` after `s`) reaches `e`.
fn invert(e: f64, shape: f64, scale: f64, m: f64, hr: f64, s: f64) -> f64 {
    let y = e / m;
    let hs = (s / scale).powf(shape);
    let h = if y <= hs { y } else { hs + (y - hs) / hr };
    scale * h.powf(1.0 / shape)
}

/// Small illness-death cohort with a screening effect, left truncation and
/// uniform censoring; one covariate `x ~ U(-1, 1)`.
pub fn toy_cohort(n: usize, seed: u64, truncation: bool) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::with_capacity(n);
    while subjects.len() < n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let s = 40.0 + 15.0 * exp1(&mut rng);
        let t = invert(exp1(&mut rng), 4.0, 62.0, (0.5 * x).exp(), (-1.0f64).exp(), s);
        let d = invert(exp1(&mut rng), 5.0, 75.0, (0.3 * x).exp(), (-0.1f64).exp(), s);
        let c = rng.random_range(50.0..95.0);
        let entry = if truncation { rng.random_range(30.0..50.0) } else { 0.0 };
        let first = t.min(d);
        let u = first.min(c);
        if u <= entry {
            continue;
        }
        let id = format!("s{}", subjects.len() + 1);
        let screen = (s < u).then_some(s);
        let sub = if t <= d && t <= c {
            let rate = 0.1 * (-0.2 * x + 0.02 * (t - 60.0) - 0.3 * f64::from(u8::from(s < t))).exp();
            let death = t + exp1(&mut rng) / rate;
            subject(&id, entry, t, true, false, death.min(c) - t, death <= c, screen, x)
        } else if d < t && d <= c {
            subject(&id, entry, d, false, true, 0.0, false, screen, x)
        } else {
            subject(&id, entry, u, false, false, 0.0, false, screen, x)
        };
        subjects.push(sub);
    }
    Cohort::new(subjects, vec!["x".into()]).unwrap()
}

/// Covariates of the age-scale transitions at age `t`: `(Z(t; S), x)`.
pub fn age_covariates(s: &Subject, t: f64) -> Vec<f64> {
    let screen = match s.screen_age {
        Some(a) if a < s.u_time && a < t => 1.0,
        _ => 0.0,
    };
    let mut x = vec![screen];
    x.extend_from_slice(&s.covariates);
    x
}

/// Breslow log partial likelihood and its gradient by direct enumeration of
/// risk sets. `kind`: 1 for 0->1, 2 for 0->2, 3 for 1->3.
pub fn brute_loglik(subjects: &[Subject], kind: u8, beta: &[f64]) -> (f64, Vec<f64>) {
    let dot = |x: &[f64]| x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let sojourn_x = |s: &Subject| {
        let mut x = vec![if matches!(s.screen_age, Some(a) if a < s.u_time) { 1.0 } else { 0.0 }];
        x.extend_from_slice(&s.covariates);
        x.push(s.u_time);
        x
    };
    let time = |s: &Subject| if kind == 3 { s.v_time } else { s.u_time };
    let event = |s: &Subject| match kind {
        1 => s.delta1,
        2 => s.delta2,
        _ => s.delta1 && s.delta3,
    };
    let pool: Vec<&Subject> = subjects.iter().filter(|s| kind != 3 || s.delta1).collect();
    let mut times: Vec<f64> = pool.iter().filter(|s| event(s)).map(|s| time(s)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let p = beta.len();
    let (mut ll, mut grad) = (0.0, vec![0.0; p]);
    for &t in &times {
        let covs = |s: &Subject| if kind == 3 { sojourn_x(s) } else { age_covariates(s, t) };
        let at_risk = |s: &Subject| if kind == 3 { s.v_time >= t } else { s.u_time >= t && t > s.entry_age };
        let (mut denom, mut num) = (0.0, vec![0.0; p]);
        for s in pool.iter().filter(|s| at_risk(s)) {
            let x = covs(s);
            let w = dot(&x).exp();
            denom += w;
            for k in 0..p {
                num[k] += w * x[k];
            }
        }
        let d = pool.iter().filter(|s| event(s) && time(s) == t).count() as f64;
        for e in pool.iter().filter(|s| event(s) && time(s) == t) {
            let x = covs(e);
            ll += dot(&x);
            for k in 0..p {
                grad[k] += x[k];
            }
        }
        ll -= d * denom.ln();
        for k in 0..p {
            grad[k] -= d * num[k] / denom;
        }
    }
    (ll, grad)
}

/// Maximizer of the enumerated likelihood by nested bisection on the score:
/// coordinate `k` is found by bisection with the later coordinates profiled
/// out, so the profile derivative is the partial score at the inner optimum.
pub fn brute_mle(subjects: &[Subject], kind: u8, dim: usize, bound: f64) -> Vec<f64> {
    fn solve(subjects: &[Subject], kind: u8, dim: usize, bound: f64, prefix: &mut Vec<f64>) -> Vec<f64> {
        let k = prefix.len();
        let profile = |b: f64, prefix: &mut Vec<f64>| {
            prefix.push(b);
            let beta = if k + 1 == dim { prefix.clone() } else { solve(subjects, kind, dim, bound, prefix) };
            prefix.pop();
            let g = brute_loglik(subjects, kind, &beta).1[k];
            (g, beta)
        };
        let (mut lo, mut hi) = (-bound, bound);
        assert!(profile(lo, prefix).0 > 0.0 && profile(hi, prefix).0 < 0.0, "maximum outside the bracket");
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if profile(mid, prefix).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        profile(0.5 * (lo + hi), prefix).1
    }
    solve(subjects, kind, dim, bound, &mut Vec::new())
}
