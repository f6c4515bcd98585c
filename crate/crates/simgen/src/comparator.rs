//! Overall-mortality comparator: a single Cox model for death from any cause
//! with the same time-dependent screening covariate, ignoring disease status.

use scrcea_core::estimands::cheb;
use scrcea_core::util::{order_invariant_mean, NeumaierSum};
use scrcea_core::{
    fit_transition, Cohort, CoxFit, EvalMethod, SolverOptions, Strategy, Transition, TransitionSpec, Window,
};

use crate::error::SimError;

const ORDERS: [usize; 4] = [16, 32, 64, 128];
const TAIL: f64 = 1e-13;

pub fn fit_overall_mortality(cohort: &Cohort, opts: &SolverOptions) -> Result<CoxFit, SimError> {
    Ok(fit_transition(cohort, TransitionSpec::new(Transition::OverallDeath), opts)?)
}

/// `int_{t0}^{t} exp(-exp(eta) B(u)) du` for the step function with jump
/// ages `times` and cumulative values `cum`.
fn area(times: &[f64], cum: &[f64], eta: f64, window: Window) -> f64 {
    let e = eta.exp();
    let mut acc = NeumaierSum::default();
    let mut left = window.t0;
    let mut surv = 1.0;
    for (&g, &c) in times.iter().zip(cum) {
        if g > left {
            acc.add(surv * (g - left));
            left = g;
        }
        surv = (-e * c).exp();
    }
    if window.t > left {
        acc.add(surv * (window.t - left));
    }
    acc.value()
}

/// Restricted mean survival over `window` under screening at `s`, averaged
/// over the covariates of `cohort`. The per-subject integral depends on the
/// covariates only through the linear predictor; `Auto` interpolates it in
/// the predictor and falls back to direct sums when the interpolant does not
/// resolve.
pub fn overall_rmst(fit: &CoxFit, cohort: &Cohort, s: Strategy, window: Window, method: EvalMethod) -> f64 {
    let times = fit.baseline.times();
    let inc = fit.baseline.increments();
    let beta_s = fit.screen_coef();
    let m = fit.baseline.count_le(window.t);
    let mut cum = Vec::with_capacity(m);
    let mut acc = 0.0;
    for j in 0..m {
        let z = if s.screened_by(times[j]) { beta_s } else { 0.0 };
        acc += inc[j] * z.exp();
        cum.push(acc);
    }
    let times = &times[..m];
    let etas: Vec<f64> = cohort
        .subjects()
        .iter()
        .map(|subj| fit.x_coefs().iter().zip(&subj.covariates).map(|(b, x)| b * x).sum())
        .collect();
    let direct = || etas.iter().map(|&eta| area(times, &cum, eta, window)).collect::<Vec<f64>>();
    let mut per_subject = match method {
        EvalMethod::Exact => direct(),
        EvalMethod::Auto => cheb::interpolate(&etas, |eta| vec![area(times, &cum, eta, window)], &ORDERS, TAIL)
            .map(|v| v.into_iter().map(|r| r[0]).collect())
            .unwrap_or_else(direct),
    };
    order_invariant_mean(&mut per_subject)
}
