//! Cox proportional hazards with the time-dependent screening indicator,
//! left truncation and Breslow ties.
//!
//! Each subject contributes one or two counting-process intervals
//! `(start, stop]` with constant covariates; the interval is split at the
//! screening age so that `Z(t; S) = I(S < t)` is exact at every event time.
//! Coefficient layout is `[screen, x_1, .., x_p]`, with the onset age
//! appended for the disease-to-death transition.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Subject};
use crate::error::FitError;
use crate::step::StepFunction;
use crate::util::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// 0 -> 1, age scale.
    HealthyToDisease,
    /// 0 -> 2, age scale.
    HealthyToDeath,
    /// 1 -> 3, sojourn scale with onset age and frozen screening status.
    DiseaseToDeath,
    /// Death from any path on the age scale; the single-event comparator.
    OverallDeath,
}

impl Transition {
    pub fn label(self) -> &'static str {
        match self {
            Transition::HealthyToDisease => "0->1",
            Transition::HealthyToDeath => "0->2",
            Transition::DiseaseToDeath => "1->3",
            Transition::OverallDeath => "overall death",
        }
    }

    pub fn timescale(self) -> Timescale {
        match self {
            Transition::DiseaseToDeath => Timescale::Sojourn,
            _ => Timescale::Age,
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timescale {
    Age,
    Sojourn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub transition: Transition,
}

impl TransitionSpec {
    pub fn new(transition: Transition) -> Self {
        TransitionSpec { transition }
    }

    pub fn timescale(&self) -> Timescale {
        self.transition.timescale()
    }

    pub fn covariate_labels(&self, cohort: &Cohort) -> Vec<String> {
        let mut names = vec!["screen".to_string()];
        names.extend(cohort.covariate_names().iter().cloned());
        if self.transition == Transition::DiseaseToDeath {
            names.push("onset_age".into());
        }
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieMethod {
    #[default]
    Breslow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Convergence threshold on the sup-norm of the score.
    pub tol: f64,
    pub max_iter: usize,
    pub tie_method: TieMethod,
    /// 0 silent; 1 prints one line per Newton iteration to stderr.
    pub verbosity: u8,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 50,
            tie_method: TieMethod::Breslow,
            verbosity: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub score_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub transition: Transition,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Inverse observed information.
    pub covariance: Vec<Vec<f64>>,
    /// Breslow cumulative baseline hazard.
    pub baseline: StepFunction,
    pub loglik: f64,
    pub n_events: usize,
    pub convergence: Convergence,
}

impl CoxFit {
    pub fn screen_coef(&self) -> f64 {
        self.coefficients[0]
    }

    /// Coefficients of the baseline covariates `X`.
    pub fn x_coefs(&self) -> &[f64] {
        match self.transition {
            Transition::DiseaseToDeath => &self.coefficients[1..self.coefficients.len() - 1],
            _ => &self.coefficients[1..],
        }
    }

    pub fn onset_coef(&self) -> Option<f64> {
        (self.transition == Transition::DiseaseToDeath).then(|| *self.coefficients.last().unwrap())
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|k| self.covariance[k][k].max(0.0).sqrt())
            .collect()
    }

    /// Replaces the coefficients and recomputes the Breslow baseline for them.
    pub fn with_coefficients(&self, cohort: &Cohort, coefficients: Vec<f64>) -> Result<CoxFit, FitError> {
        let data = CoxData::build(cohort, TransitionSpec::new(self.transition));
        data.check_coefficients(&coefficients)?;
        let baseline = data.breslow(&coefficients);
        let loglik = data.evaluate(&coefficients).loglik;
        Ok(CoxFit {
            coefficients,
            baseline,
            loglik,
            ..self.clone()
        })
    }
}

/// Log partial likelihood with its analytic gradient and negative Hessian.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub loglik: f64,
    pub score: DVector<f64>,
    pub information: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct Interval {
    start: f64,
    stop: f64,
    event: bool,
    x: Vec<f64>,
}

fn canonical(a: &Interval, b: &Interval) -> Ordering {
    a.stop
        .total_cmp(&b.stop)
        .then(a.start.total_cmp(&b.start))
        .then(a.event.cmp(&b.event))
        .then_with(|| {
            a.x.iter()
                .zip(&b.x)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Counting-process design for one transition.
#[derive(Debug, Clone)]
pub struct CoxData {
    transition: Transition,
    names: Vec<String>,
    /// Sorted by (stop, start, event, covariates); covariates stored centered.
    intervals: Vec<Interval>,
    /// Interval indices ordered by decreasing start.
    by_start_desc: Vec<usize>,
    /// Distinct event times, decreasing.
    event_times: Vec<f64>,
    center: Vec<f64>,
    n_events: usize,
}

fn push_age_intervals(out: &mut Vec<Interval>, s: &Subject, start: f64, stop: f64, event: bool) {
    let mut x = Vec::with_capacity(s.covariates.len() + 1);
    x.push(0.0);
    x.extend_from_slice(&s.covariates);
    match s.effective_screen_age() {
        Some(sa) if sa <= start => {
            x[0] = 1.0;
            out.push(Interval { start, stop, event, x });
        }
        Some(sa) if sa < stop => {
            out.push(Interval {
                start,
                stop: sa,
                event: false,
                x: x.clone(),
            });
            x[0] = 1.0;
            out.push(Interval {
                start: sa,
                stop,
                event,
                x,
            });
        }
        _ => out.push(Interval { start, stop, event, x }),
    }
}

impl CoxData {
    pub fn build(cohort: &Cohort, spec: TransitionSpec) -> CoxData {
        let mut intervals = Vec::with_capacity(cohort.len() * 2);
        for s in cohort.subjects() {
            match spec.transition {
                Transition::HealthyToDisease => {
                    push_age_intervals(&mut intervals, s, s.entry_age, s.u_time, s.delta1)
                }
                Transition::HealthyToDeath => {
                    push_age_intervals(&mut intervals, s, s.entry_age, s.u_time, s.delta2)
                }
                Transition::OverallDeath => push_age_intervals(
                    &mut intervals,
                    s,
                    s.entry_age,
                    s.exit_age(),
                    s.delta2 || s.delta3,
                ),
                Transition::DiseaseToDeath => {
                    if !s.delta1 {
                        continue;
                    }
                    let mut x = Vec::with_capacity(s.covariates.len() + 2);
                    x.push(if s.screening().at(s.u_time) { 1.0 } else { 0.0 });
                    x.extend_from_slice(&s.covariates);
                    x.push(s.u_time);
                    intervals.push(Interval {
                        start: f64::NEG_INFINITY,
                        stop: s.v_time,
                        event: s.delta3,
                        x,
                    });
                }
            }
        }
        intervals.sort_by(canonical);

        let mut by_start_desc: Vec<usize> = (0..intervals.len()).collect();
        by_start_desc.sort_by(|&a, &b| intervals[b].start.total_cmp(&intervals[a].start).then(b.cmp(&a)));

        let mut event_times: Vec<f64> = intervals.iter().filter(|i| i.event).map(|i| i.stop).collect();
        event_times.dedup();
        event_times.reverse();
        let n_events = intervals.iter().filter(|i| i.event).count();

        let p = spec.covariate_labels(cohort).len();
        let mut center = vec![0.0; p];
        if !intervals.is_empty() {
            for (k, c) in center.iter_mut().enumerate() {
                let s: NeumaierSum = intervals.iter().map(|i| i.x[k]).collect();
                *c = s.value() / intervals.len() as f64;
            }
        }

        for iv in &mut intervals {
            for (x, c) in iv.x.iter_mut().zip(&center) {
                *x -= c;
            }
        }

        CoxData {
            transition: spec.transition,
            names: spec.covariate_labels(cohort),
            intervals,
            by_start_desc,
            event_times,
            center,
            n_events,
        }
    }

    pub fn n_coefficients(&self) -> usize {
        self.names.len()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn check_coefficients(&self, beta: &[f64]) -> Result<(), FitError> {
        if beta.len() != self.n_coefficients() {
            return Err(FitError::CoefficientLength {
                transition: self.transition.to_string(),
                expected: self.n_coefficients(),
                got: beta.len(),
            });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(FitError::NonFiniteCoefficient {
                transition: self.transition.to_string(),
            });
        }
        Ok(())
    }

    /// Centered linear predictors and the shift used before exponentiation.
    fn predictors(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let eta: Vec<f64> = self
            .intervals
            .iter()
            .map(|iv| {
                iv.x.iter().zip(beta).map(|(x, b)| b * x).sum()
            })
            .collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (eta, if shift.is_finite() { shift } else { 0.0 })
    }

    /// Runs the risk-set sweep in decreasing time, calling `visit` once per
    /// distinct event time with the risk-set sums of `w = exp(eta - shift)`,
    /// `w x`, `w x x'`, the event count and the event covariate sum.
    fn sweep<F>(&self, weights: &[f64], with_second: bool, mut visit: F)
    where
        F: FnMut(f64, &RiskSums),
    {
        let n = self.intervals.len();
        let p = self.n_coefficients();
        let mut rs = RiskSums::new(p, with_second);
        let mut add = n;
        let mut rem = 0;
        for &t in &self.event_times {
            rs.d = 0;
            rs.event_x.iter_mut().for_each(|v| *v = 0.0);
            while add > 0 && self.intervals[add - 1].stop >= t {
                add -= 1;
                let iv = &self.intervals[add];
                rs.update(&iv.x, weights[add], 1.0);
                if iv.event && iv.stop == t {
                    rs.d += 1;
                    for (e, v) in rs.event_x.iter_mut().zip(&iv.x) {
                        *e += v;
                    }
                }
            }
            while rem < n && self.intervals[self.by_start_desc[rem]].start >= t {
                let i = self.by_start_desc[rem];
                rs.update(&self.intervals[i].x, weights[i], -1.0);
                rem += 1;
            }
            visit(t, &rs);
        }
    }

    pub fn evaluate(&self, beta: &[f64]) -> LikelihoodEval {
        let p = self.n_coefficients();
        let (eta, shift) = self.predictors(beta);
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
        let mut loglik = NeumaierSum::default();
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        let bx = |x: &[f64]| -> f64 { x.iter().zip(beta).map(|(a, b)| a * b).sum() };
        self.sweep(&w, true, |_, rs| {
            let d = rs.d as f64;
            let s0 = rs.s0.value();
            loglik.add(bx(&rs.event_x) - d * (s0.ln() + shift));
            for a in 0..p {
                let ma = rs.s1[a].value() / s0;
                score[a] += rs.event_x[a] - d * ma;
                for b in 0..=a {
                    let mb = rs.s1[b].value() / s0;
                    let v = d * (rs.s2[a * p + b].value() / s0 - ma * mb);
                    info[(a, b)] += v;
                    if a != b {
                        info[(b, a)] += v;
                    }
                }
            }
        });
        LikelihoodEval {
            loglik: loglik.value(),
            score,
            information: info,
        }
    }

    /// Breslow cumulative baseline hazard at `beta` (uncentered predictor).
    pub fn breslow(&self, beta: &[f64]) -> StepFunction {
        let (eta, shift) = self.predictors(beta);
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
        let offset: f64 = shift + self.center.iter().zip(beta).map(|(c, b)| c * b).sum::<f64>();
        let mut times = Vec::with_capacity(self.event_times.len());
        let mut inc = Vec::with_capacity(self.event_times.len());
        self.sweep(&w, false, |t, rs| {
            let s0 = rs.s0.value();
            assert!(s0 > 0.0, "empty risk set at event time {t}");
            times.push(t);
            inc.push(rs.d as f64 * (-offset).exp() / s0);
        });
        times.reverse();
        inc.reverse();
        StepFunction::new(times, inc).expect("Breslow jumps are finite and ordered")
    }

    /// Newton-Raphson from zero with step-halving on the log partial likelihood.
    pub fn fit(&self, opts: &SolverOptions) -> Result<CoxFit, FitError> {
        let label = self.transition.to_string();
        if self.n_events == 0 {
            return Err(FitError::NoEvents { transition: label });
        }
        let p = self.n_coefficients();
        let mut beta = vec![0.0; p];
        let mut cur = self.evaluate(&beta);
        for k in 0..p {
            let scale = 1.0 + self.center[k].abs();
            if cur.information[(k, k)] <= 1e-12 * scale * scale * self.n_events as f64 {
                return Err(FitError::NonIdentifiable {
                    transition: label,
                    covariate: self.names[k].clone(),
                });
            }
        }
        let mut iterations = 0;
        loop {
            let norm = cur.score.amax();
            if opts.verbosity > 0 {
                eprintln!("[{label}] iter {iterations}: loglik {:.10} |score| {norm:e}", cur.loglik);
            }
            if norm <= opts.tol {
                break;
            }
            if iterations >= opts.max_iter {
                return Err(FitError::Divergence {
                    transition: label,
                    iterations,
                    score_norm: norm,
                });
            }
            let chol = cur
                .information
                .clone()
                .cholesky()
                .ok_or_else(|| FitError::Singular { transition: label.clone() })?;
            let step = chol.solve(&cur.score);
            let mut factor = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + factor * s).collect();
                let ev = self.evaluate(&trial);
                let slack = 1e-12 * (1.0 + cur.loglik.abs());
                if ev.loglik.is_finite() && ev.loglik >= cur.loglik - slack {
                    accepted = Some((trial, ev));
                    break;
                }
                factor *= 0.5;
            }
            match accepted {
                Some((b, ev)) => {
                    beta = b;
                    cur = ev;
                }
                None => {
                    return Err(FitError::Divergence {
                        transition: label,
                        iterations,
                        score_norm: norm,
                    })
                }
            }
            iterations += 1;
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(FitError::NonFiniteCoefficient { transition: label });
        }
        let inv = cur
            .information
            .clone()
            .cholesky()
            .ok_or_else(|| FitError::Singular { transition: label.clone() })?
            .inverse();
        let covariance = (0..p)
            .map(|a| (0..p).map(|b| 0.5 * (inv[(a, b)] + inv[(b, a)])).collect())
            .collect();
        Ok(CoxFit {
            transition: self.transition,
            names: self.names.clone(),
            baseline: self.breslow(&beta),
            coefficients: beta,
            covariance,
            loglik: cur.loglik,
            n_events: self.n_events,
            convergence: Convergence {
                iterations,
                score_norm: cur.score.amax(),
            },
        })
    }
}

struct RiskSums {
    p: usize,
    s0: NeumaierSum,
    s1: Vec<NeumaierSum>,
    s2: Vec<NeumaierSum>,
    d: usize,
    event_x: Vec<f64>,
}

impl RiskSums {
    fn new(p: usize, with_second: bool) -> Self {
        RiskSums {
            p,
            s0: NeumaierSum::default(),
            s1: vec![NeumaierSum::default(); p],
            s2: if with_second {
                vec![NeumaierSum::default(); p * p]
            } else {
                Vec::new()
            },
            d: 0,
            event_x: vec![0.0; p],
        }
    }

    fn update(&mut self, xc: &[f64], w: f64, sign: f64) {
        let sw = sign * w;
        self.s0.add(sw);
        if self.s2.is_empty() {
            return;
        }
        for a in 0..self.p {
            self.s1[a].add(sw * xc[a]);
            for b in 0..=a {
                self.s2[a * self.p + b].add(sw * xc[a] * xc[b]);
            }
        }
    }
}

pub fn fit_transition(cohort: &Cohort, spec: TransitionSpec, opts: &SolverOptions) -> Result<CoxFit, FitError> {
    CoxData::build(cohort, spec).fit(opts)
}

pub fn breslow(cohort: &Cohort, spec: TransitionSpec, coefficients: &[f64]) -> Result<StepFunction, FitError> {
    let data = CoxData::build(cohort, spec);
    data.check_coefficients(coefficients)?;
    Ok(data.breslow(coefficients))
}

pub fn loglik_score_info(
    cohort: &Cohort,
    spec: TransitionSpec,
    coefficients: &[f64],
) -> Result<LikelihoodEval, FitError> {
    let data = CoxData::build(cohort, spec);
    data.check_coefficients(coefficients)?;
    if data.n_events == 0 {
        return Err(FitError::NoEvents {
            transition: spec.transition.to_string(),
        });
    }
    Ok(data.evaluate(coefficients))
}
