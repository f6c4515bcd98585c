//! Plug-in estimators of the unified measure `E{M^(s)(t)}` and its special
//! cases, averaged over the empirical covariate distribution.
//!
//! Every integral is a finite sum: the transition hazards are step functions,
//! so `P1` is piecewise constant on the union of the 0->1 and 0->2 jump times
//! and the state-1 terms reduce to sums over disease-onset jumps and sojourn
//! jumps. The window is `[t0, t]` on the age scale.

pub mod cheb;
mod curves;
mod icer;
mod sojourn;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::EstimandError;
use crate::multistate::{hazard_components, MultiStateFit, Strategy};
use crate::step::StepFunction;
use crate::util::order_invariant_mean;

pub use icer::{icer, IcerFlag, IcerRow};

use curves::AgeGrid;
use sojourn::{Functional, SojournEngine};

/// Integration window `[t0, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t0: f64,
    pub t: f64,
}

impl Window {
    pub fn new(t0: f64, t: f64) -> Result<Self, EstimandError> {
        if !(t0.is_finite() && t.is_finite() && t0 >= 0.0 && t >= t0) {
            return Err(EstimandError::BadHorizon { t, t0 });
        }
        Ok(Window { t0, t })
    }

    pub fn length(&self) -> f64 {
        self.t - self.t0
    }
}

/// Quality scores for the initial (`a`), continuing (`b`) and terminal (`c`)
/// care phases of the disease state. The disease-free score is fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QualityRepr")]
pub struct QualityProfile {
    a: f64,
    b: f64,
    c: f64,
}

#[derive(Deserialize)]
struct QualityRepr {
    a: f64,
    b: f64,
    c: f64,
}

impl TryFrom<QualityRepr> for QualityProfile {
    type Error = EstimandError;

    fn try_from(r: QualityRepr) -> Result<Self, Self::Error> {
        QualityProfile::new(r.a, r.b, r.c)
    }
}

impl QualityProfile {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, EstimandError> {
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EstimandError::InvalidQuality(format!("{name} = {v}")));
            }
        }
        Ok(QualityProfile { a, b, c })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Score at age `u` for onset at `onset` and death at `death`
    /// (`+inf` when death is beyond reach). Zero outside `[onset, death]`.
    pub fn score(&self, u: f64, onset: f64, death: f64) -> f64 {
        if u < onset || u > death {
            return 0.0;
        }
        let dur = death - onset;
        if dur > 2.0 {
            if u <= onset + 1.0 {
                self.a
            } else if u <= death - 1.0 {
                self.b
            } else {
                self.c
            }
        } else if dur > 1.0 {
            if u <= death - 1.0 {
                self.a
            } else {
                self.c
            }
        } else if u > onset {
            self.c
        } else {
            0.0
        }
    }
}

/// Cumulative weight `W_k` of the unified measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `W(u) = u`.
    Identity,
    Zero,
    /// `W(u) = floor((u - start + interval)_+ / interval)`; `start` defaults
    /// to the strategy's screening age.
    ScreeningCount { interval: f64, start: Option<f64> },
    /// Quality-weighted time. In the disease-free state the score is 1.
    Quality { profile: QualityProfile },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Rmst,
    LifeYearsLost,
    Qaly { profile: QualityProfile },
    QalyLostDisease { profile: QualityProfile },
    Screenings { interval: f64 },
    Unified { w1: WeightSpec, w2: WeightSpec },
}

impl Measure {
    pub fn label(&self) -> &'static str {
        match self {
            Measure::Rmst => "rmst",
            Measure::LifeYearsLost => "life_years_lost",
            Measure::Qaly { .. } => "qaly",
            Measure::QalyLostDisease { .. } => "qaly_lost_disease",
            Measure::Screenings { .. } => "n_screenings",
            Measure::Unified { .. } => "unified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandResult {
    pub measure: Measure,
    pub strategy: Strategy,
    pub window: Window,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub components: Vec<Component>,
}

/// One output row; `component` is `total` for the headline estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub measure: String,
    pub s: String,
    pub t0: f64,
    pub t: f64,
    pub component: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl EstimandResult {
    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|c| c.name == name).map(|c| c.estimate)
    }

    /// Headline value followed by the components, in that order.
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.estimate)
            .chain(self.components.iter().map(|c| c.estimate))
            .collect()
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let row = |component: &str, estimate, se: Option<f64>, ci: Option<(f64, f64)>| ResultRow {
            measure: self.measure.label().to_string(),
            s: self.strategy.to_string(),
            t0: self.window.t0,
            t: self.window.t,
            component: component.to_string(),
            estimate,
            se,
            ci_lo: ci.map(|c| c.0),
            ci_hi: ci.map(|c| c.1),
        };
        let mut out = vec![row("total", self.estimate, self.se, self.ci)];
        out.extend(self.components.iter().map(|c| row(&c.name, c.estimate, c.se, c.ci)));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimandRequest {
    pub measure: Measure,
    pub strategy: Strategy,
    pub window: Window,
}

/// How the disease-state sums are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Tabulated sojourn integrals and, with a single covariate, interpolation
    /// across subjects; each step falls back to exact sums when its
    /// Chebyshev tail check fails.
    #[default]
    Auto,
    /// Direct summation over every onset and sojourn jump for every subject.
    Exact,
}

fn check_x(fit: &MultiStateFit, x: &[f64]) -> Result<(), EstimandError> {
    if x.len() != fit.n_covariates() {
        return Err(EstimandError::CovariateMismatch {
            expected: fit.n_covariates(),
            got: x.len(),
        });
    }
    Ok(())
}

fn check_t(t: f64) -> Result<(), EstimandError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(EstimandError::BadHorizon { t, t0: 0.0 });
    }
    Ok(())
}

/// Probability of being alive and disease-free at age `t`.
pub fn p1(fit: &MultiStateFit, x: &[f64], s: Strategy, t: f64) -> Result<f64, EstimandError> {
    check_t(t)?;
    let h = hazard_components(fit, x, s)?;
    Ok((-h.cum01(t) - h.cum02(t)).exp())
}

/// Cumulative incidence of disease up to `t`, as jumps at the 0->1 event times.
pub fn cif_disease(fit: &MultiStateFit, x: &[f64], s: Strategy, t: f64) -> Result<StepFunction, EstimandError> {
    check_t(t)?;
    check_x(fit, x)?;
    let grid = AgeGrid::new(fit, s, t);
    Ok(grid.subject(fit, x).cif(&grid, true))
}

/// Cumulative incidence of death without disease up to `t`.
pub fn cif_death_healthy(
    fit: &MultiStateFit,
    x: &[f64],
    s: Strategy,
    t: f64,
) -> Result<StepFunction, EstimandError> {
    check_t(t)?;
    check_x(fit, x)?;
    let grid = AgeGrid::new(fit, s, t);
    Ok(grid.subject(fit, x).cif(&grid, false))
}

/// Probability of surviving in the disease state to age `t` given onset at `r`.
pub fn p13(fit: &MultiStateFit, r: f64, x: &[f64], s: Strategy, t: f64) -> Result<f64, EstimandError> {
    if t < r {
        return Err(EstimandError::HorizonBeforeOnset { t, onset: r });
    }
    let h = hazard_components(fit, x, s)?;
    Ok((-h.cum13(t - r, r)).exp())
}

/// Probability of being alive with disease at age `t`.
pub fn p2(fit: &MultiStateFit, x: &[f64], s: Strategy, t: f64) -> Result<f64, EstimandError> {
    let f = cif_disease(fit, x, s, t)?;
    let h = hazard_components(fit, x, s)?;
    let base = &fit.fit13.baseline;
    let mut acc = crate::util::NeumaierSum::default();
    for (r, d) in f.iter() {
        if d > 0.0 {
            acc.add(d * (-h.sojourn_multiplier(r) * base.value(t - r)).exp());
        }
    }
    Ok(acc.value())
}

/// Quantities evaluated once per subject for one (strategy, window).
#[derive(Debug, Default, Clone)]
struct Plan {
    w1_epochs: Vec<Vec<f64>>,
    functionals: Vec<Functional>,
}

impl Plan {
    fn epochs(&mut self, e: Vec<f64>) -> usize {
        if let Some(k) = self.w1_epochs.iter().position(|x| *x == e) {
            return k;
        }
        self.w1_epochs.push(e);
        self.w1_epochs.len() - 1
    }

    fn functional(&mut self, f: Functional) -> usize {
        if let Some(k) = self.functionals.iter().position(|x| *x == f) {
            return k;
        }
        self.functionals.push(f);
        self.functionals.len() - 1
    }
}

/// Screening epochs `start, start + interval, ...` inside `[t0, t]`.
fn epochs(start: f64, interval: f64, window: Window) -> Vec<f64> {
    let mut out = Vec::new();
    if !start.is_finite() {
        return out;
    }
    let mut k = if start >= window.t0 {
        0.0
    } else {
        ((window.t0 - start) / interval).ceil()
    };
    loop {
        let e = start + k * interval;
        if e > window.t {
            break;
        }
        if e >= window.t0 {
            out.push(e);
        }
        k += 1.0;
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    State1Time,
    L02,
    W1(usize),
    Zero,
    F(usize),
}

fn state1_slot(w: &WeightSpec, s: Strategy, window: Window, plan: &mut Plan) -> Result<Slot, EstimandError> {
    Ok(match *w {
        WeightSpec::Identity | WeightSpec::Quality { .. } => Slot::State1Time,
        WeightSpec::Zero => Slot::Zero,
        WeightSpec::ScreeningCount { interval, start } => {
            if !(interval > 0.0) {
                return Err(EstimandError::NonPositiveInterval(interval));
            }
            Slot::W1(plan.epochs(epochs(start.unwrap_or(s.age()), interval, window)))
        }
    })
}

fn state2_slot(w: &WeightSpec, s: Strategy, window: Window, plan: &mut Plan) -> Result<Slot, EstimandError> {
    Ok(match *w {
        WeightSpec::Identity => Slot::F(plan.functional(Functional::Time)),
        WeightSpec::Quality { profile } => Slot::F(plan.functional(Functional::Quality(profile))),
        WeightSpec::Zero => Slot::Zero,
        WeightSpec::ScreeningCount { interval, start } => {
            if !(interval > 0.0) {
                return Err(EstimandError::NonPositiveInterval(interval));
            }
            Slot::F(plan.functional(Functional::Count(epochs(start.unwrap_or(s.age()), interval, window))))
        }
    })
}

/// Named components for a measure; the headline estimate is their sum.
fn layout(m: &Measure, s: Strategy, window: Window, plan: &mut Plan) -> Result<Vec<(&'static str, Slot)>, EstimandError> {
    Ok(match *m {
        Measure::Rmst => vec![
            ("disease_free", Slot::State1Time),
            ("disease_state", Slot::F(plan.functional(Functional::Time))),
        ],
        Measure::LifeYearsLost => vec![
            ("death_without_disease", Slot::L02),
            ("death_after_disease", Slot::F(plan.functional(Functional::Lost))),
        ],
        Measure::Qaly { profile } => vec![
            ("disease_free", Slot::State1Time),
            ("disease_state", Slot::F(plan.functional(Functional::Quality(profile)))),
        ],
        Measure::QalyLostDisease { profile } => {
            vec![("qaly_lost_disease", Slot::F(plan.functional(Functional::QualityLost(profile))))]
        }
        Measure::Screenings { interval } => vec![(
            "screenings",
            state1_slot(&WeightSpec::ScreeningCount { interval, start: None }, s, window, plan)?,
        )],
        Measure::Unified { w1, w2 } => vec![
            ("state1", state1_slot(&w1, s, window, plan)?),
            ("state2", state2_slot(&w2, s, window, plan)?),
        ],
    })
}

/// Evaluates all requests on one fitted model. Requests sharing a strategy and
/// window share the per-subject work.
pub fn evaluate_requests(
    fit: &MultiStateFit,
    cohort: &Cohort,
    requests: &[EstimandRequest],
    method: EvalMethod,
) -> Result<Vec<EstimandResult>, EstimandError> {
    if cohort.is_empty() {
        return Err(EstimandError::EmptyCohort);
    }
    let p = fit.n_covariates();
    if let Some(s) = cohort.subjects().iter().find(|s| s.covariates.len() != p) {
        return Err(EstimandError::CovariateMismatch {
            expected: p,
            got: s.covariates.len(),
        });
    }
    if let Some(Measure::Screenings { interval }) = requests.iter().map(|r| r.measure).find(
        |m| matches!(m, Measure::Screenings { interval } if !(*interval > 0.0)),
    ) {
        return Err(EstimandError::NonPositiveInterval(interval));
    }

    // Group by (strategy, window) keyed on bit patterns for a stable order.
    let mut groups: BTreeMap<(u64, u64, u64), Vec<usize>> = BTreeMap::new();
    for (k, r) in requests.iter().enumerate() {
        Window::new(r.window.t0, r.window.t)?;
        let key = (r.strategy.age().to_bits(), r.window.t0.to_bits(), r.window.t.to_bits());
        groups.entry(key).or_default().push(k);
    }

    let mut out: Vec<Option<EstimandResult>> = vec![None; requests.len()];
    for members in groups.values() {
        let first = requests[members[0]];
        let (s, window) = (first.strategy, first.window);
        let mut plan = Plan::default();
        let layouts = members
            .iter()
            .map(|&k| layout(&requests[k].measure, s, window, &mut plan))
            .collect::<Result<Vec<_>, _>>()?;
        let per_subject = subject_values(fit, cohort, s, window, &plan, method);
        let mean = |slot: Slot| -> f64 {
            match slot {
                Slot::Zero => 0.0,
                _ => {
                    let mut v: Vec<f64> = per_subject.iter().map(|sv| sv.get(slot, &plan)).collect();
                    order_invariant_mean(&mut v)
                }
            }
        };
        for (&k, lay) in members.iter().zip(layouts) {
            let components: Vec<Component> = lay
                .iter()
                .map(|&(name, slot)| Component {
                    name: name.to_string(),
                    estimate: mean(slot),
                    se: None,
                    ci: None,
                })
                .collect();
            let estimate = components.iter().map(|c| c.estimate).sum();
            let components = if components.len() > 1 { components } else { Vec::new() };
            out[k] = Some(EstimandResult {
                measure: requests[k].measure,
                strategy: s,
                window,
                estimate,
                se: None,
                ci: None,
                components,
            });
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every request evaluated")).collect())
}

/// Per-subject values laid out as `[state1_time, l02, w1.., f..]`.
struct SubjectValues(Vec<f64>);

impl SubjectValues {
    fn get(&self, slot: Slot, plan: &Plan) -> f64 {
        match slot {
            Slot::State1Time => self.0[0],
            Slot::L02 => self.0[1],
            Slot::W1(k) => self.0[2 + k],
            Slot::F(k) => self.0[2 + plan.w1_epochs.len() + k],
            Slot::Zero => 0.0,
        }
    }
}

/// Orders tried when interpolating per-subject values in a scalar covariate.
const X_ORDERS: [usize; 4] = [16, 32, 64, 128];
const X_TAIL: f64 = 1e-13;

fn subject_values(
    fit: &MultiStateFit,
    cohort: &Cohort,
    s: Strategy,
    window: Window,
    plan: &Plan,
    method: EvalMethod,
) -> Vec<SubjectValues> {
    let grid = AgeGrid::new(fit, s, window.t);
    let xs: Vec<&[f64]> = cohort.subjects().iter().map(|s| s.covariates.as_slice()).collect();
    let engine = (!plan.functionals.is_empty())
        .then(|| SojournEngine::new(fit, &grid, s, window, &plan.functionals, &xs, method));
    let eval = |x: &[f64]| -> Vec<f64> {
        let curve = grid.subject(fit, x);
        let mut v = Vec::with_capacity(2 + plan.w1_epochs.len() + plan.functionals.len());
        v.push(curve.p1_integral(&grid, window));
        v.push(curve.l02(&grid, window));
        v.extend(plan.w1_epochs.iter().map(|e| curve.p1_sum_at(&grid, e)));
        if let Some(eng) = &engine {
            v.extend(eng.values(&curve, x));
        }
        v
    };

    // Distinct covariate vectors, in order of first appearance.
    let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut uniques: Vec<&[f64]> = Vec::new();
    let which: Vec<usize> = xs
        .iter()
        .map(|x| {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                uniques.push(x);
                uniques.len() - 1
            })
        })
        .collect();

    let values = (method == EvalMethod::Auto)
        .then(|| interpolate_in_x(&uniques, &eval))
        .flatten()
        .unwrap_or_else(|| uniques.iter().map(|x| eval(x)).collect());
    which.into_iter().map(|k| SubjectValues(values[k].clone())).collect()
}

/// Values at the distinct covariates through a Chebyshev interpolant in a
/// scalar covariate. `None` when there are too few subjects for it to pay
/// off or when the largest order is not resolved.
fn interpolate_in_x(uniques: &[&[f64]], eval: &dyn Fn(&[f64]) -> Vec<f64>) -> Option<Vec<Vec<f64>>> {
    if uniques.first()?.len() != 1 {
        return None;
    }
    let points: Vec<f64> = uniques.iter().map(|x| x[0]).collect();
    cheb::interpolate(&points, |x| eval(&[x]), &X_ORDERS, X_TAIL)
}

fn single(
    fit: &MultiStateFit,
    cohort: &Cohort,
    measure: Measure,
    s: Strategy,
    window: Window,
) -> Result<EstimandResult, EstimandError> {
    let req = EstimandRequest {
        measure,
        strategy: s,
        window,
    };
    Ok(evaluate_requests(fit, cohort, &[req], EvalMethod::Auto)?.remove(0))
}

/// Unified measure with weights `w1` (disease-free) and `w2` (disease state).
pub fn estimate_m(
    fit: &MultiStateFit,
    cohort: &Cohort,
    w1: WeightSpec,
    w2: WeightSpec,
    s: Strategy,
    window: Window,
) -> Result<EstimandResult, EstimandError> {
    single(fit, cohort, Measure::Unified { w1, w2 }, s, window)
}

pub fn rmst(fit: &MultiStateFit, cohort: &Cohort, s: Strategy, window: Window) -> Result<EstimandResult, EstimandError> {
    single(fit, cohort, Measure::Rmst, s, window)
}

/// Cause-specific mean life years lost: without disease (0->2) and after
/// disease (0->1->3).
pub fn life_years_lost(
    fit: &MultiStateFit,
    cohort: &Cohort,
    s: Strategy,
    window: Window,
) -> Result<EstimandResult, EstimandError> {
    single(fit, cohort, Measure::LifeYearsLost, s, window)
}

pub fn qaly(
    fit: &MultiStateFit,
    cohort: &Cohort,
    s: Strategy,
    window: Window,
    profile: Option<QualityProfile>,
) -> Result<EstimandResult, EstimandError> {
    let profile = profile.ok_or(EstimandError::MissingProfile)?;
    single(fit, cohort, Measure::Qaly { profile }, s, window)
}

/// Quality-weighted years lost through the disease pathway. After death the
/// weight is the score of the care phase the subject would have been in:
/// `a` during the first year after onset, `b` afterwards.
pub fn qaly_lost_disease(
    fit: &MultiStateFit,
    cohort: &Cohort,
    s: Strategy,
    window: Window,
    profile: Option<QualityProfile>,
) -> Result<EstimandResult, EstimandError> {
    let profile = profile.ok_or(EstimandError::MissingProfile)?;
    single(fit, cohort, Measure::QalyLostDisease { profile }, s, window)
}

/// Expected number of screenings while disease-free: epochs
/// `s, s + interval, ...` inside `[t0, t]`, each weighted by `P1`.
pub fn n_screenings(
    fit: &MultiStateFit,
    cohort: &Cohort,
    s: Strategy,
    window: Window,
    interval: f64,
) -> Result<EstimandResult, EstimandError> {
    if !(interval > 0.0) {
        return Err(EstimandError::NonPositiveInterval(interval));
    }
    single(fit, cohort, Measure::Screenings { interval }, s, window)
}
