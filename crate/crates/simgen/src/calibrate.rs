//! Calibration of generator constants against reported event percentages
//! and truth values, and the sojourn-convention report.

use scrcea_core::{EstimandRequest, Measure, Strategy, Window};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::generate::generate;
use crate::spec::{CensoringScenario, GeneratorSpec, SojournConvention, Weibull};
use crate::truth::{truth, TruthOptions};

/// Observed event fractions of a generated cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRates {
    pub disease: f64,
    pub death_healthy: f64,
    pub death_diseased: f64,
}

impl EventRates {
    pub fn overall_death(&self) -> f64 {
        self.death_healthy + self.death_diseased
    }

    /// Largest absolute gap to `target`, in percentage points.
    pub fn max_gap_points(&self, target: &EventRates) -> f64 {
        [
            self.disease - target.disease,
            self.death_healthy - target.death_healthy,
            self.death_diseased - target.death_diseased,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(100.0 * d.abs()))
    }
}

pub const SETTING_ONE_RATES: EventRates = EventRates {
    disease: 0.254,
    death_healthy: 0.050,
    death_diseased: 0.162,
};

pub const SETTING_TWO_RATES: EventRates = EventRates {
    disease: 0.020,
    death_healthy: 0.150,
    death_diseased: 0.014,
};

/// Event fractions of one cohort of `n` subjects.
pub fn event_rates(spec: &GeneratorSpec, n: usize, seed: u64) -> Result<EventRates, SimError> {
    let mut spec = spec.clone();
    spec.n = n;
    let cohort = generate(&spec, seed)?;
    let c = cohort.event_counts();
    let n = n as f64;
    Ok(EventRates {
        disease: c.disease as f64 / n,
        death_healthy: c.death_healthy as f64 / n,
        death_diseased: c.death_diseased as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex search from `x0` with initial edge lengths `step`.
/// Stops when the spread of simplex values falls below `ftol`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], ftol: f64, max_evals: usize) -> Result<Minimum, SimError>
where
    F: FnMut(&[f64]) -> Result<f64, SimError>,
{
    let d = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64, SimError> {
        *evals += 1;
        let v = f(x)?;
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)?));
    for k in 0..d {
        let mut x = x0.to_vec();
        x[k] += step[k];
        let v = eval(&x, &mut evals)?;
        simplex.push((x, v));
    }
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(a, b)| a + t * (b - a)).collect() };
    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[d].1 - simplex[0].1 <= ftol {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let worst = simplex[d].0.clone();
        let xr = along(&centroid, &worst, -1.0);
        let fr = eval(&xr, &mut evals)?;
        if fr < simplex[0].1 {
            let xe = along(&centroid, &worst, -2.0);
            let fe = eval(&xe, &mut evals)?;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(&centroid, &xr, 0.5);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            } else {
                let xc = along(&centroid, &worst, 0.5);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x = along(&best, &entry.0, 0.5);
                    let v = eval(&x, &mut evals)?;
                    *entry = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Ok(Minimum {
        x,
        value,
        evaluations: evals,
        converged,
    })
}

/// Reported truth values of the low-incidence setting over ages [40, 70]:
/// (strategy, measure, component, value).
pub fn setting_two_truth_targets() -> Vec<(Strategy, Measure, &'static str, f64)> {
    let scr = Strategy::At(50.0);
    vec![
        (Strategy::Never, Measure::Rmst, "disease_free", 21.483),
        (scr, Measure::Rmst, "disease_free", 22.006),
        (Strategy::Never, Measure::Rmst, "disease_state", 0.786),
        (scr, Measure::Rmst, "disease_state", 0.514),
        (Strategy::Never, Measure::LifeYearsLost, "death_after_disease", 0.721),
        (scr, Measure::LifeYearsLost, "death_after_disease", 0.518),
        (Strategy::Never, Measure::LifeYearsLost, "death_without_disease", 7.007),
        (scr, Measure::LifeYearsLost, "death_without_disease", 6.958),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Cohort size for the event-rate estimate (common random numbers).
    pub n: usize,
    pub seed: u64,
    /// Tolerance scale of the rates, in percentage points.
    pub rate_scale: f64,
    /// Tolerance scale of the truth values, in years.
    pub truth_scale: f64,
    pub max_evals: usize,
    pub truth: TruthOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            n: 200_000,
            seed: 2024,
            rate_scale: 0.05,
            truth_scale: 0.1,
            max_evals: 800,
            truth: TruthOptions {
                hermite_nodes: 24,
                tol: 1e-7,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub hazard01: Weibull,
    pub hazard02: Weibull,
    pub rates: EventRates,
    /// (component label, target, achieved) for every truth target.
    pub truths: Vec<(String, f64, f64)>,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn with_weibulls(base: &GeneratorSpec, p: &[f64]) -> GeneratorSpec {
    let mut spec = base.clone();
    spec.hazard01.weibull = Weibull { shape: p[0].exp(), scale: p[1].exp() };
    spec.hazard02.weibull = Weibull { shape: p[2].exp(), scale: p[3].exp() };
    spec
}

fn truth_values(spec: &GeneratorSpec, opts: &TruthOptions) -> Result<Vec<f64>, SimError> {
    let w = Window::new(40.0, 70.0)?;
    let targets = setting_two_truth_targets();
    let mut requests: Vec<EstimandRequest> = Vec::new();
    for (strategy, measure, _, _) in &targets {
        let r = EstimandRequest { measure: *measure, strategy: *strategy, window: w };
        if !requests.contains(&r) {
            requests.push(r);
        }
    }
    let results = truth(spec, &requests, opts)?;
    targets
        .iter()
        .map(|(strategy, measure, comp, _)| {
            results
                .iter()
                .find(|r| r.strategy == *strategy && r.measure == *measure)
                .and_then(|r| r.component(comp))
                .ok_or_else(|| SimError::Calibration(format!("missing component {comp}")))
        })
        .collect()
}

/// Tunes the two Weibull hazards of `base` (on the log scale) so that the
/// event percentages and the truth values approach their targets.
pub fn calibrate_weibulls(base: &GeneratorSpec, opts: &CalibrationOptions) -> Result<CalibrationOutcome, SimError> {
    let targets = setting_two_truth_targets();
    let objective = |p: &[f64]| -> Result<f64, SimError> {
        let spec = with_weibulls(base, p);
        let rates = event_rates(&spec, opts.n, opts.seed)?;
        let gaps = [
            rates.disease - SETTING_TWO_RATES.disease,
            rates.death_healthy - SETTING_TWO_RATES.death_healthy,
            rates.death_diseased - SETTING_TWO_RATES.death_diseased,
        ];
        let mut f: f64 = gaps.iter().map(|g| (100.0 * g / opts.rate_scale).powi(2)).sum();
        let v = truth_values(&spec, &opts.truth)?;
        let t: Vec<f64> = targets.iter().map(|t| t.3).collect();
        // Disease-state time and disease-path loss enter only through their
        // sum, which is set by incidence; their split is set by the sojourn.
        let residuals = [
            v[0] - t[0],
            v[1] - t[1],
            v[6] - t[6],
            v[7] - t[7],
            (v[2] + v[4]) - (t[2] + t[4]),
            (v[3] + v[5]) - (t[3] + t[5]),
        ];
        f += residuals.iter().map(|r| (r / opts.truth_scale).powi(2)).sum::<f64>();
        Ok(f)
    };
    let w01 = base.hazard01.weibull;
    let w02 = base.hazard02.weibull;
    let x0 = [w01.shape.ln(), w01.scale.ln(), w02.shape.ln(), w02.scale.ln()];
    let min = nelder_mead(objective, &x0, &[0.05, 0.02, 0.05, 0.02], 1e-4, opts.max_evals)?;
    let spec = with_weibulls(base, &min.x);
    let rates = event_rates(&spec, opts.n, opts.seed)?;
    let values = truth_values(&spec, &opts.truth)?;
    Ok(CalibrationOutcome {
        hazard01: spec.hazard01.weibull,
        hazard02: spec.hazard02.weibull,
        rates,
        truths: targets
            .iter()
            .zip(values)
            .map(|(t, v)| (format!("{} {} {}", t.1.label(), t.0, t.2), t.3, v))
            .collect(),
        objective: min.value,
        evaluations: min.evaluations,
        converged: min.converged,
    })
}

/// One row of the sojourn-convention report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionRow {
    pub convention: SojournConvention,
    pub center_t: f64,
    pub scenario: CensoringScenario,
    pub rates: EventRates,
    /// Largest gap to the reported percentages, in points.
    pub max_gap_points: f64,
}

/// Event rates of the high-incidence setting under each sojourn convention
/// (rate or mean parameterization, raw or centered onset age) and both
/// censoring scenarios.
pub fn convention_report(n: usize, seed: u64, centers: &[f64]) -> Result<Vec<ConventionRow>, SimError> {
    let mut rows = Vec::new();
    for scenario in [CensoringScenario::Independent, CensoringScenario::Conditional] {
        for convention in [SojournConvention::Rate, SojournConvention::Mean] {
            for &center in std::iter::once(&0.0).chain(centers) {
                let mut spec = GeneratorSpec::setting_one(scenario);
                spec.sojourn.convention = convention;
                spec.sojourn.center_t = center;
                let rates = event_rates(&spec, n, seed)?;
                rows.push(ConventionRow {
                    convention,
                    center_t: center,
                    scenario,
                    max_gap_points: rates.max_gap_points(&SETTING_ONE_RATES),
                    rates,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_finds_quadratic_minimum() {
        let f = |x: &[f64]| Ok((x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 0.5 * x[0] * x[1]);
        let m = nelder_mead(f, &[0.0, 0.0], &[0.5, 0.5], 1e-14, 2000).unwrap();
        assert!(m.converged);
        let grad = [2.0 * (m.x[0] - 1.5) + 0.5 * m.x[1], 6.0 * (m.x[1] + 0.5) + 0.5 * m.x[0]];
        assert!(grad[0].abs() < 1e-5 && grad[1].abs() < 1e-5, "{grad:?}");
    }
}
