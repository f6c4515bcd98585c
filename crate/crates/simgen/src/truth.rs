//! Ground truth of the counterfactual measures under the generating model,
//! by numerical integration: Gauss-Hermite over `X` and adaptive
//! Gauss-Kronrod over onset age (and over sojourn where no closed form is
//! used).

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use rayon::prelude::*;
use scrcea_core::estimands::Component;
use scrcea_core::{EstimandRequest, EstimandResult, Strategy, Window};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::payoff::{components, DiseasePayoff, Quantity};
use crate::quad::integrate;
use crate::spec::GeneratorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthOptions {
    pub hermite_nodes: usize,
    /// Absolute tolerance of each age integral at a fixed `X`.
    pub tol: f64,
}

impl Default for TruthOptions {
    fn default() -> Self {
        TruthOptions {
            hermite_nodes: 48,
            tol: 1e-9,
        }
    }
}

/// The generating model at a fixed covariate value and screening age.
struct Conditional<'a> {
    spec: &'a GeneratorSpec,
    x: f64,
    s: f64,
}

impl Conditional<'_> {
    fn p1(&self, u: f64) -> f64 {
        (-self.spec.hazard01.cum_hazard(u, self.x, self.s) - self.spec.hazard02.cum_hazard(u, self.x, self.s)).exp()
    }

    fn onset_density(&self, v: f64) -> f64 {
        self.p1(v) * self.spec.hazard01.hazard(v, self.x, self.s)
    }

    fn healthy_death_density(&self, v: f64) -> f64 {
        self.p1(v) * self.spec.hazard02.hazard(v, self.x, self.s)
    }

    /// `E[payoff | onset v]` under the exponential sojourn.
    fn given_onset(&self, p: &DiseasePayoff, v: f64, w: Window, tol: f64) -> Result<f64, SimError> {
        let rho = self.spec.sojourn.rate(self.x, v);
        let lo = w.t0.max(v);
        let (a, b) = (lo - v, w.t - v);
        // int_a^b exp(-rho r) dr
        let alive = ((-rho * a).exp() - (-rho * b).exp()) / rho;
        Ok(match p {
            DiseasePayoff::Time => alive,
            DiseasePayoff::Lost => (b - a) - alive,
            DiseasePayoff::Count(epochs) => epochs
                .iter()
                .filter(|&&e| e >= lo && e <= w.t)
                .map(|&e| (-rho * (e - v)).exp())
                .sum(),
            DiseasePayoff::Quality(_) | DiseasePayoff::QualityLost(_) => {
                // Death later than t + 1 pays the same as no death.
                let cap = b + 1.0;
                let breaks = [a, b, a + 1.0, 1.0, 2.0];
                let body = integrate(|s| rho * (-rho * s).exp() * p.value(v, v + s, w), 0.0, cap, &breaks, tol)?;
                body + (-rho * cap).exp() * p.value(v, f64::INFINITY, w)
            }
        })
    }

    fn quantity(&self, q: &Quantity, w: Window, tol: f64) -> Result<f64, SimError> {
        let s = self.s;
        match q {
            Quantity::Zero => Ok(0.0),
            Quantity::DiseaseFree => integrate(|u| self.p1(u), w.t0, w.t, &[s], tol),
            Quantity::DeathWithoutDisease => integrate(
                |v| self.healthy_death_density(v) * (w.t - w.t0.max(v)),
                0.0,
                w.t,
                &[s, w.t0],
                tol,
            ),
            Quantity::HealthyCount(epochs) => Ok(epochs.iter().map(|&e| self.p1(e)).sum()),
            Quantity::Disease(p) => {
                let mut breaks = vec![s, w.t0, w.t0 - 1.0, w.t0 - 2.0, w.t - 1.0, w.t - 2.0];
                if let DiseasePayoff::Count(e) = p {
                    breaks.extend_from_slice(e);
                }
                let inner_tol = tol * 1e-2;
                let mut failure = None;
                let value = integrate(
                    |v| {
                        let f = self.onset_density(v);
                        if f == 0.0 {
                            return 0.0;
                        }
                        match self.given_onset(p, v, w, inner_tol) {
                            Ok(g) => f * g,
                            Err(e) => {
                                failure.get_or_insert(e);
                                0.0
                            }
                        }
                    },
                    0.0,
                    w.t,
                    &breaks,
                    tol,
                )?;
                match failure {
                    Some(e) => Err(e),
                    None => Ok(value),
                }
            }
        }
    }
}

/// Truth of every request under `spec`, laid out like the plug-in estimates
/// (same component names; `se` and `ci` empty).
pub fn truth(spec: &GeneratorSpec, requests: &[EstimandRequest], opts: &TruthOptions) -> Result<Vec<EstimandResult>, SimError> {
    spec.validate()?;
    let n = NonZeroUsize::new(opts.hermite_nodes)
        .ok_or_else(|| SimError::InvalidRequest("hermite_nodes must be positive".into()))?;
    let rule: Vec<(f64, f64)> = GaussHermite::new(n)
        .into_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / std::f64::consts::PI.sqrt()))
        .collect();

    requests
        .iter()
        .map(|r| {
            Window::new(r.window.t0, r.window.t)?;
            let parts = components(&r.measure, r.strategy, r.window)?;
            let s = r.strategy.age();
            let values = parts
                .iter()
                .map(|(_, q)| {
                    let at_nodes: Vec<f64> = rule
                        .par_iter()
                        .map(|&(x, _)| Conditional { spec, x, s }.quantity(q, r.window, opts.tol))
                        .collect::<Result<_, _>>()?;
                    Ok(rule.iter().zip(&at_nodes).map(|((_, w), v)| w * v).sum())
                })
                .collect::<Result<Vec<f64>, SimError>>()?;
            Ok(assemble(r, &parts, &values, None))
        })
        .collect()
}

/// Result with component values (and standard errors) in layout order.
pub(crate) fn assemble(
    r: &EstimandRequest,
    parts: &[(&'static str, Quantity)],
    values: &[f64],
    ses: Option<(&[f64], f64)>,
) -> EstimandResult {
    let comps: Vec<Component> = parts
        .iter()
        .zip(values)
        .enumerate()
        .map(|(k, ((name, _), &v))| Component {
            name: name.to_string(),
            estimate: v,
            se: ses.map(|(s, _)| s[k]),
            ci: None,
        })
        .collect();
    EstimandResult {
        measure: r.measure,
        strategy: r.strategy,
        window: r.window,
        estimate: values.iter().fold(0.0, |a, v| a + v),
        se: ses.map(|(_, total)| total),
        ci: None,
        components: if comps.len() > 1 { comps } else { Vec::new() },
    }
}

/// Convenience: truth of a single measure.
pub fn truth_one(
    spec: &GeneratorSpec,
    measure: scrcea_core::Measure,
    strategy: Strategy,
    window: Window,
    opts: &TruthOptions,
) -> Result<EstimandResult, SimError> {
    Ok(truth(spec, &[EstimandRequest { measure, strategy, window }], opts)?.remove(0))
}
