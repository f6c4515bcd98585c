//! The three transition fits of the illness-death model and the cumulative
//! hazards they imply under a deterministic screening strategy.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, EventCounts};
use crate::coxtd::{CoxData, CoxFit, SolverOptions, Transition, TransitionSpec};
use crate::error::{EstimandError, FitError};

/// Counterfactual screening strategy: screen exactly at age `s` if still
/// healthy, or never.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Never,
    At(f64),
}

impl Strategy {
    /// Screening age, `+inf` for never.
    pub fn age(&self) -> f64 {
        match *self {
            Strategy::Never => f64::INFINITY,
            Strategy::At(s) => s,
        }
    }

    /// `Z(t; s) = I(s < t)`.
    pub fn screened_by(&self, t: f64) -> bool {
        self.age() < t
    }

    /// Strategies that screen at or after `t` coincide with never screening
    /// on `[0, t]`.
    pub fn is_never_within(&self, t: f64) -> bool {
        self.age() >= t
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Never => f.write_str("never"),
            Strategy::At(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("never") || t.eq_ignore_ascii_case("none") {
            return Ok(Strategy::Never);
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Strategy::At(v)),
            Ok(v) if v == f64::INFINITY => Ok(Strategy::Never),
            _ => Err(format!("`{s}` is not a screening age or `never`")),
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMeta {
    pub covariate_names: Vec<String>,
    pub n: usize,
    pub events: EventCounts,
    pub min_entry_age: f64,
    pub max_u: f64,
    pub max_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStateFit {
    pub fit01: CoxFit,
    pub fit02: CoxFit,
    pub fit13: CoxFit,
    pub cohort_meta: CohortMeta,
}

impl MultiStateFit {
    pub fn n_covariates(&self) -> usize {
        self.cohort_meta.covariate_names.len()
    }

    pub fn to_writer<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }

    pub fn from_reader<R: Read>(r: R) -> serde_json::Result<Self> {
        serde_json::from_reader(r)
    }

    /// Copy with the screening coefficient of every transition set to zero
    /// (baselines left as fitted).
    pub fn without_screening_effect(&self) -> MultiStateFit {
        let mut f = self.clone();
        for fit in [&mut f.fit01, &mut f.fit02, &mut f.fit13] {
            fit.coefficients[0] = 0.0;
        }
        f
    }
}

pub fn cohort_meta(cohort: &Cohort) -> CohortMeta {
    let subjects = cohort.subjects();
    CohortMeta {
        covariate_names: cohort.covariate_names().to_vec(),
        n: cohort.len(),
        events: cohort.event_counts(),
        min_entry_age: cohort.min_entry_age(),
        max_u: subjects.iter().map(|s| s.u_time).fold(f64::NEG_INFINITY, f64::max),
        max_v: subjects.iter().map(|s| s.v_time).fold(0.0, f64::max),
    }
}

pub fn fit_illness_death(cohort: &Cohort, opts: &SolverOptions) -> Result<MultiStateFit, FitError> {
    let fit = |t| CoxData::build(cohort, TransitionSpec::new(t)).fit(opts);
    let (fit01, (fit02, fit13)) = rayon::join(
        || fit(Transition::HealthyToDisease),
        || {
            rayon::join(
                || fit(Transition::HealthyToDeath),
                || fit(Transition::DiseaseToDeath),
            )
        },
    );
    Ok(MultiStateFit {
        fit01: fit01?,
        fit02: fit02?,
        fit13: fit13?,
        cohort_meta: cohort_meta(cohort),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cumulative hazard evaluators for one covariate vector and strategy.
#[derive(Debug, Clone)]
pub struct HazardComponents<'a> {
    fit: &'a MultiStateFit,
    strategy: Strategy,
    lp01: f64,
    lp02: f64,
    lp13: f64,
}

pub fn hazard_components<'a>(
    fit: &'a MultiStateFit,
    x: &[f64],
    strategy: Strategy,
) -> Result<HazardComponents<'a>, EstimandError> {
    if x.len() != fit.n_covariates() {
        return Err(EstimandError::CovariateMismatch {
            expected: fit.n_covariates(),
            got: x.len(),
        });
    }
    Ok(HazardComponents {
        fit,
        strategy,
        lp01: dot(fit.fit01.x_coefs(), x),
        lp02: dot(fit.fit02.x_coefs(), x),
        lp13: dot(fit.fit13.x_coefs(), x),
    })
}

fn cumulative_age(fit: &CoxFit, lp: f64, strategy: Strategy, t: f64) -> f64 {
    let beta = fit.screen_coef();
    let b = &fit.baseline;
    let k = b.count_le(t);
    let mut acc = 0.0;
    for (&tj, &d) in b.times()[..k].iter().zip(&b.increments()[..k]) {
        let z = if strategy.screened_by(tj) { 1.0 } else { 0.0 };
        acc += d * (lp + beta * z).exp();
    }
    acc
}

impl HazardComponents<'_> {
    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// `Lambda_01(t | x, s)`.
    pub fn cum01(&self, t: f64) -> f64 {
        cumulative_age(&self.fit.fit01, self.lp01, self.strategy, t)
    }

    /// `Lambda_02(t | x, s)`.
    pub fn cum02(&self, t: f64) -> f64 {
        cumulative_age(&self.fit.fit02, self.lp02, self.strategy, t)
    }

    /// Multiplier of the sojourn baseline for onset at age `r`.
    pub fn sojourn_multiplier(&self, r: f64) -> f64 {
        let f = &self.fit.fit13;
        let z = if self.strategy.screened_by(r) { 1.0 } else { 0.0 };
        (self.lp13 + f.screen_coef() * z + f.onset_coef().unwrap_or(0.0) * r).exp()
    }

    /// `Lambda_13(sojourn | T = r, Z(r; s), x)`.
    pub fn cum13(&self, sojourn: f64, r: f64) -> f64 {
        self.sojourn_multiplier(r) * self.fit.fit13.baseline.value(sojourn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_text_round_trip() {
        for s in [Strategy::Never, Strategy::At(50.0), Strategy::At(62.5)] {
            let t: Strategy = s.to_string().parse().unwrap();
            assert_eq!(s, t);
        }
        assert!("-3".parse::<Strategy>().is_err());
        let j = serde_json::to_string(&Strategy::At(50.0)).unwrap();
        assert_eq!(j, "\"50\"");
    }

    #[test]
    fn strict_switch() {
        let s = Strategy::At(50.0);
        assert!(!s.screened_by(50.0));
        assert!(s.screened_by(50.5));
        assert!(!Strategy::Never.screened_by(1e300));
    }
}
