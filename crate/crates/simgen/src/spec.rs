//! Generating-model configuration and the two shipped settings.

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Weibull cumulative hazard `(t / scale)^shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
}

impl Weibull {
    pub fn cum_hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (t / self.scale).powf(self.shape)
        }
    }

    pub fn hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.shape / self.scale * (t / self.scale).powf(self.shape - 1.0)
        }
    }

    pub fn inverse_cum_hazard(&self, h: f64) -> f64 {
        self.scale * h.powf(1.0 / self.shape)
    }
}

/// Transition hazard `h_W(t) exp(log_hr_screen Z(t; S) + log_hr_x X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionHazard {
    pub weibull: Weibull,
    pub log_hr_screen: f64,
    pub log_hr_x: f64,
}

impl TransitionHazard {
    /// Cumulative hazard to age `t` with screening switched on after `s`.
    pub fn cum_hazard(&self, t: f64, x: f64, s: f64) -> f64 {
        let pre = self.weibull.cum_hazard(t.min(s));
        let post = if t > s {
            self.log_hr_screen.exp() * (self.weibull.cum_hazard(t) - pre)
        } else {
            0.0
        };
        (self.log_hr_x * x).exp() * (pre + post)
    }

    pub fn hazard(&self, t: f64, x: f64, s: f64) -> f64 {
        let z = if s < t { self.log_hr_screen } else { 0.0 };
        self.weibull.hazard(t) * (self.log_hr_x * x + z).exp()
    }

    /// Age at which the cumulative hazard reaches `e`.
    pub fn invert(&self, e: f64, x: f64, s: f64) -> f64 {
        let y = e * (-self.log_hr_x * x).exp();
        let hs = if s.is_finite() { self.weibull.cum_hazard(s) } else { f64::INFINITY };
        if y <= hs {
            self.weibull.inverse_cum_hazard(y)
        } else {
            self.weibull
                .inverse_cum_hazard(hs + (y - hs) * (-self.log_hr_screen).exp())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SojournConvention {
    /// Rate `exp(coef_x X + coef_t T) / base`.
    Rate,
    /// Mean `base exp(coef_x X + coef_t T)`.
    Mean,
}

/// Exponential sojourn from onset to death.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SojournSpec {
    pub base: f64,
    pub coef_x: f64,
    pub coef_t: f64,
    pub convention: SojournConvention,
    /// Subtracted from the onset age before it enters the linear predictor.
    #[serde(default)]
    pub center_t: f64,
}

impl SojournSpec {
    pub fn rate(&self, x: f64, onset: f64) -> f64 {
        let lp = self.coef_x * x + self.coef_t * (onset - self.center_t);
        match self.convention {
            SojournConvention::Rate => lp.exp() / self.base,
            SojournConvention::Mean => 1.0 / (self.base * lp.exp()),
        }
    }
}

/// Exponential screening age with mean `base_mean exp(coef_x X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSpec {
    pub base_mean: f64,
    pub coef_x: f64,
}

/// Piecewise-constant hazard by age band: `hazards[k]` applies on
/// `[ages[k], ages[k + 1])` and the last value beyond the last age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeHazardTable {
    pub ages: Vec<f64>,
    pub hazards: Vec<f64>,
}

/// Stand-in for a population all-cause mortality table: yearly bands of a
/// Gompertz hazard, tuned so that Setting I under censoring (ii) has event
/// rates close to those of censoring (i). Not an actual life table.
pub const STAND_IN_GOMPERTZ: (f64, f64) = (1.93e-4, 0.12);

impl AgeHazardTable {
    pub fn gompertz_yearly(a: f64, b: f64, max_age: usize) -> Self {
        let ages: Vec<f64> = (0..=max_age).map(|k| k as f64).collect();
        let hazards = ages.iter().map(|x| a * (b * (x + 0.5)).exp()).collect();
        AgeHazardTable { ages, hazards }
    }

    pub fn stand_in() -> Self {
        Self::gompertz_yearly(STAND_IN_GOMPERTZ.0, STAND_IN_GOMPERTZ.1, 110)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        AgeHazardTable {
            ages: self.ages.clone(),
            hazards: self.hazards.iter().map(|h| h * factor).collect(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = !self.ages.is_empty()
            && self.ages.len() == self.hazards.len()
            && self.ages[0] == 0.0
            && self.ages.windows(2).all(|w| w[0] < w[1])
            && self.hazards.iter().all(|h| h.is_finite() && *h >= 0.0)
            && *self.hazards.last().unwrap() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidSpec(
                "age hazard table needs increasing ages from 0, nonnegative hazards and a positive last band".into(),
            ))
        }
    }

    pub fn cum_hazard(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.ages.len() {
            let lo = self.ages[k];
            if t <= lo {
                break;
            }
            let hi = self.ages.get(k + 1).copied().unwrap_or(f64::INFINITY);
            acc += self.hazards[k] * (t.min(hi) - lo);
        }
        acc
    }

    /// Age at which the cumulative hazard reaches `e`.
    pub fn invert(&self, e: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.ages.len() {
            let lo = self.ages[k];
            let hi = self.ages.get(k + 1).copied().unwrap_or(f64::INFINITY);
            let h = self.hazards[k];
            let seg = h * (hi - lo);
            if acc + seg >= e {
                return if h > 0.0 { lo + (e - acc) / h } else { lo };
            }
            acc += seg;
        }
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CensoringSpec {
    /// Independent `Uniform(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Cox model with a tabulated baseline hazard and `exp(log_hr_x X)`.
    CoxPopulation { table: AgeHazardTable, log_hr_x: f64 },
}

/// Left truncation: entry age drawn `Uniform(lo, hi)`; subjects whose first
/// event precedes entry are never observed and are redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub hazard01: TransitionHazard,
    pub hazard02: TransitionHazard,
    pub sojourn: SojournSpec,
    pub screening: ScreeningSpec,
    pub censoring: CensoringSpec,
    #[serde(default)]
    pub entry: Option<EntrySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringScenario {
    /// Scenario (i): independent uniform censoring.
    Independent,
    /// Scenario (ii): censoring depends on `X`.
    Conditional,
}

/// Weibull parameters for Setting II, tuned by [`crate::calibrate`] to the
/// target event percentages and the Setting II truth values.
pub const SETTING_TWO_WEIBULL: (Weibull, Weibull) = (
    Weibull { shape: 4.036, scale: 113.04 },
    Weibull { shape: 4.416, scale: 76.42 },
);

impl GeneratorSpec {
    pub fn setting_one(scenario: CensoringScenario) -> Self {
        GeneratorSpec {
            n: 2500,
            hazard01: TransitionHazard {
                weibull: Weibull { shape: 5.2, scale: 56.3 },
                log_hr_screen: -1.4,
                log_hr_x: 0.5,
            },
            hazard02: TransitionHazard {
                weibull: Weibull { shape: 5.9, scale: 83.0 },
                log_hr_screen: -0.05,
                log_hr_x: 0.4,
            },
            sojourn: SojournSpec {
                base: 45.0,
                coef_x: -0.3,
                coef_t: 0.05,
                convention: SojournConvention::Rate,
                center_t: 0.0,
            },
            screening: ScreeningSpec {
                base_mean: 50.0,
                coef_x: 0.53,
            },
            censoring: match scenario {
                CensoringScenario::Independent => CensoringSpec::Uniform { lo: 40.0, hi: 100.0 },
                CensoringScenario::Conditional => CensoringSpec::CoxPopulation {
                    table: AgeHazardTable::stand_in(),
                    log_hr_x: 1.0,
                },
            },
            entry: None,
        }
    }

    /// Low-incidence setting under conditional censoring, no truncation.
    pub fn setting_two() -> Self {
        let mut s = Self::setting_one(CensoringScenario::Conditional);
        s.n = 20_000;
        s.hazard01.weibull = SETTING_TWO_WEIBULL.0;
        s.hazard02.weibull = SETTING_TWO_WEIBULL.1;
        s
    }

    /// Setting II with enrollment ages `Uniform(50, 79)`.
    pub fn setting_two_truncated() -> Self {
        let mut s = Self::setting_two();
        s.entry = Some(EntrySpec { lo: 50.0, hi: 79.0 });
        s
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::InvalidSpec(format!("{what} must be positive and finite (got {v})")))
            }
        };
        let fin = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(SimError::InvalidSpec(format!("{what} must be finite")))
            }
        };
        if self.n == 0 {
            return Err(SimError::InvalidSpec("n must be positive".into()));
        }
        for (h, name) in [(&self.hazard01, "hazard01"), (&self.hazard02, "hazard02")] {
            pos(h.weibull.shape, &format!("{name}.weibull.shape"))?;
            pos(h.weibull.scale, &format!("{name}.weibull.scale"))?;
            fin(h.log_hr_screen, &format!("{name}.log_hr_screen"))?;
            fin(h.log_hr_x, &format!("{name}.log_hr_x"))?;
        }
        pos(self.sojourn.base, "sojourn.base")?;
        fin(self.sojourn.coef_x, "sojourn.coef_x")?;
        fin(self.sojourn.coef_t, "sojourn.coef_t")?;
        fin(self.sojourn.center_t, "sojourn.center_t")?;
        pos(self.screening.base_mean, "screening.base_mean")?;
        fin(self.screening.coef_x, "screening.coef_x")?;
        match &self.censoring {
            CensoringSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi) {
                    return Err(SimError::InvalidSpec("uniform censoring needs 0 <= lo < hi".into()));
                }
            }
            CensoringSpec::CoxPopulation { table, log_hr_x } => {
                table.validate()?;
                fin(*log_hr_x, "censoring.log_hr_x")?;
            }
        }
        if let Some(e) = self.entry {
            if !(e.lo.is_finite() && e.hi.is_finite() && e.lo >= 0.0 && e.lo < e.hi) {
                return Err(SimError::InvalidSpec("entry needs 0 <= lo < hi".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: GeneratorSpec = toml::from_str(text).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string_pretty(self).map_err(|e| SimError::InvalidSpec(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_inversion_round_trip() {
        let h = GeneratorSpec::setting_one(CensoringScenario::Independent).hazard01;
        for &(e, x, s) in &[(0.1, 0.3, 50.0), (2.0, -1.0, 45.0), (0.5, 0.0, f64::INFINITY), (1.0, 1.2, 0.0)] {
            let t = h.invert(e, x, s);
            assert!((h.cum_hazard(t, x, s) - e).abs() < 1e-10 * (1.0 + e));
        }
    }

    #[test]
    fn table_inversion_round_trip() {
        let t = AgeHazardTable::stand_in();
        for e in [1e-4, 0.01, 0.5, 3.0] {
            let a = t.invert(e);
            assert!((t.cum_hazard(a) - e).abs() < 1e-10);
        }
    }

    #[test]
    fn toml_round_trip() {
        for s in [
            GeneratorSpec::setting_one(CensoringScenario::Independent),
            GeneratorSpec::setting_one(CensoringScenario::Conditional),
            GeneratorSpec::setting_two_truncated(),
        ] {
            let text = s.to_toml().unwrap();
            assert_eq!(GeneratorSpec::from_toml(&text).unwrap(), s);
        }
    }

    #[test]
    fn rejects_bad_shape() {
        let mut s = GeneratorSpec::setting_one(CensoringScenario::Independent);
        s.hazard01.weibull.shape = 0.0;
        assert!(s.validate().is_err());
    }
}
