//! Per-path payoffs of the counterfactual measures and their decomposition
//! into named components, shared by the quadrature truth and the Monte Carlo
//! oracle.

use scrcea_core::{Measure, QualityProfile, Strategy, WeightSpec, Window};

use crate::error::SimError;
use crate::generate::Path;

fn overlap(lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    (hi.min(b) - lo.max(a)).max(0.0)
}

/// Quality-weighted time alive with disease inside `[lo, t]` for onset `v`
/// and death `d`.
pub fn quality_alive(p: &QualityProfile, v: f64, d: f64, lo: f64, t: f64) -> f64 {
    if d == f64::INFINITY {
        return p.a() * overlap(lo, t, v, v + 1.0) + p.b() * overlap(lo, t, v + 1.0, f64::INFINITY);
    }
    let dur = d - v;
    if dur > 2.0 {
        p.a() * overlap(lo, t, v, v + 1.0) + p.b() * overlap(lo, t, v + 1.0, d - 1.0) + p.c() * overlap(lo, t, d - 1.0, d)
    } else if dur > 1.0 {
        p.a() * overlap(lo, t, v, d - 1.0) + p.c() * overlap(lo, t, d - 1.0, d)
    } else {
        p.c() * overlap(lo, t, v, d)
    }
}

/// Quality-adjusted time lost after death with disease inside `[lo, t]`:
/// score `a` in the first year after onset, `b` afterwards.
pub fn quality_lost(p: &QualityProfile, v: f64, d: f64, lo: f64, t: f64) -> f64 {
    let from = lo.max(d);
    p.a() * overlap(from, t, v, v + 1.0) + p.b() * overlap(from, t, v + 1.0, f64::INFINITY)
}

/// Payoff accrued in the disease state by a path with onset `v`.
#[derive(Debug, Clone, PartialEq)]
pub enum DiseasePayoff {
    Time,
    Lost,
    Quality(QualityProfile),
    QualityLost(QualityProfile),
    /// Screening epochs spent alive with disease.
    Count(Vec<f64>),
}

impl DiseasePayoff {
    /// Payoff over `[max(t0, v), t]` for onset `v <= t` and death `d`.
    pub fn value(&self, v: f64, d: f64, w: Window) -> f64 {
        let lo = w.t0.max(v);
        match self {
            DiseasePayoff::Time => (w.t.min(d) - lo).max(0.0),
            DiseasePayoff::Lost => (w.t - lo.max(d)).max(0.0),
            DiseasePayoff::Quality(p) => quality_alive(p, v, d, lo, w.t),
            DiseasePayoff::QualityLost(p) => quality_lost(p, v, d, lo, w.t),
            DiseasePayoff::Count(epochs) => epochs.iter().filter(|&&e| e >= lo && e <= w.t && e < d).count() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    /// Time alive and disease free inside the window.
    DiseaseFree,
    /// Time lost after death without disease.
    DeathWithoutDisease,
    /// Screening epochs at which the path is alive and disease free.
    HealthyCount(Vec<f64>),
    Disease(DiseasePayoff),
    Zero,
}

impl Quantity {
    pub fn path_value(&self, path: &Path, w: Window) -> f64 {
        let first = path.onset.unwrap_or(path.death);
        match self {
            Quantity::DiseaseFree => overlap(w.t0, w.t, 0.0, first),
            Quantity::DeathWithoutDisease => match path.onset {
                None => (w.t - w.t0.max(path.death)).max(0.0),
                Some(_) => 0.0,
            },
            Quantity::HealthyCount(epochs) => epochs.iter().filter(|&&e| e < first).count() as f64,
            Quantity::Disease(p) => match path.onset {
                Some(v) if v <= w.t => p.value(v, path.death, w),
                _ => 0.0,
            },
            Quantity::Zero => 0.0,
        }
    }
}

/// Epochs `start + k * interval` inside `[t0, t]`.
pub fn epochs(start: f64, interval: f64, w: Window) -> Vec<f64> {
    let mut out = Vec::new();
    if !start.is_finite() {
        return out;
    }
    let mut k = 0u32;
    loop {
        let e = start + f64::from(k) * interval;
        if e > w.t {
            break;
        }
        if e >= w.t0 {
            out.push(e);
        }
        k += 1;
    }
    out
}

fn count_weight(interval: f64, start: Option<f64>, s: Strategy, w: Window) -> Result<Vec<f64>, SimError> {
    if !(interval > 0.0) {
        return Err(SimError::InvalidRequest(format!("screening interval must be positive, got {interval}")));
    }
    Ok(epochs(start.unwrap_or(s.age()), interval, w))
}

/// Named components of a measure; the headline value is their sum.
pub fn components(m: &Measure, s: Strategy, w: Window) -> Result<Vec<(&'static str, Quantity)>, SimError> {
    use DiseasePayoff as D;
    Ok(match *m {
        Measure::Rmst => vec![
            ("disease_free", Quantity::DiseaseFree),
            ("disease_state", Quantity::Disease(D::Time)),
        ],
        Measure::LifeYearsLost => vec![
            ("death_without_disease", Quantity::DeathWithoutDisease),
            ("death_after_disease", Quantity::Disease(D::Lost)),
        ],
        Measure::Qaly { profile } => vec![
            ("disease_free", Quantity::DiseaseFree),
            ("disease_state", Quantity::Disease(D::Quality(profile))),
        ],
        Measure::QalyLostDisease { profile } => {
            vec![("qaly_lost_disease", Quantity::Disease(D::QualityLost(profile)))]
        }
        Measure::Screenings { interval } => {
            vec![("screenings", Quantity::HealthyCount(count_weight(interval, None, s, w)?))]
        }
        Measure::Unified { w1, w2 } => {
            let q1 = match w1 {
                WeightSpec::Identity | WeightSpec::Quality { .. } => Quantity::DiseaseFree,
                WeightSpec::Zero => Quantity::Zero,
                WeightSpec::ScreeningCount { interval, start } => {
                    Quantity::HealthyCount(count_weight(interval, start, s, w)?)
                }
            };
            let q2 = match w2 {
                WeightSpec::Identity => Quantity::Disease(D::Time),
                WeightSpec::Quality { profile } => Quantity::Disease(D::Quality(profile)),
                WeightSpec::Zero => Quantity::Zero,
                WeightSpec::ScreeningCount { interval, start } => {
                    Quantity::Disease(D::Count(count_weight(interval, start, s, w)?))
                }
            };
            vec![("state1", q1), ("state2", q2)]
        }
    })
}
