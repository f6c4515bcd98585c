//! Right-continuous nondecreasing jump functions.
//!
//! Cumulative baseline hazards and cumulative incidence functions are all
//! represented as a sorted list of jump locations with nonnegative jump sizes.

use serde::{Deserialize, Serialize};

use crate::error::StepError;
use crate::util::NeumaierSum;

/// A nondecreasing right-continuous step function starting at zero.
///
/// `value(t)` is the sum of all increments located at times `<= t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunctionRepr", into = "StepFunctionRepr")]
pub struct StepFunction {
    times: Vec<f64>,
    increments: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepFunctionRepr {
    times: Vec<f64>,
    increments: Vec<f64>,
}

impl TryFrom<StepFunctionRepr> for StepFunction {
    type Error = StepError;

    fn try_from(repr: StepFunctionRepr) -> Result<Self, Self::Error> {
        StepFunction::new(repr.times, repr.increments)
    }
}

impl From<StepFunction> for StepFunctionRepr {
    fn from(f: StepFunction) -> Self {
        StepFunctionRepr {
            times: f.times,
            increments: f.increments,
        }
    }
}

impl Default for StepFunction {
    fn default() -> Self {
        Self::zero()
    }
}

impl StepFunction {
    pub fn new(times: Vec<f64>, increments: Vec<f64>) -> Result<Self, StepError> {
        if times.len() != increments.len() {
            return Err(StepError::LengthMismatch {
                times: times.len(),
                increments: increments.len(),
            });
        }
        for (i, (&t, &d)) in times.iter().zip(&increments).enumerate() {
            if !t.is_finite() || !d.is_finite() {
                return Err(StepError::NonFinite { index: i });
            }
            if d < 0.0 {
                return Err(StepError::NegativeIncrement { index: i, value: d });
            }
            if i > 0 && times[i - 1] >= t {
                return Err(StepError::NotIncreasing { index: i });
            }
        }
        let mut acc = 0.0;
        let cumulative = increments
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        Ok(StepFunction {
            times,
            increments,
            cumulative,
        })
    }

    pub fn zero() -> Self {
        StepFunction {
            times: Vec::new(),
            increments: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Running totals after each jump.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of jumps located at times `<= t`.
    pub fn count_le(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }

    /// Number of jumps located at times `< t`.
    pub fn count_lt(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.count_le(t) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    /// Left limit `f(t-)`.
    pub fn value_left(&self, t: f64) -> f64 {
        match self.count_lt(t) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.increments.iter().copied())
    }

    /// Drops all jumps after `t`.
    pub fn truncated(&self, t: f64) -> StepFunction {
        let k = self.count_le(t);
        StepFunction {
            times: self.times[..k].to_vec(),
            increments: self.increments[..k].to_vec(),
            cumulative: self.cumulative[..k].to_vec(),
        }
    }
}

/// Riemann–Stieltjes sum `sum g(t_j) * df(t_j)` over jumps `t_j` in `(a, b]`.
pub fn step_integral<G>(f: &StepFunction, g: G, a: f64, b: f64) -> f64
where
    G: Fn(f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let lo = f.count_le(a);
    let hi = f.count_le(b);
    let mut sum = NeumaierSum::default();
    for j in lo..hi {
        sum.add(g(f.times[j]) * f.increments[j]);
    }
    sum.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_jumps() -> StepFunction {
        StepFunction::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn total_mass() {
        assert_eq!(step_integral(&two_jumps(), |_| 1.0, 0.0, 3.0), 1.0);
    }

    #[test]
    fn weighted_sum() {
        assert_eq!(step_integral(&two_jumps(), |t| t, 0.0, 3.0), 1.5);
    }

    #[test]
    fn half_open_interval() {
        let f = two_jumps();
        assert_eq!(step_integral(&f, |_| 1.0, 1.0, 2.0), 0.5);
        assert_eq!(step_integral(&f, |_| 1.0, 0.0, 1.0), 0.5);
        assert_eq!(step_integral(&f, |_| 1.0, 2.0, 2.0), 0.0);
    }

    #[test]
    fn right_continuous_evaluation() {
        let f = two_jumps();
        assert_eq!(f.value(0.999), 0.0);
        assert_eq!(f.value(1.0), 0.5);
        assert_eq!(f.value_left(1.0), 0.0);
        assert_eq!(f.value(10.0), 1.0);
        assert_eq!(StepFunction::zero().value(5.0), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StepFunction::new(vec![1.0, 1.0], vec![0.1, 0.1]).is_err());
        assert!(StepFunction::new(vec![1.0], vec![-0.1]).is_err());
        assert!(StepFunction::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let f = two_jumps();
        let s = serde_json::to_string(&f).unwrap();
        let g: StepFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }
}
