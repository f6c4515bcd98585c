use serde::{Deserialize, Serialize};

use crate::error::EstimandError;
use crate::multistate::Strategy;

use super::EstimandResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcerFlag {
    /// No effectiveness gain over the baseline strategy.
    NoGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcerRow {
    pub strategy: Strategy,
    pub delta_cost: f64,
    pub delta_effect: f64,
    pub delta_cost_per_1000: f64,
    pub delta_effect_per_1000: f64,
    /// `None` when flagged.
    pub icer: Option<f64>,
    pub flag: Option<IcerFlag>,
}

/// Incremental cost-effectiveness of each `(cost, effect)` pair against the
/// baseline pair. Entries with no effectiveness gain are flagged, not divided.
pub fn icer(
    pairs: &[(EstimandResult, EstimandResult)],
    baseline: &(EstimandResult, EstimandResult),
) -> Result<Vec<IcerRow>, EstimandError> {
    let (base_cost, base_eff) = baseline;
    pairs
        .iter()
        .map(|(cost, eff)| {
            for (r, b) in [(cost, base_cost), (eff, base_eff)] {
                if r.window != b.window {
                    return Err(EstimandError::MismatchedHorizon(r.window.t, b.window.t));
                }
                if r.measure != b.measure {
                    return Err(EstimandError::MismatchedMeasure(format!(
                        "{} vs {}",
                        r.measure.label(),
                        b.measure.label()
                    )));
                }
            }
            if cost.strategy != eff.strategy {
                return Err(EstimandError::MismatchedMeasure(format!(
                    "cost at s = {} paired with effect at s = {}",
                    cost.strategy, eff.strategy
                )));
            }
            let dc = cost.estimate - base_cost.estimate;
            let de = eff.estimate - base_eff.estimate;
            let (icer, flag) = if de > 0.0 {
                (Some(dc / de), None)
            } else {
                (None, Some(IcerFlag::NoGain))
            };
            Ok(IcerRow {
                strategy: cost.strategy,
                delta_cost: dc,
                delta_effect: de,
                delta_cost_per_1000: 1000.0 * dc,
                delta_effect_per_1000: 1000.0 * de,
                icer,
                flag,
            })
        })
        .collect()
}
