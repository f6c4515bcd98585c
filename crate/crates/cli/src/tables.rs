//! Delimited output tables and the reporting layer.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use scrcea_core::estimands::{IcerFlag, IcerRow};
use scrcea_core::{EstimandResult, Measure, MultiStateFit, Strategy, WeightSpec};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::CliError;

/// Marker for cells where the screening age is at or beyond the horizon.
pub const SAME_AS_NEVER: &str = "same_as_never";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub measure: String,
    pub s: Strategy,
    pub t0: f64,
    pub t: f64,
    pub component: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub note: Option<String>,
}

pub fn estimate_records(results: &[EstimandResult], components: bool) -> Vec<EstimateRecord> {
    let mut out = Vec::new();
    for r in results {
        // A screen exactly at the horizon is still counted.
        let counts_screens = matches!(
            r.measure,
            Measure::Screenings { .. } | Measure::Unified { w1: WeightSpec::ScreeningCount { .. }, .. }
        );
        let note = match r.strategy {
            Strategy::At(s) if s > r.window.t || (s == r.window.t && !counts_screens) => Some(SAME_AS_NEVER.to_string()),
            _ => None,
        };
        for row in r.rows() {
            if !components && row.component != "total" {
                continue;
            }
            out.push(EstimateRecord {
                measure: row.measure,
                s: r.strategy,
                t0: row.t0,
                t: row.t,
                component: row.component,
                estimate: row.estimate,
                se: row.se,
                ci_lo: row.ci_lo,
                ci_hi: row.ci_hi,
                note: note.clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcerRecord {
    pub t0: f64,
    pub t: f64,
    pub s: Strategy,
    pub delta_cost: f64,
    pub delta_effect: f64,
    pub delta_cost_per_1000: f64,
    pub delta_effect_per_1000: f64,
    pub icer: Option<f64>,
    pub flag: Option<String>,
}

impl IcerRecord {
    pub fn new(row: &IcerRow, t0: f64, t: f64) -> Self {
        IcerRecord {
            t0,
            t,
            s: row.strategy,
            delta_cost: row.delta_cost,
            delta_effect: row.delta_effect,
            delta_cost_per_1000: row.delta_cost_per_1000,
            delta_effect_per_1000: row.delta_effect_per_1000,
            icer: row.icer,
            flag: row.flag.map(|f| match f {
                IcerFlag::NoGain => "no_qaly_gain".to_string(),
            }),
        }
    }
}

pub fn write_records<W: Write, T: Serialize>(w: W, delimiter: u8, rows: &[T]) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: Read, T: for<'de> Deserialize<'de>>(r: R, delimiter: u8) -> Result<Vec<T>, CliError> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_reader(r)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Data(e.to_string()))
}

/// Coefficient table: hazard ratios with Wald 95% intervals and two-sided
/// p-values from the fitted covariance.
pub fn coefficient_table(fit: &MultiStateFit, delimiter: char) -> String {
    let d = delimiter;
    let mut out = format!("transition{d}covariate{d}coef{d}se{d}hr{d}hr_lo{d}hr_hi{d}p_value{d}n_events\n");
    for f in [&fit.fit01, &fit.fit02, &fit.fit13] {
        for ((name, &b), se) in f.names.iter().zip(&f.coefficients).zip(f.std_errors()) {
            let p = erfc((b / se).abs() / std::f64::consts::SQRT_2);
            out.push_str(&format!(
                "{}{d}{name}{d}{b:.6}{d}{se:.6}{d}{:.4}{d}{:.4}{d}{:.4}{d}{}{d}{}\n",
                f.transition.label(),
                b.exp(),
                (b - 1.96 * se).exp(),
                (b + 1.96 * se).exp(),
                format_p(p),
                f.n_events
            ));
        }
    }
    out
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Per1000Record {
    pub measure: String,
    pub s: Strategy,
    pub t0: f64,
    pub t: f64,
    pub component: String,
    pub estimate: f64,
    pub never: f64,
    pub difference: f64,
    pub difference_per_1000: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub t: f64,
    pub s: Strategy,
    pub qaly_gain_per_1000: f64,
    pub screenings_per_1000: f64,
    pub icer: Option<f64>,
}

fn unit(measure: &str) -> &'static str {
    match measure {
        "qaly" | "qaly_lost_disease" => "QALYs",
        "n_screenings" => "screenings",
        _ => "years",
    }
}

type CellKey = (String, String, u64, u64);

fn key(r: &EstimateRecord) -> CellKey {
    (r.measure.clone(), r.component.clone(), r.t0.to_bits(), r.t.to_bits())
}

/// Differences from the never-screen row of the same measure, component and
/// window, scaled per 1000 individuals. Cells without a never-screen
/// baseline are skipped.
pub fn per_1000(rows: &[EstimateRecord]) -> Vec<Per1000Record> {
    let never: BTreeMap<CellKey, f64> = rows
        .iter()
        .filter(|r| r.s == Strategy::Never)
        .map(|r| (key(r), r.estimate))
        .collect();
    rows.iter()
        .filter(|r| r.s != Strategy::Never)
        .filter_map(|r| {
            let base = *never.get(&key(r))?;
            let difference = r.estimate - base;
            Some(Per1000Record {
                measure: r.measure.clone(),
                s: r.s,
                t0: r.t0,
                t: r.t,
                component: r.component.clone(),
                estimate: r.estimate,
                never: base,
                difference,
                difference_per_1000: 1000.0 * difference,
                note: r.note.clone(),
            })
        })
        .collect()
}

pub fn summary_lines(rows: &[Per1000Record]) -> String {
    let mut out = String::new();
    for r in rows.iter().filter(|r| r.component == "total") {
        out.push_str(&format!(
            "{} at s = {} over [{}, {}]: {:+.0} {} per 1000 individuals vs no screening{}\n",
            r.measure,
            r.s,
            r.t0,
            r.t,
            r.difference_per_1000,
            unit(&r.measure),
            if r.note.is_some() { " (same as no screening)" } else { "" }
        ));
    }
    out
}

/// QALY gain and screenings per 1000 against the never-screen strategy, one
/// row per (t, s), with the ICER taken from the ICER table.
pub fn plot_rows(per1000: &[Per1000Record], estimates: &[EstimateRecord], icers: &[IcerRecord]) -> Vec<PlotRecord> {
    let mut out = Vec::new();
    for q in per1000.iter().filter(|r| r.measure == "qaly" && r.component == "total") {
        let screens = estimates
            .iter()
            .find(|e| e.measure == "n_screenings" && e.component == "total" && e.s == q.s && e.t == q.t && e.t0 == q.t0);
        let Some(screens) = screens else { continue };
        let icer = icers
            .iter()
            .find(|i| i.s == q.s && i.t == q.t && i.t0 == q.t0)
            .and_then(|i| i.icer);
        out.push(PlotRecord {
            t: q.t,
            s: q.s,
            qaly_gain_per_1000: q.difference_per_1000,
            screenings_per_1000: 1000.0 * screens.estimate,
            icer,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(measure: &str, s: Strategy, t: f64, estimate: f64) -> EstimateRecord {
        EstimateRecord {
            measure: measure.into(),
            s,
            t0: 40.0,
            t,
            component: "total".into(),
            estimate,
            se: None,
            ci_lo: None,
            ci_hi: None,
            note: None,
        }
    }

    #[test]
    fn per_1000_differences_against_never() {
        let rows = vec![
            rec("rmst", Strategy::Never, 70.0, 16.0),
            rec("rmst", Strategy::At(50.0), 70.0, 16.143),
            rec("rmst", Strategy::At(50.0), 60.0, 12.0),
        ];
        let p = per_1000(&rows);
        assert_eq!(p.len(), 1);
        assert!((p[0].difference_per_1000 - 143.0).abs() < 1e-9);
        let text = summary_lines(&p);
        assert!(text.contains("+143 years per 1000 individuals"), "{text}");
    }

    #[test]
    fn records_round_trip() {
        let mut rows = vec![rec("qaly", Strategy::At(62.5), 70.0, 1.0 / 3.0)];
        rows[0].se = Some(0.1);
        rows[0].note = Some(SAME_AS_NEVER.into());
        let mut buf = Vec::new();
        write_records(&mut buf, b'\t', &rows).unwrap();
        let back: Vec<EstimateRecord> = read_records(buf.as_slice(), b'\t').unwrap();
        assert_eq!(back, rows);
    }
}
