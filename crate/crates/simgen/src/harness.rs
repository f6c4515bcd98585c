//! Replication harness: generate, fit, estimate and bootstrap `R` cohorts and
//! summarize the estimates against the truth.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use scrcea_core::inference::interval;
use scrcea_core::util::{order_invariant_mean, sample_sd};
use scrcea_core::{
    bootstrap_with_indices, resample_indices, BootstrapPlan, EstimandRequest, EstimandResult, EvalMethod, Measure,
    SolverOptions, Strategy, Window,
};
use serde::{Deserialize, Serialize};

use crate::comparator::{fit_overall_mortality, overall_rmst};
use crate::error::SimError;
use crate::generate::generate;
use crate::spec::GeneratorSpec;
use crate::truth::{truth, TruthOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessPlan {
    pub replicates: usize,
    pub seed: u64,
    /// `b`, `ci_method` and `workers` apply per replicate; the bootstrap seed
    /// is derived from `seed` and the replicate index.
    pub bootstrap: BootstrapPlan,
    /// Also run the overall-mortality comparator for every RMST request.
    pub comparator: bool,
    /// Threads across replicates; 0 uses all cores.
    pub workers: usize,
    pub solver: SolverOptions,
    pub truth: TruthOptions,
}

impl Default for HarnessPlan {
    fn default() -> Self {
        HarnessPlan {
            replicates: 100,
            seed: 1,
            bootstrap: BootstrapPlan {
                workers: 1,
                ..BootstrapPlan::default()
            },
            comparator: true,
            workers: 0,
            solver: SolverOptions::default(),
            truth: TruthOptions::default(),
        }
    }
}

/// Data and bootstrap seeds of replicate `r`.
pub fn replicate_seeds(seed: u64, r: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    (rng.next_u64(), rng.next_u64())
}

pub const MULTI_STATE: &str = "multi_state";
pub const OVERALL_MORTALITY: &str = "overall_mortality";

/// Identity of one summarized quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotKey {
    pub estimator: String,
    pub measure: String,
    pub strategy: Strategy,
    pub window: Window,
    pub component: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotValue {
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl SlotValue {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub data_seed: u64,
    /// One value per slot; `None` when the replicate failed.
    pub values: Option<Vec<SlotValue>>,
    pub error: Option<String>,
    pub bootstrap_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessRow {
    pub key: SlotKey,
    pub truth: f64,
    pub mean: f64,
    pub esd: f64,
    pub mean_se: f64,
    pub cp: f64,
    pub bias: f64,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub rows: Vec<HarnessRow>,
    pub replicates: Vec<ReplicateRecord>,
    pub failed: usize,
}

fn comparator_targets(requests: &[EstimandRequest]) -> Vec<(Strategy, Window)> {
    let mut out: Vec<(Strategy, Window)> = Vec::new();
    for r in requests.iter().filter(|r| r.measure == Measure::Rmst) {
        if !out.contains(&(r.strategy, r.window)) {
            out.push((r.strategy, r.window));
        }
    }
    out
}

fn layout(truths: &[EstimandResult], comparator: &[(Strategy, Window)]) -> (Vec<SlotKey>, Vec<f64>) {
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for t in truths {
        for row in t.rows() {
            keys.push(SlotKey {
                estimator: MULTI_STATE.into(),
                measure: row.measure,
                strategy: t.strategy,
                window: t.window,
                component: row.component,
            });
            values.push(row.estimate);
        }
    }
    for &(strategy, window) in comparator {
        let t = truths
            .iter()
            .find(|t| t.measure == Measure::Rmst && t.strategy == strategy && t.window == window)
            .expect("comparator target comes from an RMST request");
        keys.push(SlotKey {
            estimator: OVERALL_MORTALITY.into(),
            measure: Measure::Rmst.label().into(),
            strategy,
            window,
            component: "total".into(),
        });
        values.push(t.estimate);
    }
    (keys, values)
}

fn run_replicate(
    spec: &GeneratorSpec,
    requests: &[EstimandRequest],
    comparator: &[(Strategy, Window)],
    plan: &HarnessPlan,
    width: usize,
    r: usize,
) -> ReplicateRecord {
    let (data_seed, boot_seed) = replicate_seeds(plan.seed, r);
    let mut record = ReplicateRecord {
        index: r,
        data_seed,
        values: None,
        error: None,
        bootstrap_failures: 0,
    };
    let result = (|| -> Result<(Vec<SlotValue>, usize), SimError> {
        let cohort = generate(spec, data_seed)?;
        let sets: Vec<Vec<usize>> = (0..plan.bootstrap.b as u64)
            .map(|k| resample_indices(cohort.len(), boot_seed, k))
            .collect();
        let out = bootstrap_with_indices(&cohort, requests, &sets, &plan.bootstrap, &plan.solver, EvalMethod::Auto)?;
        let mut values = Vec::with_capacity(width);
        for res in &out.results {
            for row in res.rows() {
                let (lo, hi) = (row.ci_lo.unwrap_or(f64::NAN), row.ci_hi.unwrap_or(f64::NAN));
                values.push(SlotValue {
                    estimate: row.estimate,
                    se: row.se.unwrap_or(f64::NAN),
                    ci_lo: lo,
                    ci_hi: hi,
                });
            }
        }
        if !comparator.is_empty() {
            let fit = fit_overall_mortality(&cohort, &plan.solver)?;
            let point: Vec<f64> = comparator.iter().map(|&(s, w)| overall_rmst(&fit, &cohort, s, w, EvalMethod::Auto)).collect();
            let reps: Vec<Vec<f64>> = sets
                .iter()
                .filter_map(|idx| {
                    let sample = cohort.resample(idx);
                    let fit = fit_overall_mortality(&sample, &plan.solver).ok()?;
                    Some(comparator.iter().map(|&(s, w)| overall_rmst(&fit, &sample, s, w, EvalMethod::Auto)).collect())
                })
                .collect();
            if reps.len() < 2 || (sets.len() - reps.len()) * 5 > sets.len() {
                return Err(SimError::InvalidRequest(format!(
                    "comparator bootstrap: {} of {} replicates failed",
                    sets.len() - reps.len(),
                    sets.len()
                )));
            }
            for (k, &est) in point.iter().enumerate() {
                let mut column: Vec<f64> = reps.iter().map(|v| v[k]).collect();
                let se = sample_sd(&column);
                column.sort_by(f64::total_cmp);
                let (lo, hi) = interval(plan.bootstrap.ci_method, est, se, &column);
                values.push(SlotValue {
                    estimate: est,
                    se,
                    ci_lo: lo,
                    ci_hi: hi,
                });
            }
        }
        if values.len() != width {
            return Err(SimError::InvalidRequest(format!(
                "estimate layout has {} values, truth layout {width}",
                values.len()
            )));
        }
        Ok((values, out.failed))
    })();
    match result {
        Ok((values, failed)) => {
            record.values = Some(values);
            record.bootstrap_failures = failed;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Runs `plan.replicates` replicates of `spec` and summarizes every
/// requested quantity (headline and components) against its truth.
pub fn run_harness(spec: &GeneratorSpec, requests: &[EstimandRequest], plan: &HarnessPlan) -> Result<HarnessReport, SimError> {
    if plan.replicates < 2 {
        return Err(SimError::InvalidRequest(format!("need at least two replicates, got {}", plan.replicates)));
    }
    if requests.is_empty() {
        return Err(SimError::InvalidRequest("no estimand requests".into()));
    }
    spec.validate()?;
    let truths = truth(spec, requests, &plan.truth)?;
    let comparator = if plan.comparator { comparator_targets(requests) } else { Vec::new() };
    let (keys, truth_values) = layout(&truths, &comparator);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| SimError::InvalidRequest(format!("thread pool: {e}")))?;
    let replicates: Vec<ReplicateRecord> = pool.install(|| {
        (0..plan.replicates)
            .into_par_iter()
            .map(|r| run_replicate(spec, requests, &comparator, plan, keys.len(), r))
            .collect()
    });

    let ok: Vec<&Vec<SlotValue>> = replicates.iter().filter_map(|r| r.values.as_ref()).collect();
    let failed = replicates.len() - ok.len();
    if ok.len() < 2 {
        let first = replicates.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(SimError::InvalidRequest(format!(
            "only {} of {} replicates succeeded; first failure: {first}",
            ok.len(),
            replicates.len()
        )));
    }
    let rows = keys
        .into_iter()
        .zip(truth_values)
        .enumerate()
        .map(|(k, (key, truth))| {
            let mut est: Vec<f64> = ok.iter().map(|v| v[k].estimate).collect();
            let esd = sample_sd(&est);
            let mean = order_invariant_mean(&mut est);
            let mut ses: Vec<f64> = ok.iter().map(|v| v[k].se).collect();
            let mean_se = order_invariant_mean(&mut ses);
            let cp = ok.iter().filter(|v| v[k].covers(truth)).count() as f64 / ok.len() as f64;
            HarnessRow {
                key,
                truth,
                mean,
                esd,
                mean_se,
                cp,
                bias: mean - truth,
                n_ok: ok.len(),
            }
        })
        .collect();
    Ok(HarnessReport { rows, replicates, failed })
}

fn fmt_window(w: &Window) -> String {
    format!("{}-{}", w.t0, w.t)
}

impl HarnessReport {
    pub fn find(&self, estimator: &str, measure: &str, strategy: Strategy, component: &str) -> Option<&HarnessRow> {
        self.rows.iter().find(|r| {
            r.key.estimator == estimator
                && r.key.measure == measure
                && r.key.strategy == strategy
                && r.key.component == component
        })
    }

    fn position(&self, row: &HarnessRow) -> usize {
        self.rows.iter().position(|r| r.key == row.key).expect("row belongs to report")
    }

    /// Per successful replicate, the values of row `a` and row `b`.
    pub fn paired(&self, a: &HarnessRow, b: &HarnessRow) -> Vec<(SlotValue, SlotValue)> {
        let (i, j) = (self.position(a), self.position(b));
        self.replicates
            .iter()
            .filter_map(|r| r.values.as_ref().map(|v| (v[i], v[j])))
            .collect()
    }

    /// One line per summarized quantity.
    pub fn to_long(&self, delim: char) -> String {
        let mut out = String::new();
        let head = ["estimator", "measure", "s", "window", "component", "truth", "mean", "esd", "se", "cp", "bias", "n_ok"];
        out.push_str(&head.join(&delim.to_string()));
        out.push('\n');
        for r in &self.rows {
            let cells = [
                r.key.estimator.clone(),
                r.key.measure.clone(),
                r.key.strategy.to_string(),
                fmt_window(&r.key.window),
                r.key.component.clone(),
                format!("{:.3}", r.truth),
                format!("{:.3}", r.mean),
                format!("{:.3}", r.esd),
                format!("{:.3}", r.mean_se),
                format!("{:.3}", r.cp),
                format!("{:.3}", r.bias),
                r.n_ok.to_string(),
            ];
            out.push_str(&cells.join(&delim.to_string()));
            out.push('\n');
        }
        out
    }

    /// Wide layout: one column per quantity, rows True, Mean, ESD, SE, CP.
    pub fn to_table(&self, delim: char) -> String {
        let d = delim.to_string();
        let mut out = String::new();
        let headers: Vec<String> = self
            .rows
            .iter()
            .map(|r| format!("{}:{}:{}:{}", r.key.estimator, r.key.measure, r.key.component, r.key.strategy))
            .collect();
        let _ = writeln!(out, "{d}{}", headers.join(&d));
        let lines: [(&str, fn(&HarnessRow) -> f64); 5] = [
            ("True", |r| r.truth),
            ("Mean", |r| r.mean),
            ("ESD", |r| r.esd),
            ("SE", |r| r.mean_se),
            ("CP", |r| r.cp),
        ];
        for (name, get) in lines {
            let cells: Vec<String> = self.rows.iter().map(|r| format!("{:.3}", get(r))).collect();
            let _ = writeln!(out, "{name}{d}{}", cells.join(&d));
        }
        out
    }
}
