use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use scrcea_core::estimands::icer;
use scrcea_core::{
    bootstrap, evaluate_requests, fit_illness_death, ingest_cohort, Cohort, CohortSchema, EstimandResult, Measure,
    MultiStateFit, Strategy,
};
use scrcea_sim::calibrate::{calibrate_weibulls, convention_report, CalibrationOptions};
use scrcea_sim::harness::run_harness;
use scrcea_sim::{generate, truth, GeneratorSpec};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::tables::{
    coefficient_table, estimate_records, per_1000, plot_rows, read_records, summary_lines, write_records,
    EstimateRecord, IcerRecord,
};

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::output(dir))
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, text).map_err(CliError::output(&path))?;
    Ok(path)
}

fn write_csv<T: serde::Serialize>(path: PathBuf, delimiter: u8, rows: &[T]) -> Result<PathBuf, CliError> {
    let f = File::create(&path).map_err(CliError::output(&path))?;
    write_records(BufWriter::new(f), delimiter, rows).map_err(|e| CliError::Output {
        path: path.clone(),
        source: std::io::Error::other(e),
    })?;
    Ok(path)
}

fn load_cohort(cfg: &RunConfig) -> Result<Cohort, CliError> {
    let path = cfg
        .cohort
        .as_ref()
        .ok_or_else(|| CliError::Config("a cohort file is required (`cohort` or --cohort)".into()))?;
    let schema = CohortSchema {
        delimiter: cfg.delimiter_byte()?,
        ..CohortSchema::default()
    };
    ingest_cohort(path, &schema).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_fit(path: &Path) -> Result<MultiStateFit, CliError> {
    let f = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    MultiStateFit::from_reader(BufReader::new(f)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn simulate(cfg: &RunConfig, out: Option<PathBuf>) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.generator_spec()?;
    let cohort = generate(&spec, cfg.seed)?;
    prepare_dir(&cfg.output_dir)?;
    let path = out.unwrap_or_else(|| cfg.output_dir.join("cohort.csv"));
    cohort
        .write_path(&path, cfg.delimiter_byte()?)
        .map_err(|e| CliError::Output { path: path.clone(), source: std::io::Error::other(e) })?;
    let spec_path = write_text(cfg.output_dir.join("generator.toml"), &spec.to_toml()?)?;
    let c = cohort.event_counts();
    eprintln!(
        "{} subjects: {} disease onsets, {} deaths without disease, {} deaths after disease",
        cohort.len(),
        c.disease,
        c.death_healthy,
        c.death_diseased
    );
    Ok(vec![path, spec_path])
}

pub fn fit(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let cohort = load_cohort(cfg)?;
    let fit = fit_illness_death(&cohort, &cfg.solver)?;
    prepare_dir(&cfg.output_dir)?;
    let fit_path = cfg.output_dir.join("fit.json");
    let f = File::create(&fit_path).map_err(CliError::output(&fit_path))?;
    let mut w = BufWriter::new(f);
    fit.to_writer(&mut w)
        .map_err(|e| CliError::Output { path: fit_path.clone(), source: e.into() })?;
    w.flush().map_err(CliError::output(&fit_path))?;
    let table = coefficient_table(&fit, cfg.delimiter);
    print!("{table}");
    let coef_path = write_text(cfg.output_dir.join("coefficients.csv"), &table)?;
    Ok(vec![fit_path, coef_path])
}

/// ICER rows against never-screening for every horizon where QALY and
/// screening counts were both requested.
fn icer_records(results: &[EstimandResult]) -> Result<Vec<IcerRecord>, CliError> {
    let mut out = Vec::new();
    let mut windows = Vec::new();
    for r in results {
        if !windows.contains(&r.window) {
            windows.push(r.window);
        }
    }
    for w in windows {
        let find = |qaly: bool, s: Strategy| {
            results.iter().find(|r| {
                r.window == w
                    && r.strategy == s
                    && if qaly {
                        matches!(r.measure, Measure::Qaly { .. })
                    } else {
                        matches!(r.measure, Measure::Screenings { .. })
                    }
            })
        };
        let (Some(base_cost), Some(base_eff)) = (find(false, Strategy::Never), find(true, Strategy::Never)) else {
            continue;
        };
        let pairs: Vec<(EstimandResult, EstimandResult)> = results
            .iter()
            .filter(|r| r.window == w && r.strategy != Strategy::Never && matches!(r.measure, Measure::Screenings { .. }))
            .filter_map(|c| find(true, c.strategy).map(|e| (c.clone(), e.clone())))
            .collect();
        let rows = icer(&pairs, &(base_cost.clone(), base_eff.clone()))?;
        out.extend(rows.iter().map(|r| IcerRecord::new(r, w.t0, w.t)));
    }
    Ok(out)
}

pub fn estimate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let cohort = load_cohort(cfg)?;
    let t0 = cfg.window_start(Some(cohort.min_entry_age()))?;
    let requests = cfg.requests(t0)?;
    let results = match cfg.bootstrap_plan() {
        Some(plan) => {
            if cfg.fit.is_some() {
                eprintln!("note: the bootstrap refits the cohort; the saved fit is not used");
            }
            let out = bootstrap(&cohort, &requests, &plan, &cfg.solver, cfg.method)?;
            eprintln!("bootstrap: {} replicates completed, {} failed", out.completed, out.failed);
            out.results
        }
        None => {
            let fit = match &cfg.fit {
                Some(p) => load_fit(p)?,
                None => fit_illness_death(&cohort, &cfg.solver)?,
            };
            evaluate_requests(&fit, &cohort, &requests, cfg.method)?
        }
    };
    prepare_dir(&cfg.output_dir)?;
    let delim = cfg.delimiter_byte()?;
    let mut paths = vec![write_csv(
        cfg.output_dir.join("estimates.csv"),
        delim,
        &estimate_records(&results, cfg.components),
    )?];
    let icers = icer_records(&results)?;
    if !icers.is_empty() {
        paths.push(write_csv(cfg.output_dir.join("icer.csv"), delim, &icers)?);
    }
    Ok(paths)
}

pub fn report(cfg: &RunConfig, estimates: &Path, icer_path: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let delim = cfg.delimiter_byte()?;
    let open = |p: &Path| File::open(p).map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())));
    let rows: Vec<EstimateRecord> = read_records(BufReader::new(open(estimates)?), delim)?;
    let icers: Vec<IcerRecord> = match icer_path {
        Some(p) => read_records(BufReader::new(open(p)?), delim)?,
        None => Vec::new(),
    };
    let diffs = per_1000(&rows);
    if diffs.is_empty() {
        return Err(CliError::Data("no rows can be compared with a never-screen row".into()));
    }
    prepare_dir(&cfg.output_dir)?;
    let summary = summary_lines(&diffs);
    print!("{summary}");
    let mut paths = vec![
        write_csv(cfg.output_dir.join("per1000.csv"), delim, &diffs)?,
        write_text(cfg.output_dir.join("summary.txt"), &summary)?,
    ];
    let plot = plot_rows(&diffs, &rows, &icers);
    if !plot.is_empty() {
        paths.push(write_csv(cfg.output_dir.join("plot.csv"), delim, &plot)?);
    }
    Ok(paths)
}

pub fn harness(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.generator_spec()?;
    let requests = cfg.requests(cfg.window_start(None)?)?;
    let report = run_harness(&spec, &requests, &cfg.harness)?;
    if report.failed > 0 {
        eprintln!("{} of {} replicates failed", report.failed, report.replicates.len());
    }
    prepare_dir(&cfg.output_dir)?;
    let table = report.to_table(cfg.delimiter);
    print!("{table}");
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Inference(e.to_string()))?;
    Ok(vec![
        write_text(cfg.output_dir.join("harness_long.csv"), &report.to_long(cfg.delimiter))?,
        write_text(cfg.output_dir.join("harness_table.txt"), &table)?,
        write_text(cfg.output_dir.join("harness.json"), &json)?,
    ])
}

pub fn truth_values(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.generator_spec()?;
    let requests = cfg.requests(cfg.window_start(None)?)?;
    let results = truth(&spec, &requests, &cfg.truth)?;
    prepare_dir(&cfg.output_dir)?;
    Ok(vec![write_csv(
        cfg.output_dir.join("truth.csv"),
        cfg.delimiter_byte()?,
        &estimate_records(&results, true),
    )?])
}

#[derive(serde::Serialize)]
struct ConventionLine {
    convention: String,
    center_t: f64,
    scenario: String,
    disease: f64,
    death_healthy: f64,
    death_diseased: f64,
    max_gap_points: f64,
}

pub fn conventions(cfg: &RunConfig, n: usize) -> Result<Vec<PathBuf>, CliError> {
    let rows = convention_report(n, cfg.seed, &[40.0, 50.0, 60.0])?;
    let lines: Vec<ConventionLine> = rows
        .iter()
        .map(|r| ConventionLine {
            convention: format!("{:?}", r.convention).to_lowercase(),
            center_t: r.center_t,
            scenario: format!("{:?}", r.scenario).to_lowercase(),
            disease: r.rates.disease,
            death_healthy: r.rates.death_healthy,
            death_diseased: r.rates.death_diseased,
            max_gap_points: r.max_gap_points,
        })
        .collect();
    prepare_dir(&cfg.output_dir)?;
    Ok(vec![write_csv(cfg.output_dir.join("conventions.csv"), cfg.delimiter_byte()?, &lines)?])
}

pub fn calibrate(cfg: &RunConfig, n: usize) -> Result<Vec<PathBuf>, CliError> {
    let opts = CalibrationOptions { n, seed: cfg.seed, ..CalibrationOptions::default() };
    let base = GeneratorSpec::setting_two();
    let out = calibrate_weibulls(&base, &opts)?;
    if !out.converged {
        eprintln!("warning: calibration stopped after {} evaluations without converging", out.evaluations);
    }
    let mut spec = base;
    spec.hazard01.weibull = out.hazard01;
    spec.hazard02.weibull = out.hazard02;
    prepare_dir(&cfg.output_dir)?;
    let json = serde_json::to_string_pretty(&out).map_err(|e| CliError::Inference(e.to_string()))?;
    Ok(vec![
        write_text(cfg.output_dir.join("calibration.json"), &json)?,
        write_text(cfg.output_dir.join("calibrated_generator.toml"), &spec.to_toml()?)?,
    ])
}
