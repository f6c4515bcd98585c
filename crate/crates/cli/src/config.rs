//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use scrcea_core::{
    BootstrapPlan, CiMethod, EstimandRequest, EvalMethod, Measure, QualityProfile, SolverOptions, Strategy, Window,
};
use scrcea_sim::harness::HarnessPlan;
use scrcea_sim::{CensoringScenario, GeneratorSpec, TruthOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureName {
    Rmst,
    LifeYearsLost,
    Qaly,
    QalyLostDisease,
    NScreenings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    SettingOneIndependent,
    SettingOneConditional,
    SettingTwo,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub preset: Option<Preset>,
    /// Full generator specification in TOML.
    pub spec: Option<PathBuf>,
    /// Overrides the cohort size of the preset or file.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    /// Number of replicates; 0 disables the bootstrap.
    pub b: usize,
    pub ci_method: CiMethod,
    pub workers: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: 0,
            ci_method: CiMethod::Normal,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cohort: Option<PathBuf>,
    /// Previously saved fit; refitted from `cohort` when absent.
    pub fit: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Lower end of the integration window. The cohort's minimum entry age
    /// is used when it is larger or when this is unset.
    pub t0: Option<f64>,
    pub horizons: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub measures: Vec<MeasureName>,
    pub screening_interval: Option<f64>,
    pub quality: Option<QualityProfile>,
    /// Emit component rows in addition to the headline row.
    pub components: bool,
    pub seed: u64,
    pub delimiter: char,
    pub method: EvalMethod,
    pub solver: SolverOptions,
    pub bootstrap: BootstrapConfig,
    pub generator: GeneratorConfig,
    pub harness: HarnessPlan,
    pub truth: TruthOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cohort: None,
            fit: None,
            output_dir: PathBuf::from("out"),
            t0: None,
            horizons: Vec::new(),
            strategies: Vec::new(),
            measures: Vec::new(),
            screening_interval: None,
            quality: None,
            components: true,
            seed: 1,
            delimiter: ',',
            method: EvalMethod::Auto,
            solver: SolverOptions::default(),
            bootstrap: BootstrapConfig::default(),
            generator: GeneratorConfig::default(),
            harness: HarnessPlan::default(),
            truth: TruthOptions::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
    pub ci_method: Option<CiMethod>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub cohort: Option<PathBuf>,
    pub fit: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<RunConfig, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let mut cfg: RunConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                cfg.resolve_paths(p.parent().unwrap_or(Path::new("")));
                cfg
            }
            None => RunConfig::default(),
        };
        cfg.apply(o);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.cohort, &mut self.fit, &mut self.generator.spec].into_iter().flatten() {
            join(p);
        }
        join(&mut self.output_dir);
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(b) = o.bootstrap {
            self.bootstrap.b = b;
            self.harness.bootstrap.b = b;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        self.harness.seed = self.seed;
        if let Some(m) = o.ci_method {
            self.bootstrap.ci_method = m;
            self.harness.bootstrap.ci_method = m;
        }
        if let Some(w) = o.workers {
            self.bootstrap.workers = w;
            self.harness.workers = w;
        }
        self.harness.solver = self.solver;
        self.harness.truth = self.truth;
        for (slot, value) in [(&mut self.cohort, &o.cohort), (&mut self.fit, &o.fit)] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        if let Some(d) = &o.output_dir {
            self.output_dir.clone_from(d);
        }
    }

    pub fn delimiter_byte(&self) -> Result<u8, CliError> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| CliError::Config(format!("delimiter `{}` must be a single ASCII character", self.delimiter)))
    }

    pub fn bootstrap_plan(&self) -> Option<BootstrapPlan> {
        (self.bootstrap.b > 0).then_some(BootstrapPlan {
            b: self.bootstrap.b,
            seed: self.seed,
            ci_method: self.bootstrap.ci_method,
            workers: self.bootstrap.workers,
        })
    }

    pub fn generator_spec(&self) -> Result<GeneratorSpec, CliError> {
        let g = &self.generator;
        let mut spec = match (g.preset, &g.spec) {
            (Some(_), Some(_)) => return Err(CliError::Config("generator: give either `preset` or `spec`, not both".into())),
            (None, None) => return Err(CliError::Config("generator: `preset` or `spec` is required".into())),
            (Some(Preset::SettingOneIndependent), None) => GeneratorSpec::setting_one(CensoringScenario::Independent),
            (Some(Preset::SettingOneConditional), None) => GeneratorSpec::setting_one(CensoringScenario::Conditional),
            (Some(Preset::SettingTwo), None) => GeneratorSpec::setting_two(),
            (None, Some(p)) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                GeneratorSpec::from_toml(&text)?
            }
        };
        if let Some(n) = g.n {
            spec.n = n;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Requests for every (measure, strategy, horizon), horizons outermost.
    pub fn requests(&self, t0: f64) -> Result<Vec<EstimandRequest>, CliError> {
        if self.horizons.is_empty() || self.strategies.is_empty() || self.measures.is_empty() {
            return Err(CliError::Config("`horizons`, `strategies` and `measures` must be nonempty".into()));
        }
        let mut out = Vec::new();
        for &t in &self.horizons {
            if !(t > t0) {
                return Err(CliError::Config(format!("horizon {t} must exceed t0 = {t0}")));
            }
            let window = Window::new(t0, t)?;
            for &name in &self.measures {
                let measure = self.measure(name)?;
                for &strategy in &self.strategies {
                    out.push(EstimandRequest { measure, strategy, window });
                }
            }
        }
        Ok(out)
    }

    fn measure(&self, name: MeasureName) -> Result<Measure, CliError> {
        let profile = || {
            self.quality
                .ok_or_else(|| CliError::Config("a `[quality]` profile (a, b, c) is required for QALY measures".into()))
        };
        Ok(match name {
            MeasureName::Rmst => Measure::Rmst,
            MeasureName::LifeYearsLost => Measure::LifeYearsLost,
            MeasureName::Qaly => Measure::Qaly { profile: profile()? },
            MeasureName::QalyLostDisease => Measure::QalyLostDisease { profile: profile()? },
            MeasureName::NScreenings => match self.screening_interval {
                Some(i) if i > 0.0 => Measure::Screenings { interval: i },
                Some(i) => return Err(CliError::Config(format!("screening_interval must be positive, got {i}"))),
                None => return Err(CliError::Config("`screening_interval` is required for n_screenings".into())),
            },
        })
    }

    /// Window start: the configured `t0`, raised to the minimum entry age.
    pub fn window_start(&self, min_entry: Option<f64>) -> Result<f64, CliError> {
        match (self.t0, min_entry) {
            (Some(t0), Some(m)) => Ok(t0.max(m)),
            (Some(t0), None) => Ok(t0),
            (None, Some(m)) => Ok(m),
            (None, None) => Err(CliError::Config("`t0` is required when no cohort is given".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"
            cohort = "data/cohort.csv"
            output_dir = "results"
            t0 = 40
            horizons = [60, 70]
            strategies = ["never", "50", "62.5"]
            measures = ["rmst", "qaly", "n_screenings"]
            screening_interval = 2
            seed = 9
            [quality]
            a = 0.8
            b = 0.9
            c = 0.5
            [bootstrap]
            b = 20
            ci_method = "percentile"
            [generator]
            preset = "setting_two"
            n = 500
            [harness]
            replicates = 10
        "#;
        let mut cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.resolve_paths(Path::new("/base"));
        cfg.apply(&Overrides { seed: Some(4), workers: Some(2), ..Overrides::default() });
        assert_eq!(cfg.cohort.as_deref(), Some(Path::new("/base/data/cohort.csv")));
        assert_eq!(cfg.strategies[2], Strategy::At(62.5));
        assert_eq!((cfg.seed, cfg.harness.seed, cfg.harness.replicates), (4, 4, 10));
        let plan = cfg.bootstrap_plan().unwrap();
        assert_eq!((plan.b, plan.seed, plan.workers, plan.ci_method), (20, 4, 2, CiMethod::Percentile));
        assert_eq!(cfg.generator_spec().unwrap().n, 500);
        let reqs = cfg.requests(cfg.window_start(Some(45.0)).unwrap()).unwrap();
        assert_eq!(reqs.len(), 2 * 3 * 3);
        assert_eq!(reqs[0].window.t0, 45.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(toml::from_str::<RunConfig>("horizon = [70]").is_err());
        let cfg: RunConfig = toml::from_str("horizons = [70]\nstrategies = [\"never\"]\nmeasures = [\"qaly\"]").unwrap();
        assert!(matches!(cfg.requests(40.0), Err(CliError::Config(_))));
        let cfg: RunConfig = toml::from_str("horizons = [40]\nstrategies = [\"never\"]\nmeasures = [\"rmst\"]").unwrap();
        assert!(cfg.requests(40.0).is_err());
        assert!(cfg.window_start(None).is_err());
        assert!(toml::from_str::<RunConfig>("strategies = [\"sometimes\"]").is_err());
        assert!(RunConfig::default().generator_spec().is_err());
    }
}
