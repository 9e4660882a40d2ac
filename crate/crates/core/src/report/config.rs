//! Run configuration files: sections `[model]`, `[study]`, `[smoothing]`
//! and `[algorithm1]`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::{Profile, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::{MethodKind, DEFAULT_M0};
use crate::exec::Execution;
use crate::model::{ModelSpec, Threshold};
use crate::smoothing::{SmoothingMode, SmoothingParams};

/// Default output directory when neither flag, environment nor config set one.
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub s0: f64,
    pub mu: f64,
    pub mu0: f64,
    pub strike: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub tau: f64,
    pub base_variance: f64,
    pub correlation: f64,
    /// Absolute loss threshold; overrides `threshold_fraction`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Threshold as a fraction of the initial portfolio value.
    pub threshold_fraction: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            s0: 100.0,
            mu: 0.08,
            mu0: 0.05,
            strike: 95.0,
            maturity: 0.1,
            tau: 0.02,
            base_variance: 0.3,
            correlation: 0.98,
            threshold: None,
            threshold_fraction: 0.3,
        }
    }
}

impl ModelConfig {
    pub fn build(&self, d: usize) -> Result<ModelSpec> {
        if !(self.tau < self.maturity) {
            return Err(Error::InvalidField { field: "tau".into(), constraint: "tau < T".into() });
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidField { field: "correlation".into(), constraint: "-1 <= correlation <= 1".into() });
        }
        let threshold = match self.threshold {
            Some(c) => Threshold::Absolute(c),
            None => Threshold::FractionOfV0(self.threshold_fraction),
        };
        ModelSpec::uniform(
            d,
            self.s0,
            self.mu,
            self.mu0,
            self.strike,
            self.maturity,
            self.tau,
            self.base_variance,
            self.correlation,
            threshold,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawStudy {
    methods: Option<Vec<String>>,
    dims: Option<Vec<usize>>,
    tol_list: Option<Vec<f64>>,
    profile: Option<Profile>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    replications: Option<usize>,
    rate_levels: Option<usize>,
    rate_samples: Option<u64>,
    parallel_cells: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSmoothing {
    mode: Option<SmoothingMode>,
    m_lag: Option<usize>,
    newton_tol: Option<f64>,
    max_iterations: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAlgorithm1 {
    omega: Option<f64>,
    l0: Option<usize>,
    n_star: Option<u64>,
    m0: Option<usize>,
    alpha: Option<f64>,
    max_level_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    model: ModelConfig,
    study: RawStudy,
    smoothing: RawSmoothing,
    algorithm1: RawAlgorithm1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Algorithm1Config {
    pub omega: f64,
    pub l0: usize,
    pub n_star: u64,
    pub m0: usize,
    pub alpha: f64,
    pub max_level_cap: usize,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// A fully resolved study: every default filled in and the model validated
/// for every requested dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub model: ModelConfig,
    pub methods: Vec<MethodKind>,
    pub dims: Vec<usize>,
    pub tol_list: Vec<f64>,
    pub profile: Profile,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Independent repetitions of each adaptive run in the cost study.
    pub replications: usize,
    /// Deepest level of the fixed-level rate runs (0 disables them).
    pub rate_levels: usize,
    pub rate_samples: u64,
    pub parallel_cells: bool,
    pub smoothing: SmoothingParams,
    pub algorithm1: Algorithm1Config,
}

pub struct ProfileDefaults {
    pub n_star: u64,
    pub max_level_cap: usize,
    pub rate_levels: usize,
    pub rate_samples: u64,
}

pub fn profile_defaults(profile: Profile) -> ProfileDefaults {
    match profile {
        Profile::Desk => ProfileDefaults { n_star: 20_000, max_level_cap: 7, rate_levels: 6, rate_samples: 100_000 },
        Profile::Paper => ProfileDefaults { n_star: 200_000, max_level_cap: 12, rate_levels: 8, rate_samples: 1_000_000 },
    }
}

impl StudySpec {
    pub fn model_for(&self, d: usize) -> Result<ModelSpec> {
        self.model.build(d)
    }

    pub fn run_config(&self, method: MethodKind, tol: f64) -> RunConfig {
        let a = &self.algorithm1;
        RunConfig {
            method,
            tol,
            omega_split: a.omega,
            l0: a.l0,
            n_star: a.n_star,
            m0: a.m0,
            alpha: a.alpha,
            seed: self.seed,
            max_level_cap: a.max_level_cap,
            smoothing: self.smoothing,
            execution: Execution::Parallel,
        }
    }
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<StudySpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<StudySpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    resolve(raw, overrides)
}

/// The configuration with every default, for `--help` and config echoes.
pub fn default_study(overrides: &Overrides) -> StudySpec {
    resolve(RawConfig::default(), overrides).expect("built-in defaults are valid")
}

fn dedupe_methods(names: &[String]) -> Result<Vec<MethodKind>> {
    let mut out: Vec<MethodKind> = Vec::new();
    for name in names {
        let m: MethodKind = name.parse()?;
        if out.contains(&m) {
            log::warn!("method `{name}` listed more than once; running it once");
        } else {
            out.push(m);
        }
    }
    Ok(out)
}

fn resolve(raw: RawConfig, ov: &Overrides) -> Result<StudySpec> {
    let bad = |field: &str, constraint: &str| Error::InvalidField { field: field.into(), constraint: constraint.into() };
    let profile = ov.profile.or(raw.study.profile).unwrap_or(Profile::Desk);
    let pd = profile_defaults(profile);
    let methods = match &raw.study.methods {
        Some(names) => dedupe_methods(names)?,
        None => vec![MethodKind::StdMLMC, MethodKind::SmoothedMLMC],
    };
    if methods.is_empty() {
        return Err(bad("methods", "at least one method"));
    }
    let dims = raw.study.dims.clone().unwrap_or_else(|| vec![4]);
    if dims.is_empty() || dims.contains(&0) {
        return Err(bad("dims", "non-empty, every d >= 1"));
    }
    let tol_list = raw.study.tol_list.clone().unwrap_or_else(|| vec![2e-2, 1e-2, 5e-3, 2.5e-3]);
    if tol_list.is_empty() || tol_list.iter().any(|t| !(*t > 0.0)) {
        return Err(bad("tol_list", "non-empty, every tol > 0"));
    }
    let smoothing = SmoothingParams {
        mode: raw.smoothing.mode.unwrap_or(SmoothingMode::Analytic),
        m_lag: raw.smoothing.m_lag.unwrap_or(32),
        newton_tol: raw.smoothing.newton_tol.unwrap_or(1e-10),
        max_iterations: raw.smoothing.max_iterations.unwrap_or(100),
    };
    smoothing.validate()?;
    let a = &raw.algorithm1;
    let algorithm1 = Algorithm1Config {
        omega: a.omega.unwrap_or(0.16),
        l0: a.l0.unwrap_or(2),
        n_star: a.n_star.unwrap_or(pd.n_star),
        m0: a.m0.unwrap_or(DEFAULT_M0),
        alpha: a.alpha.unwrap_or(1.0),
        max_level_cap: a.max_level_cap.unwrap_or(pd.max_level_cap),
    };
    let output_dir = ov
        .output_dir
        .clone()
        .or(raw.study.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let spec = StudySpec {
        model: raw.model,
        methods,
        dims,
        tol_list,
        profile,
        seed: ov.seed.or(raw.study.seed).unwrap_or(2024),
        output_dir,
        replications: raw.study.replications.unwrap_or(1),
        rate_levels: raw.study.rate_levels.unwrap_or(pd.rate_levels),
        rate_samples: raw.study.rate_samples.unwrap_or(pd.rate_samples),
        parallel_cells: raw.study.parallel_cells.unwrap_or(false),
        smoothing,
        algorithm1,
    };
    if spec.replications == 0 {
        return Err(bad("replications", "replications >= 1"));
    }
    for &d in &spec.dims {
        let model = spec.model_for(d)?;
        if spec.methods.iter().any(|m| m.is_multilevel()) || spec.methods.contains(&MethodKind::NestedMC) {
            model.check_separable()?;
        }
    }
    for &m in &spec.methods {
        spec.run_config(m, spec.tol_list[0]).validate()?;
    }
    Ok(spec)
}

/// Human-readable listing of every default, for `--help`.
pub fn defaults_help() -> String {
    let s = default_study(&Overrides::default());
    let p = profile_defaults(Profile::Paper);
    let m = &s.model;
    let a = &s.algorithm1;
    format!(
        "Configuration file sections and defaults:\n\
         [model]       s0 = {}, mu = {}, mu0 = {}, strike = {}, T = {}, tau = {},\n\
         \x20             base_variance = {}, correlation = {}, threshold_fraction = {}\n\
         \x20             (threshold = <absolute value> overrides threshold_fraction)\n\
         [study]       methods = [\"std_mlmc\", \"smoothed_mlmc\"], dims = [4],\n\
         \x20             tol_list = [0.02, 0.01, 0.005, 0.0025], profile = \"desk\", seed = {},\n\
         \x20             output_dir = \"{}\", replications = 1, parallel_cells = false,\n\
         \x20             rate_levels = {} (paper: {}), rate_samples = {} (paper: {})\n\
         [smoothing]   mode = \"analytic\", m_lag = {}, newton_tol = {:e}, max_iterations = {}\n\
         [algorithm1]  omega = {}, l0 = {}, m0 = {}, alpha = {},\n\
         \x20             n_star = {} (paper: {}), max_level_cap = {} (paper: {})\n\
         Methods: nested_mc, std_mlmc, smoothed_mlmc, smoothed_amlmc, smoothed_mlqmc, smoothed_amlqmc",
        m.s0,
        m.mu,
        m.mu0,
        m.strike,
        m.maturity,
        m.tau,
        m.base_variance,
        m.correlation,
        m.threshold_fraction,
        s.seed,
        s.output_dir.display(),
        s.rate_levels,
        p.rate_levels,
        s.rate_samples,
        p.rate_samples,
        s.smoothing.m_lag,
        s.smoothing.newton_tol,
        s.smoothing.max_iterations,
        a.omega,
        a.l0,
        a.m0,
        a.alpha,
        a.n_star,
        p.n_star,
        a.max_level_cap,
        p.max_level_cap,
    )
}
