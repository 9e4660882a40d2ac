//! Adaptive multilevel control loop, fixed-level rate studies and the
//! cost-versus-tolerance study.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{inner_size, telescope, LevelAccumulator, LevelSampler, MethodKind, DEFAULT_M0, KURTOSIS_MIN_SAMPLES};
use crate::exec::Execution;
use crate::model::ModelSpec;
use crate::smoothing::SmoothingParams;

/// Allocation floor per level.
pub const MIN_SAMPLES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: MethodKind,
    pub tol: f64,
    pub omega_split: f64,
    pub l0: usize,
    pub n_star: u64,
    pub m0: usize,
    pub alpha: f64,
    pub seed: u64,
    pub max_level_cap: usize,
    pub smoothing: SmoothingParams,
    #[serde(skip)]
    pub execution: Execution,
}

impl RunConfig {
    /// Desk-scale defaults: `N_* = 20,000`, level cap 7.
    pub fn desk(method: MethodKind, tol: f64, seed: u64) -> Self {
        RunConfig {
            method,
            tol,
            omega_split: 0.16,
            l0: 2,
            n_star: 20_000,
            m0: DEFAULT_M0,
            alpha: 1.0,
            seed,
            max_level_cap: 7,
            smoothing: SmoothingParams::default(),
            execution: Execution::Parallel,
        }
    }

    /// Full-scale defaults: `N_* = 200,000`, level cap 12.
    pub fn paper(method: MethodKind, tol: f64, seed: u64) -> Self {
        RunConfig { n_star: 200_000, max_level_cap: 12, ..Self::desk(method, tol, seed) }
    }

    pub fn for_profile(profile: Profile, method: MethodKind, tol: f64, seed: u64) -> Self {
        match profile {
            Profile::Desk => Self::desk(method, tol, seed),
            Profile::Paper => Self::paper(method, tol, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, constraint: &str| {
            Err(Error::InvalidField { field: field.into(), constraint: constraint.into() })
        };
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol", "tol > 0");
        }
        if !(self.omega_split > 0.0 && self.omega_split < 1.0) {
            return bad("omega", "0 < omega < 1");
        }
        if self.n_star < MIN_SAMPLES {
            return bad("n_star", "n_star >= 2");
        }
        if self.m0 == 0 {
            return bad("m0", "m0 >= 1");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha", "alpha > 0");
        }
        if self.l0 > self.max_level_cap {
            return bad("l0", "l0 <= max_level_cap");
        }
        if self.max_level_cap > 40 {
            return bad("max_level_cap", "max_level_cap <= 40");
        }
        self.smoothing.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    BiasNotConvergedAtCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub m_l: usize,
    pub n_l: u64,
    pub mean: f64,
    pub variance: f64,
    pub kurtosis: Option<f64>,
    pub cost_units: u64,
    pub cost_per_sample: f64,
    pub cumulative_cost: u64,
    pub std_error: f64,
    pub fine_mean: f64,
    pub fine_variance: f64,
    pub coarse_mean: Option<f64>,
    pub coarse_variance: Option<f64>,
}

impl LevelRecord {
    fn from_acc(acc: &LevelAccumulator, m_l: usize, cumulative_cost: u64) -> Self {
        LevelRecord {
            level: acc.level,
            m_l,
            n_l: acc.n,
            mean: acc.mean(),
            variance: acc.variance(),
            kurtosis: acc.kurtosis(),
            cost_units: acc.cost_units,
            cost_per_sample: acc.cost_per_sample(),
            cumulative_cost,
            std_error: acc.std_error(),
            fine_mean: acc.fine_mean(),
            fine_variance: acc.fine_variance(),
            coarse_mean: acc.coarse_mean(),
            coarse_variance: acc.coarse_variance(),
        }
    }
}

/// Fitted decay exponents: slopes of `log2 |mean|`, `log2 V` and `log2 C`
/// against the level (decay shows as a negative number).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub gamma_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: MethodKind,
    pub tol: f64,
    pub seed: u64,
    pub levels: Vec<LevelRecord>,
    pub final_level: usize,
    /// Telescoped estimate clamped to [0, 1].
    pub estimate: f64,
    pub raw_estimate: f64,
    /// `sqrt(sum V_l / N_l)`.
    pub statistical_error: f64,
    pub rates: Option<Rates>,
    pub total_cost: u64,
    pub wall_time_seconds: f64,
    pub status: RunStatus,
    /// Inner size used by the single-level nested estimator.
    pub nested_m: Option<usize>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    fn build(
        method: MethodKind,
        tol: f64,
        seed: u64,
        accs: &[LevelAccumulator],
        m0: usize,
        status: RunStatus,
        start: Instant,
    ) -> Self {
        let mut cumulative = 0;
        let levels: Vec<LevelRecord> = accs
            .iter()
            .map(|a| {
                cumulative += a.cost_units;
                LevelRecord::from_acc(a, inner_size(m0, a.level), cumulative)
            })
            .collect();
        let means: Vec<f64> = levels.iter().map(|l| l.mean).collect();
        let t = telescope(&means);
        let statistical_error = levels.iter().map(|l| l.variance / l.n_l.max(1) as f64).sum::<f64>().sqrt();
        let mut report = RunReport {
            method,
            tol,
            seed,
            final_level: levels.last().map_or(0, |l| l.level),
            estimate: t.clamped,
            raw_estimate: t.raw,
            statistical_error,
            rates: None,
            total_cost: cumulative,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            status,
            nested_m: None,
            levels,
        };
        report.rates = fit_rates(&report).ok();
        report
    }
}

/// `N_l = ceil((1-omega)^-1 eps^-2 sqrt(V_l/C_l) sum_k sqrt(V_k C_k))`,
/// floored at 2.
pub fn optimal_allocation(variances: &[f64], costs: &[f64], eps: f64, omega: f64) -> Vec<u64> {
    assert_eq!(variances.len(), costs.len());
    let total: f64 = variances.iter().zip(costs).map(|(v, c)| (v.max(0.0) * c).sqrt()).sum();
    if total == 0.0 {
        log::debug!("all level variances are zero; using the floor allocation");
    }
    let scale = total / ((1.0 - omega) * eps * eps);
    variances
        .iter()
        .zip(costs)
        .map(|(&v, &c)| {
            let n = (scale * (v.max(0.0) / c).sqrt()).ceil();
            if n.is_finite() {
                (n as u64).max(MIN_SAMPLES)
            } else {
                MIN_SAMPLES
            }
        })
        .collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Weak-rate estimate for the bias test: refit on levels `>= 1` whose mean
/// is more than three standard errors from zero, clamped to [0.5, 2];
/// otherwise `alpha`.
pub fn refit_alpha(means: &[f64], std_errors: &[f64], alpha: f64) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = means
        .iter()
        .zip(std_errors)
        .enumerate()
        .skip(1)
        .filter(|(_, (m, se))| m.abs() > 3.0 * **se)
        .map(|(l, (m, _))| (l as f64, m.abs().log2()))
        .unzip();
    if xs.len() < 3 {
        return alpha;
    }
    (-slope(&xs, &ys)).clamp(0.5, 2.0)
}

/// `|mean_L| / (2^alpha - 1) <= sqrt(omega) eps` on the last level.
pub fn bias_converged(level_means: &[f64], alpha: f64, eps: f64, omega: f64) -> bool {
    let last = *level_means.last().expect("bias test needs at least one level");
    last.abs() / (2f64.powf(alpha) - 1.0) <= omega.sqrt() * eps
}

/// Variance estimates for allocation. Levels with fewer than 100 samples
/// are floored by extrapolating the previous level's value with the fitted
/// strong rate.
fn allocation_variances(accs: &[LevelAccumulator]) -> Vec<f64> {
    let beta = {
        let (xs, ys): (Vec<f64>, Vec<f64>) = accs
            .iter()
            .filter(|a| a.level >= 1 && a.n >= KURTOSIS_MIN_SAMPLES && a.variance() > 0.0)
            .map(|a| (a.level as f64, a.variance().log2()))
            .unzip();
        if xs.len() >= 2 {
            slope(&xs, &ys).min(0.0)
        } else {
            -1.0
        }
    };
    let mut out: Vec<f64> = Vec::with_capacity(accs.len());
    for (i, a) in accs.iter().enumerate() {
        let v = a.variance();
        let v = if a.n < KURTOSIS_MIN_SAMPLES && i > 0 { v.max(out[i - 1] * 2f64.powf(beta)) } else { v };
        out.push(v);
    }
    out
}

fn extend(sampler: &LevelSampler, acc: &mut LevelAccumulator, extra: u64, exec: Execution) -> Result<()> {
    if extra == 0 {
        return Ok(());
    }
    let more = sampler.accumulate(acc.level, acc.n..acc.n + extra, exec)?;
    acc.merge(&more);
    Ok(())
}

/// Adaptive multilevel estimate of the exceedance probability to RMS
/// accuracy `config.tol`.
pub fn run_mlmc(spec: &ModelSpec, config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    if config.method == MethodKind::NestedMC {
        return run_nested(spec, config);
    }
    let start = Instant::now();
    let sampler = LevelSampler::new(spec, config.method, config.smoothing, config.seed, config.m0)?;
    let exec = config.execution;
    let mut accs: Vec<LevelAccumulator> = Vec::new();
    for level in 0..=config.l0 {
        let mut acc = LevelAccumulator::new(level);
        extend(&sampler, &mut acc, config.n_star, exec)?;
        accs.push(acc);
    }
    let (eps, omega) = (config.tol, config.omega_split);
    loop {
        let v = allocation_variances(&accs);
        let c: Vec<f64> = accs.iter().map(|a| a.cost_per_sample()).collect();
        let target = optimal_allocation(&v, &c, eps, omega);
        let mut drew = false;
        for (acc, &n) in accs.iter_mut().zip(&target) {
            if n > acc.n {
                extend(&sampler, acc, n - acc.n, exec)?;
                drew = true;
            }
        }
        if drew {
            continue;
        }
        let means: Vec<f64> = accs.iter().map(|a| a.mean()).collect();
        let ses: Vec<f64> = accs.iter().map(|a| a.std_error()).collect();
        let alpha = refit_alpha(&means, &ses, config.alpha);
        if bias_converged(&means, alpha, eps, omega) {
            return Ok(RunReport::build(config.method, eps, config.seed, &accs, config.m0, RunStatus::Converged, start));
        }
        let next = accs.len();
        if next > config.max_level_cap {
            log::warn!("{}: bias not converged at level cap {}", config.method, config.max_level_cap);
            return Ok(RunReport::build(
                config.method,
                eps,
                config.seed,
                &accs,
                config.m0,
                RunStatus::BiasNotConvergedAtCap,
                start,
            ));
        }
        let mut acc = LevelAccumulator::new(next);
        extend(&sampler, &mut acc, config.n_star, exec)?;
        accs.push(acc);
    }
}

/// Single-level nested estimator. A pilot of standard level differences
/// picks the inner size by the same bias test; the outer count then follows
/// from the Bernoulli variance of the pilot's finest indicator.
fn run_nested(spec: &ModelSpec, config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let exec = config.execution;
    let pilot = LevelSampler::new(spec, MethodKind::StdMLMC, config.smoothing, config.seed, config.m0)?;
    let (eps, omega) = (config.tol, config.omega_split);
    let mut pilot_cost = 0u64;
    let mut accs: Vec<LevelAccumulator> = Vec::new();
    let mut status = RunStatus::Converged;
    let mut level = 0;
    loop {
        let acc = pilot.accumulate(level, 0..config.n_star, exec)?;
        pilot_cost += acc.cost_units;
        accs.push(acc);
        let means: Vec<f64> = accs.iter().map(|a| a.mean()).collect();
        let ses: Vec<f64> = accs.iter().map(|a| a.std_error()).collect();
        let alpha = refit_alpha(&means, &ses, config.alpha);
        if level >= config.l0 && bias_converged(&means, alpha, eps, omega) {
            break;
        }
        if level + 1 > config.max_level_cap {
            status = RunStatus::BiasNotConvergedAtCap;
            break;
        }
        level += 1;
    }
    let p = accs.last().unwrap().fine_mean().clamp(0.0, 1.0);
    let n = ((p * (1.0 - p)).max(1.0 / config.n_star as f64) / ((1.0 - omega) * eps * eps)).ceil() as u64;
    let n = n.max(MIN_SAMPLES);
    let final_seed = config.seed ^ 0x6e65_7374_6564_u64;
    let nested = LevelSampler::new(spec, MethodKind::NestedMC, config.smoothing, final_seed, config.m0)?;
    let mut acc = nested.accumulate(level, 0..n, exec)?;
    acc.cost_units += pilot_cost;
    let mut report = RunReport::build(MethodKind::NestedMC, eps, config.seed, &[acc], config.m0, status, start);
    report.nested_m = Some(inner_size(config.m0, level));
    report.rates = None;
    Ok(report)
}

/// Every level `0..=max_level` with a fixed sample count; used for rate
/// studies.
pub fn run_fixed_levels(
    spec: &ModelSpec,
    method: MethodKind,
    max_level: usize,
    n_per_level: u64,
    seed: u64,
    smoothing: SmoothingParams,
    exec: Execution,
) -> Result<RunReport> {
    if !method.is_multilevel() {
        return Err(Error::Config("fixed-level studies need a multilevel method".into()));
    }
    let start = Instant::now();
    let sampler = LevelSampler::new(spec, method, smoothing, seed, DEFAULT_M0)?;
    let accs = (0..=max_level)
        .map(|l| sampler.accumulate(l, 0..n_per_level, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::build(method, 0.0, seed, &accs, DEFAULT_M0, RunStatus::Converged, start))
}

/// Rate fit over levels `>= 1` with at least 100 samples.
pub fn fit_rates(report: &RunReport) -> Result<Rates> {
    fit_rates_from_levels(&report.levels)
}

pub fn fit_rates_from_levels(levels: &[LevelRecord]) -> Result<Rates> {
    let usable: Vec<&LevelRecord> = levels.iter().filter(|l| l.level >= 1 && l.n_l >= KURTOSIS_MIN_SAMPLES).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientLevels(usable.len()));
    }
    let fit = |f: &dyn Fn(&LevelRecord) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = usable
            .iter()
            .map(|l| (l.level as f64, f(l)))
            .filter(|(_, y)| y.is_finite())
            .unzip();
        if xs.len() >= 2 {
            slope(&xs, &ys)
        } else {
            f64::NAN
        }
    };
    Ok(Rates {
        alpha_hat: fit(&|l| l.mean.abs().log2()),
        beta_hat: fit(&|l| l.variance.log2()),
        gamma_hat: fit(&|l| l.cost_per_sample.log2()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub method: MethodKind,
    pub d: usize,
    pub tol: f64,
    /// Mean total cost over the replications.
    pub total_cost: f64,
    /// Mean estimate over the replications.
    pub estimate: f64,
    pub replications: usize,
    pub all_converged: bool,
}

impl CostRow {
    /// Mean cost and estimate over the replications of one cell.
    pub fn aggregate(method: MethodKind, d: usize, tol: f64, reports: &[RunReport]) -> Self {
        let k = reports.len().max(1) as f64;
        CostRow {
            method,
            d,
            tol,
            total_cost: reports.iter().map(|r| r.total_cost as f64).sum::<f64>() / k,
            estimate: reports.iter().map(|r| r.estimate).sum::<f64>() / k,
            replications: reports.len(),
            all_converged: reports.iter().all(RunReport::converged),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostStudy {
    pub rows: Vec<CostRow>,
    /// Per-replication reports, in `(method, tol, replication)` order.
    pub reports: Vec<RunReport>,
    /// Slope of `log cost` against `log tol`, per method.
    pub exponents: Vec<(MethodKind, f64)>,
}

/// Seed of replication `r` derived from the base seed.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        seed.wrapping_add((r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// Run every method at every tolerance, `replications` times with
/// independent seeds, and fit the exponent of the mean cost against the
/// tolerance.
pub fn cost_vs_tol_study(
    spec: &ModelSpec,
    methods: &[MethodKind],
    tols: &[f64],
    base: &RunConfig,
    replications: usize,
) -> Result<CostStudy> {
    if tols.len() < 3 {
        return Err(Error::InvalidField { field: "tol_list".into(), constraint: "at least 3 tolerances".into() });
    }
    if replications == 0 {
        return Err(Error::InvalidField { field: "replications".into(), constraint: ">= 1".into() });
    }
    let (lo, hi) = tols.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if hi / lo < 10.0 - 1e-9 {
        log::warn!("tolerances span less than a decade; the cost exponent is poorly determined");
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut exponents = Vec::new();
    for &method in methods {
        let mut costs = Vec::new();
        for &tol in tols {
            let reps = (0..replications)
                .map(|r| run_mlmc(spec, &RunConfig { method, tol, seed: replication_seed(base.seed, r), ..base.clone() }))
                .collect::<Result<Vec<_>>>()?;
            let row = CostRow::aggregate(method, spec.dim(), tol, &reps);
            costs.push(row.total_cost);
            rows.push(row);
            reports.extend(reps);
        }
        exponents.push((method, cost_exponent(tols, &costs)));
    }
    Ok(CostStudy { rows, reports, exponents })
}

/// Slope of `ln cost` against `ln tol`.
pub fn cost_exponent(tols: &[f64], costs: &[f64]) -> f64 {
    let xs: Vec<f64> = tols.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = costs.iter().map(|c| c.ln()).collect();
    slope(&xs, &ys)
}
