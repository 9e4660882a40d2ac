//! Study execution and on-disk outputs: per-run `levels.csv` and
//! `summary.json`, the study-wide `cost_vs_tol.csv` and `rates.csv`.

mod config;
mod rates;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    default_study, defaults_help, parse_config, parse_config_str, profile_defaults, Algorithm1Config, ModelConfig,
    Overrides, ProfileDefaults, StudySpec, DEFAULT_OUTPUT_DIR,
};
pub use rates::{emit_rate_table, read_levels_csv, RateRow, RATES_HEADER};

use crate::driver::{replication_seed, run_fixed_levels, run_mlmc, CostRow, LevelRecord, RunConfig, RunReport, RunStatus};
use crate::error::{Error, Result};
use crate::estimators::MethodKind;
use crate::exec::Execution;
use crate::oracle::OracleRecord;

pub const LEVELS_HEADER: [&str; 7] = ["level", "m_l", "N_l", "mean", "variance", "kurtosis", "cost_units"];
pub const COST_HEADER: [&str; 5] = ["method", "d", "tol", "total_cost", "estimate"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn levels_csv(levels: &[LevelRecord]) -> Result<Vec<u8>> {
    csv_bytes(
        &LEVELS_HEADER,
        levels.iter().map(|l| {
            vec![
                l.level.to_string(),
                l.m_l.to_string(),
                l.n_l.to_string(),
                fmt_f64(l.mean),
                fmt_f64(l.variance),
                l.kurtosis.map(fmt_f64).unwrap_or_default(),
                l.cost_units.to_string(),
            ]
        }),
    )
}

pub fn cost_csv(rows: &[CostRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &COST_HEADER,
        rows.iter().map(|r| {
            vec![r.method.name().to_string(), r.d.to_string(), fmt_f64(r.tol), fmt_f64(r.total_cost), fmt_f64(r.estimate)]
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStatus {
    Converged,
    BiasNotConvergedAtCap,
    Failed,
}

impl From<RunStatus> for SummaryStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => SummaryStatus::Converged,
            RunStatus::BiasNotConvergedAtCap => SummaryStatus::BiasNotConvergedAtCap,
        }
    }
}

/// Contents of `summary.json`. Together with `config` a run can be
/// reproduced from its output directory alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: MethodKind,
    pub d: usize,
    pub tol: Option<f64>,
    pub replication: usize,
    pub seed: u64,
    pub status: SummaryStatus,
    pub error: Option<String>,
    pub estimate: Option<f64>,
    pub raw_estimate: Option<f64>,
    pub statistical_error: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub total_cost: Option<u64>,
    pub final_level: Option<usize>,
    pub nested_m: Option<usize>,
    pub wall_time_seconds: Option<f64>,
    pub run_config: Option<RunConfig>,
    pub config: StudySpec,
}

impl Summary {
    #[allow(clippy::too_many_arguments)]
    fn new(
        study: &StudySpec,
        method: MethodKind,
        d: usize,
        tol: Option<f64>,
        replication: usize,
        seed: u64,
        run_config: Option<RunConfig>,
        outcome: &Result<RunReport>,
    ) -> Self {
        let mut s = Summary {
            method,
            d,
            tol,
            replication,
            seed,
            status: SummaryStatus::Failed,
            error: None,
            estimate: None,
            raw_estimate: None,
            statistical_error: None,
            alpha_hat: None,
            beta_hat: None,
            gamma_hat: None,
            total_cost: None,
            final_level: None,
            nested_m: None,
            wall_time_seconds: None,
            run_config,
            config: study.clone(),
        };
        match outcome {
            Ok(r) => {
                s.status = r.status.into();
                s.estimate = Some(r.estimate);
                s.raw_estimate = Some(r.raw_estimate);
                s.statistical_error = Some(r.statistical_error);
                s.alpha_hat = r.rates.map(|x| x.alpha_hat);
                s.beta_hat = r.rates.map(|x| x.beta_hat);
                s.gamma_hat = r.rates.map(|x| x.gamma_hat);
                s.total_cost = Some(r.total_cost);
                s.final_level = Some(r.final_level);
                s.nested_m = r.nested_m;
                s.wall_time_seconds = Some(r.wall_time_seconds);
            }
            Err(e) => s.error = Some(e.to_string()),
        }
        s
    }

    pub fn converged(&self) -> bool {
        self.status == SummaryStatus::Converged
    }
}

fn write_run_dir(dir: &Path, summary: &Summary, report: Option<&RunReport>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let levels = report.map(|r| r.levels.as_slice()).unwrap_or(&[]);
    write_atomic(&dir.join("levels.csv"), &levels_csv(levels)?)?;
    let json = serde_json::to_vec_pretty(summary).map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(&dir.join("summary.json"), &json)
}

pub fn run_dir_name(method: MethodKind, d: usize, tol: f64, replication: usize, replications: usize) -> String {
    let base = format!("{}_d{d}_tol{tol:e}", method.name());
    if replications > 1 {
        format!("{base}_rep{replication}")
    } else {
        base
    }
}

pub fn rate_dir_name(method: MethodKind, d: usize) -> String {
    format!("{}_d{d}", method.name())
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub summaries: Vec<Summary>,
    pub cost_rows: Vec<CostRow>,
    pub rate_rows: Vec<RateRow>,
}

impl StudyOutcome {
    pub fn all_converged(&self) -> bool {
        self.summaries.iter().all(Summary::converged)
    }
}

struct Cell {
    method: MethodKind,
    d: usize,
    tol: f64,
    replication: usize,
}

fn run_cell(study: &StudySpec, cell: &Cell, exec: Execution) -> Result<(Summary, Option<RunReport>)> {
    let seed = replication_seed(study.seed, cell.replication);
    let mut cfg = study.run_config(cell.method, cell.tol);
    cfg.seed = seed;
    cfg.execution = exec;
    let outcome = study.model_for(cell.d).and_then(|model| run_mlmc(&model, &cfg));
    let summary = Summary::new(study, cell.method, cell.d, Some(cell.tol), cell.replication, seed, Some(cfg), &outcome);
    let dir = study.output_dir.join("runs").join(run_dir_name(cell.method, cell.d, cell.tol, cell.replication, study.replications));
    write_run_dir(&dir, &summary, outcome.as_ref().ok())?;
    match &summary.status {
        SummaryStatus::Converged => log::info!("{} d={} tol={:e}: {:?}", cell.method, cell.d, cell.tol, summary.estimate),
        s => log::warn!("{} d={} tol={:e}: {s:?} {}", cell.method, cell.d, cell.tol, summary.error.as_deref().unwrap_or("")),
    }
    Ok((summary, outcome.ok()))
}

#[cfg(feature = "parallel")]
fn run_cells(study: &StudySpec, cells: &[Cell]) -> Vec<Result<(Summary, Option<RunReport>)>> {
    use rayon::prelude::*;
    if study.parallel_cells {
        cells.par_iter().map(|c| run_cell(study, c, Execution::Sequential)).collect()
    } else {
        cells.iter().map(|c| run_cell(study, c, Execution::Parallel)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn run_cells(study: &StudySpec, cells: &[Cell]) -> Vec<Result<(Summary, Option<RunReport>)>> {
    cells.iter().map(|c| run_cell(study, c, Execution::Sequential)).collect()
}

/// Adaptive runs over the `(d, method, tol, replication)` grid, then
/// `cost_vs_tol.csv`. With `rate_runs`, fixed-level runs for every
/// multilevel method and `rates.csv` as well.
pub fn run_study(study: &StudySpec, rate_runs: bool) -> Result<StudyOutcome> {
    std::fs::create_dir_all(&study.output_dir)
        .map_err(|e| Error::Io(format!("output directory {}: {e}", study.output_dir.display())))?;
    let mut cells = Vec::new();
    for &d in &study.dims {
        for &method in &study.methods {
            for &tol in &study.tol_list {
                for replication in 0..study.replications {
                    cells.push(Cell { method, d, tol, replication });
                }
            }
        }
    }
    let results = run_cells(study, &cells).into_iter().collect::<Result<Vec<_>>>()?;

    let mut cost_rows = Vec::new();
    for (group, cell) in results.chunks(study.replications).zip(cells.chunks(study.replications)) {
        let reports: Vec<RunReport> = group.iter().filter_map(|(_, r)| r.clone()).collect();
        if reports.len() == group.len() {
            cost_rows.push(CostRow::aggregate(cell[0].method, cell[0].d, cell[0].tol, &reports));
        }
    }
    write_atomic(&cost_csv_path(study), &cost_csv(&cost_rows)?)?;
    let mut summaries: Vec<Summary> = results.into_iter().map(|(s, _)| s).collect();

    let mut rate_rows = Vec::new();
    if rate_runs && study.rate_levels > 0 {
        summaries.extend(run_rate_levels(study)?);
        rate_rows = emit_rate_table(study)?;
    }
    Ok(StudyOutcome { summaries, cost_rows, rate_rows })
}

/// Fixed-level runs behind the rate table, one per multilevel method and
/// dimension.
pub fn run_rate_levels(study: &StudySpec) -> Result<Vec<Summary>> {
    let mut out = Vec::new();
    for &d in &study.dims {
        for &method in study.methods.iter().filter(|m| m.is_multilevel()) {
            let outcome = study.model_for(d).and_then(|model| {
                run_fixed_levels(
                    &model,
                    method,
                    study.rate_levels,
                    study.rate_samples,
                    study.seed,
                    study.smoothing,
                    Execution::Parallel,
                )
            });
            let summary = Summary::new(study, method, d, None, 0, study.seed, None, &outcome);
            let dir = study.output_dir.join("rate_runs").join(rate_dir_name(method, d));
            write_run_dir(&dir, &summary, outcome.as_ref().ok())?;
            out.push(summary);
        }
    }
    Ok(out)
}

/// Brute-force nested estimate for dimension `d`, written to `path`.
pub fn write_oracle(study: &StudySpec, d: usize, n: u64, m: usize, path: &Path) -> Result<OracleRecord> {
    let model = study.model_for(d)?;
    let record = OracleRecord::compute(&model, n, m, study.seed, Execution::Parallel)?;
    let json = serde_json::to_vec_pretty(&record).map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(path, &json)?;
    Ok(record)
}

pub fn cost_csv_path(study: &StudySpec) -> PathBuf {
    study.output_dir.join("cost_vs_tol.csv")
}

pub fn oracle_path(study: &StudySpec, d: usize) -> PathBuf {
    study.output_dir.join(format!("oracle_d{d}.json"))
}
