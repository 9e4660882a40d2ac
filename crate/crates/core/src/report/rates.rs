use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cost_csv_path, csv_bytes, fmt_f64, rate_dir_name, run_dir_name, write_atomic, StudySpec};
use crate::driver::{cost_exponent, fit_rates_from_levels, LevelRecord};
use crate::error::{Error, Result};
use crate::estimators::MethodKind;

pub const RATES_HEADER: [&str; 8] =
    ["method", "d", "alpha_hat", "beta_hat", "cost_exponent", "max_kurtosis", "kurtosis_deepest", "incomplete"];

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct LevelRow {
    level: usize,
    m_l: usize,
    #[serde(rename = "N_l")]
    n_l: u64,
    mean: f64,
    variance: f64,
    kurtosis: Option<f64>,
    cost_units: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct CostCsvRow {
    method: String,
    d: usize,
    tol: f64,
    total_cost: f64,
}

/// One row of `rates.csv`. Missing values are `None` and make the row
/// incomplete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub method: MethodKind,
    pub d: usize,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    pub cost_exponent: Option<f64>,
    pub max_kurtosis: Option<f64>,
    pub kurtosis_deepest: Option<f64>,
    pub incomplete: bool,
}

/// Level records from a `levels.csv`. Only the columns stored in the file
/// are filled; the remaining statistics are derived or zero.
pub fn read_levels_csv(path: &Path) -> Result<Vec<LevelRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cumulative = 0;
    reader
        .deserialize::<LevelRow>()
        .map(|row| {
            let r = row.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            cumulative += r.cost_units;
            Ok(LevelRecord {
                level: r.level,
                m_l: r.m_l,
                n_l: r.n_l,
                mean: r.mean,
                variance: r.variance,
                kurtosis: r.kurtosis,
                cost_units: r.cost_units,
                cost_per_sample: r.cost_units as f64 / r.n_l.max(1) as f64,
                cumulative_cost: cumulative,
                std_error: (r.variance / r.n_l.max(1) as f64).sqrt(),
                fine_mean: f64::NAN,
                fine_variance: f64::NAN,
                coarse_mean: None,
                coarse_variance: None,
            })
        })
        .collect()
}

fn read_costs(path: &Path) -> Result<Vec<CostCsvRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Io(format!("{}: {e}", path.display()))))
        .collect()
}

/// Level data behind the rate fit: the fixed-level run when present,
/// otherwise the adaptive run at the smallest tolerance.
fn rate_levels(study: &StudySpec, method: MethodKind, d: usize) -> Option<Vec<LevelRecord>> {
    let fixed = study.output_dir.join("rate_runs").join(rate_dir_name(method, d)).join("levels.csv");
    let tol = study.tol_list.iter().copied().fold(f64::INFINITY, f64::min);
    let adaptive = study
        .output_dir
        .join("runs")
        .join(run_dir_name(method, d, tol, 0, study.replications))
        .join("levels.csv");
    [fixed, adaptive]
        .iter()
        .filter(|p| p.exists())
        .find_map(|p| read_levels_csv(p).ok().filter(|l| !l.is_empty()))
}

pub(super) fn rate_row(
    method: MethodKind,
    d: usize,
    levels: Option<&[LevelRecord]>,
    costs: &[(f64, f64)],
    expected_tols: usize,
) -> RateRow {
    let mut incomplete = levels.is_none();
    let (mut alpha_hat, mut beta_hat, mut max_kurtosis, mut kurtosis_deepest) = (None, None, None, None);
    if let Some(levels) = levels {
        if method.is_multilevel() {
            match fit_rates_from_levels(levels) {
                Ok(r) => {
                    alpha_hat = Some(r.alpha_hat).filter(|x| x.is_finite());
                    beta_hat = Some(r.beta_hat).filter(|x| x.is_finite());
                    incomplete |= alpha_hat.is_none() || beta_hat.is_none();
                }
                Err(_) => incomplete = true,
            }
        }
        max_kurtosis = levels.iter().filter_map(|l| l.kurtosis).reduce(f64::max);
        kurtosis_deepest = levels.last().and_then(|l| l.kurtosis);
    }
    let cost_exponent = if costs.len() >= 3 {
        let (tols, c): (Vec<f64>, Vec<f64>) = costs.iter().copied().unzip();
        Some(cost_exponent(&tols, &c)).filter(|x| x.is_finite())
    } else {
        None
    };
    incomplete |= cost_exponent.is_none() || costs.len() < expected_tols;
    RateRow { method, d, alpha_hat, beta_hat, cost_exponent, max_kurtosis, kurtosis_deepest, incomplete }
}

pub(super) fn rates_csv(rows: &[RateRow]) -> Result<Vec<u8>> {
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    csv_bytes(
        &RATES_HEADER,
        rows.iter().map(|r| {
            vec![
                r.method.name().to_string(),
                r.d.to_string(),
                opt(r.alpha_hat),
                opt(r.beta_hat),
                opt(r.cost_exponent),
                opt(r.max_kurtosis),
                opt(r.kurtosis_deepest),
                r.incomplete.to_string(),
            ]
        }),
    )
}

/// Build `rates.csv` from whatever a study left in its output directory.
/// Every requested `(method, d)` gets a row; missing runs flag it
/// incomplete.
pub fn emit_rate_table(study: &StudySpec) -> Result<Vec<RateRow>> {
    let costs = read_costs(&cost_csv_path(study))?;
    let mut rows = Vec::new();
    for &d in &study.dims {
        for &method in &study.methods {
            let levels = rate_levels(study, method, d);
            let mut pts: Vec<(f64, f64)> = costs
                .iter()
                .filter(|c| c.d == d && c.method.parse::<MethodKind>().ok() == Some(method))
                .map(|c| (c.tol, c.total_cost))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.dedup_by(|a, b| a.0 == b.0);
            rows.push(rate_row(method, d, levels.as_deref(), &pts, study.tol_list.len()));
        }
    }
    write_atomic(&study.output_dir.join("rates.csv"), &rates_csv(&rows)?)?;
    Ok(rows)
}
