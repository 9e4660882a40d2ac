use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nestmlmc::driver::Profile;
use nestmlmc::report::{
    default_study, defaults_help, emit_rate_table, oracle_path, parse_config, run_study, write_oracle, Overrides,
    StudySpec,
};

/// Output directory override; `--out` takes precedence.
const OUT_ENV: &str = "NESTMLMC_OUT";

#[derive(Parser)]
#[command(name = "nestmlmc", version, about = "Nested multilevel Monte Carlo estimates of large-loss probabilities")]
#[command(after_long_help = defaults_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adaptive runs for every method, dimension and tolerance in the config.
    #[command(after_long_help = defaults_help())]
    Run(Common),
    /// Adaptive runs plus fixed-level rate runs and rates.csv.
    #[command(after_long_help = defaults_help())]
    Study(Common),
    /// Rebuild rates.csv from an existing output directory.
    #[command(after_long_help = defaults_help())]
    Rates(Common),
    /// Brute-force nested Monte Carlo reference value.
    #[command(after_long_help = defaults_help())]
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Dimension (defaults to the first entry of `dims`).
        #[arg(long)]
        d: Option<usize>,
        /// Outer samples.
        #[arg(long, default_value_t = 2_000_000)]
        outer: u64,
        /// Inner samples per outer scenario.
        #[arg(long, default_value_t = 1 << 14)]
        inner: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every key is optional (defaults listed by --help).
    config: Option<PathBuf>,
    /// Sample-size profile: desk (N_* = 20000, level cap 7) or paper
    /// (N_* = 200000, level cap 12).
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Base seed (default 2024).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Run independent grid cells in parallel instead of parallelizing
    /// inside each run.
    #[arg(long)]
    parallel_cells: bool,
}

impl Common {
    fn study(&self) -> Result<StudySpec> {
        let overrides = Overrides {
            profile: self.profile.map(|p| match p {
                ProfileArg::Desk => Profile::Desk,
                ProfileArg::Paper => Profile::Paper,
            }),
            seed: self.seed,
            output_dir: self.out.clone(),
        };
        let mut study = match &self.config {
            Some(path) => parse_config(path, &overrides).with_context(|| format!("reading {}", path.display()))?,
            None => default_study(&overrides),
        };
        study.parallel_cells |= self.parallel_cells;
        Ok(study)
    }
}

fn report_runs(outcome: &nestmlmc::report::StudyOutcome) -> ExitCode {
    for s in &outcome.summaries {
        let tol = s.tol.map_or("fixed".to_string(), |t| format!("{t:e}"));
        match s.estimate {
            Some(e) => println!("{:<16} d={:<3} tol={:<8} {:?} estimate={e:.6}", s.method.name(), s.d, tol, s.status),
            None => println!("{:<16} d={:<3} tol={:<8} {:?} {}", s.method.name(), s.d, tol, s.status, s.error.as_deref().unwrap_or("")),
        }
    }
    if outcome.all_converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => {
            let study = c.study()?;
            Ok(report_runs(&run_study(&study, false)?))
        }
        Command::Study(c) => {
            let study = c.study()?;
            Ok(report_runs(&run_study(&study, true)?))
        }
        Command::Rates(c) => {
            let study = c.study()?;
            let rows = emit_rate_table(&study)?;
            let incomplete = rows.iter().filter(|r| r.incomplete).count();
            println!("wrote {} rows to {}", rows.len(), study.output_dir.join("rates.csv").display());
            Ok(if incomplete == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Oracle { common, d, outer, inner } => {
            let study = common.study()?;
            let d = d.unwrap_or(study.dims[0]);
            let path = oracle_path(&study, d);
            let rec = write_oracle(&study, d, outer, inner, &path)?;
            println!("estimate {} +- {} ({})", rec.estimate, rec.std_error, path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
