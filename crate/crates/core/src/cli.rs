//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, Objective, RunConfig};
use crate::error::Result;
use crate::pipeline::Pipeline;
use crate::report::{rounds_csv, to_json, write_atomic, write_json, Report, ReportMeta};

#[derive(Debug, Parser)]
#[command(
    name = "datamarket",
    version,
    about = "Baselines, pricing, mechanism runs and incentive checks for a data marketplace"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Welfare-optimal collection amount and value.
    Baseline(Common),
    /// Profit-optimal posted pricing curve.
    Price(Common),
    /// Truthful rounds of the mechanism; writes run.json and rounds.csv.
    Run(Common),
    /// Budget balance, individual rationality and welfare/profit identities.
    Verify(Common),
    /// Unilateral deviation sweep.
    Sweep(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Market config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's Monte Carlo replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Report directory; defaults to the config's `output`, then `.`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's objective.
    #[arg(long, value_enum)]
    pub objective: Option<Objective>,
    /// Multiplies the penalty coefficients (negative controls only).
    #[arg(long, value_name = "FACTOR")]
    pub debug_tamper_d: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(s) = self.seed {
            cfg.file.seed = s;
        }
        if let Some(r) = self.reps {
            if r == 0 {
                return Err(crate::Error::config("reps", "must be >= 1"));
            }
            cfg.file.reps = r;
        }
        if let Some(o) = self.objective {
            cfg.file.objective = o;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.file.output.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn scale(&self) -> f64 {
        self.debug_tamper_d.unwrap_or(1.0)
    }
}

fn emit<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    command: &str,
    cfg: &RunConfig,
    scale: f64,
    result: T,
) -> Result<()> {
    let report = Report {
        meta: ReportMeta::new(command, cfg, scale),
        result,
    };
    let path = dir.join(name);
    write_json(&path, &report)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Runs a parsed command; `Ok(false)` means a check failed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let (name, common) = match &cli.command {
        Command::Baseline(c) => ("baseline", c),
        Command::Price(c) => ("price", c),
        Command::Run(c) => ("run", c),
        Command::Verify(c) => ("verify", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let cfg = common.load()?;
    let scale = common.scale();
    if scale != 1.0 {
        log::warn!("penalty coefficients scaled by {scale}: negative-control run");
    }
    let dir = common.out_dir(&cfg);
    let pipe = Pipeline::new(&cfg).with_penalty_scale(scale);
    match &cli.command {
        Command::Baseline(_) => {
            let r = pipe.baseline()?;
            println!(
                "N_OPT = {}  OPT = {:.12}  bound = {:.12}",
                r.baseline.n_opt, r.baseline.opt, r.welfare_upper_bound
            );
            emit(&dir, "baseline.json", name, &cfg, scale, r)?;
            Ok(true)
        }
        Command::Price(_) => {
            let r = pipe.price()?;
            println!(
                "N+ = {}  profit = {:.12}  allocations = {:?}",
                r.search.n_plus, r.search.profit, r.search.allocations
            );
            emit(&dir, "price.json", name, &cfg, scale, r)?;
            Ok(true)
        }
        Command::Run(_) => {
            let (r, records) = pipe.run()?;
            let csv = rounds_csv(&records, cfg.market.buyers.len(), cfg.market.costs.len())?;
            write_atomic(&dir.join("rounds.csv"), &csv)?;
            println!(
                "{} rounds  max |residual| = {:e}  profit = {:.6} ± {:.6}",
                r.rounds.rounds,
                r.rounds.max_abs_residual,
                r.rounds.profit.mean,
                r.rounds.profit.std_err
            );
            emit(&dir, "run.json", name, &cfg, scale, r)?;
            Ok(true)
        }
        Command::Verify(_) => {
            let r = pipe.verify()?;
            for c in &r.checks {
                println!(
                    "{:<4} {:<44} value {:<24e} target {:<24e} tol {:e}",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.target,
                    c.tolerance
                );
            }
            let pass = r.pass;
            emit(&dir, "verify.json", name, &cfg, scale, r)?;
            Ok(pass)
        }
        Command::Sweep(_) => {
            let r = pipe.sweep()?;
            let report = Report {
                meta: ReportMeta::new(name, &cfg, scale),
                result: &r,
            };
            write_atomic(&dir.join("sweep.json"), &to_json(&report))?;
            write_atomic(&dir.join("sweep.txt"), r.table().as_bytes())?;
            println!(
                "{} deviations, {} failures: {}",
                r.entries.len(),
                r.failures,
                if r.pass { "pass" } else { "FAIL" }
            );
            Ok(r.pass)
        }
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
