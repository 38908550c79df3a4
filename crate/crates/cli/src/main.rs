//! `hrflab`: runs second-Ricci-flow experiments from a TOML config.
//!
//! Exit status: 0 when every check passes, 1 when one fails, 2 for a bad
//! configuration, 3 when a run stops on a CFL or positivity guard (partial
//! artifacts are kept), 4 for other errors.

mod config;
mod error;
mod report;
mod suites;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Suite};
use error::CliError;

#[derive(Parser)]
#[command(name = "hrflab", version, about = "Numerical laboratory for the second Ricci flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `out` in the config, then `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces `grid.resolution`.
    #[arg(long)]
    resolution_override: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs every suite listed in the config.
    Run(Common),
    /// Identity, evolution and exact-solution checks.
    Verify(Common),
    /// Flow plus the monitors.
    Monitor(Common),
    /// Exhaustion profile and curvature threshold.
    Exhaustion(Common),
    /// Summarises an output directory into summary.txt and summary.json.
    Report {
        /// Output directory of an earlier run.
        dir: PathBuf,
    },
}

const VERIFY_GROUP: [Suite; 3] = [Suite::Identities, Suite::Evolution, Suite::Oracle];
const MONITOR_GROUP: [Suite; 2] = [Suite::Flow, Suite::Monitors];

/// Suites of `group` listed in the config, or `default` when none is.
fn select(cfg: &ExperimentConfig, group: &[Suite], default: &[Suite]) -> Vec<Suite> {
    let chosen: Vec<Suite> = cfg.suites.iter().copied().filter(|s| group.contains(s)).collect();
    if chosen.is_empty() {
        default.to_vec()
    } else {
        chosen
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(res) = common.resolution_override {
        cfg.grid.resolution = res;
    }
    cfg.validate()?;
    let out = common.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn execute(name: &str, common: &Common, pick: impl Fn(&ExperimentConfig) -> Vec<Suite>) -> Result<u8, CliError> {
    let (cfg, out) = load(common)?;
    let mut suites = pick(&cfg);
    // monitored runs of a model with a known solution also get its convergence study
    if suites.contains(&Suite::Monitors) && cfg.flow.exact_boundary {
        suites.push(Suite::Oracle);
    }
    suites.sort();
    suites.dedup();
    cfg.check_suites(&suites)?;
    let outcome = suites::run(&cfg, &suites, name, &out)?;
    summarize(&out)?;
    Ok(if outcome.breach() {
        3
    } else if outcome.failed() {
        1
    } else {
        0
    })
}

fn summarize(dir: &Path) -> Result<(), CliError> {
    let s = report::summarize(dir)?;
    let text = report::write(dir, &s)?;
    eprint!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => execute("run", c, |cfg| cfg.suites.clone()),
        Command::Verify(c) => execute("verify", c, |cfg| {
            let mut default = vec![Suite::Identities];
            if cfg.model().is_some_and(|m| m.has_exact_solution()) {
                default.push(Suite::Oracle);
            }
            select(cfg, &VERIFY_GROUP, &default)
        }),
        Command::Monitor(c) => execute("monitor", c, |cfg| select(cfg, &MONITOR_GROUP, &MONITOR_GROUP)),
        Command::Exhaustion(c) => execute("exhaustion", c, |_| vec![Suite::Exhaustion]),
        Command::Report { dir } => summarize(dir).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("hrflab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
