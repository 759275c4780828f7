//! `attractor-lab <subcommand> --config <path> [--seed k] [--out dir]`
//!
//! Exit status: 0 on success, 2 for configuration errors (nothing is written),
//! 3 for numerical failures or failed checks (the failing stage is named on
//! stderr), 1 for i/o errors.

mod config;
mod error;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::RunConfig;
use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Stationary,
    Flow,
    Absorb,
    Collapse,
    Sync,
    Entropy,
    Oracle,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Stationary => "stationary",
            Subcommand::Flow => "flow",
            Subcommand::Absorb => "absorb",
            Subcommand::Collapse => "collapse",
            Subcommand::Sync => "sync",
            Subcommand::Entropy => "entropy",
            Subcommand::Oracle => "oracle",
        }
    }
}

const COLUMNS: &str = "\
Outputs go to <out>/<subcommand>/ together with manifest.json (inputs, seed,
versions, summary). CSV columns per subcommand:

  stationary  stationary.csv    t, h_norm, v_norm
              pullback.csv      start, gap
              stationarity.csv  h, defect, tolerance, pass
              birkhoff.csv      window, mean_h_sq, running_max_ratio
              stationary_ledger.json
  flow        flow.csv          s, r, t, flow_defect, cocycle_defect, budget, pass
  absorb      absorb.csv        s, observed, bound, absorbed
  collapse    collapse.csv      s, observed_sq, bound, pass
  sync        sync.csv          t, probability, wilson_lo, wilson_hi
  entropy     entropy.csv       delta, count, ln_inv_delta, ln_count, exponent
              covering.csv      m, points, separation, delta, count, required
  oracle      oracle.csv        check, value, tolerance, pass

The config is key = value lines under [run], [drift], [noise], [solver] and
[experiment] headers; a manifest.json from an earlier run is also accepted and
replays it. ATTRACTOR_LAB_THREADS caps the worker count.

Exit status: 0 success, 2 configuration error, 3 numerical failure or failed
check, 1 i/o error.";

#[derive(Debug, Parser)]
#[command(name = "attractor-lab", version, about = "Pathwise experiments for monotone SPDE", after_help = COLUMNS)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Configuration file, or a manifest.json to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.out.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: output::Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{} is not a run manifest: {e}", path.display())))?;
        return Ok(manifest.config);
    }
    RunConfig::parse(&text)
}

fn thread_cap() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ATTRACTOR_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("ATTRACTOR_LAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(args: &Args) -> Result<PathBuf, CliError> {
    thread_cap()?;
    let mut cfg = load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.run.out = out.display().to_string();
    }
    cfg.validate(args.subcommand)?;
    let report = match args.subcommand {
        Subcommand::Stationary => experiments::stationary(&cfg),
        Subcommand::Flow => experiments::flow(&cfg),
        Subcommand::Absorb => experiments::absorb(&cfg),
        Subcommand::Collapse => experiments::collapse(&cfg),
        Subcommand::Sync => experiments::sync(&cfg),
        Subcommand::Entropy => experiments::entropy(&cfg),
        Subcommand::Oracle => experiments::oracle(&cfg),
    }?;
    let dir = output::experiment_dir(Path::new(&cfg.run.out), args.subcommand.name());
    output::write(&dir, args.subcommand.name(), &cfg, &report)?;
    if let Some((stage, detail)) = report.failure {
        return Err(CliError::CheckFailed { stage, detail });
    }
    Ok(dir)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(dir) => {
            println!("{}: wrote {}", args.subcommand.name(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("attractor-lab {}: {e}", args.subcommand.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
