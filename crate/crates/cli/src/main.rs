//! `fieldfilter` command line.
//!
//! ```text
//! fieldfilter simulate CONFIG [--seed S] [--out DIR] [--workers W] [--cap C]
//! fieldfilter run      CONFIG [...]
//! fieldfilter sweep    CONFIG [...]
//! fieldfilter bounds   PARAMS [--out DIR]
//! ```
//!
//! Configs are TOML. An experiment config looks like
//!
//! ```toml
//! seed = 7
//! horizon = 20
//! replicates = 20
//! particles = 1000
//! variants = ["bootstrap", "blocked", "enlarged"]
//! resampling = "multinomial"      # or "systematic"
//! norm = "rms-tv"                 # or "sign-max"
//! site_sets = [[0], [1], [0, 1]]  # default: every single site
//! observations = "obs.csv"        # default: simulated from `seed`
//! cap = 16777216                  # joint-state cap of the exact engine
//! record_timing = false           # fills wall_ms; breaks byte determinism
//! model_file = "model.toml"       # or an inline [model] table
//!
//! [model]
//! r = 1
//! [model.graph]                   # kind = path | cycle | grid | explicit
//! kind = "explicit"
//! vertices = 4
//! edges = [[0, 1], [1, 2], [2, 3], [3, 0]]
//! [model.family]                  # name = noisy-voter | quantized-ar | explicit
//! name = "noisy-voter"
//! eps_mix = 0.2
//! obs_flip = 0.2
//!
//! [init]
//! kind = "uniform"                # or point / product
//!
//! [partition]
//! block_shape = [2]               # or blocks = [[0, 1], [2, 3]]
//! b = 1                           # enlargement of the `enlarged` variant
//! m = 1                           # number of offset tilings cycled through
//!
//! [sweep]                         # every axis optional
//! b = [0, 1, 2]
//! particles = [100, 400]
//! block_shape = [[1], [2], [4]]
//! m = [1, 2]
//! budget = 8000                   # iso-budget: N = budget / Σ|K̄|
//! ```
//!
//! A graph document has the fields `vertices` and `edges` (undirected pairs);
//! a partition document has `blocks` (lists of vertex ids) and `b`.
//!
//! Outputs land in `--out` (default `out/`): `states.csv` and
//! `observations.csv` from `simulate`, `metrics.csv` from `run`/`sweep`,
//! `bounds.csv` from `bounds`, and a `manifest.toml` next to them.
//!
//! Exit codes: 0 success, 2 config error, 3 some rows skipped, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fieldfilter::experiment::{
    cmd_bounds, cmd_run, cmd_simulate, cmd_sweep, BoundsConfig, ExperimentConfig, Overrides,
};
use fieldfilter::Error;

#[derive(Parser)]
#[command(name = "fieldfilter", version, about = "Blocked particle filters for dynamic random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a ground-truth trajectory and its observations
    Simulate(Common),
    /// Run every variant at the base configuration
    Run(Common),
    /// Run every variant over the sweep grid
    Sweep(Common),
    /// Evaluate the error bounds over a parameter file
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (TOML)
    config: PathBuf,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    workers: Option<usize>,
    /// Joint-state cap of the exact engine
    #[arg(long)]
    cap: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            workers: self.workers,
            cap: self.cap,
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

enum Failure {
    Config(anyhow::Error),
    Other(anyhow::Error),
}

// library errors all trace back to the config or the files it names
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg_out: Option<&Path>) -> anyhow::Result<PathBuf> {
    let dir = cfg_out.map_or_else(|| PathBuf::from("out"), Path::to_path_buf);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.apply(&common.overrides());
    cfg.validate()?;
    Ok(cfg)
}

/// Returns the number of skipped rows.
fn execute(command: Command) -> Result<usize, Failure> {
    match command {
        Command::Simulate(common) => {
            let cfg = load(&common)?;
            let out = cmd_simulate(&cfg)?;
            let dir = out_dir(cfg.out.as_deref())?;
            write_file(&dir, "states.csv", &out.states_csv)?;
            write_file(&dir, "observations.csv", &out.observations_csv)?;
            write_file(&dir, "manifest.toml", &out.manifest.to_toml())?;
            Ok(0)
        }
        Command::Run(common) => metrics(&common, cmd_run),
        Command::Sweep(common) => metrics(&common, cmd_sweep),
        Command::Bounds(common) => {
            let text = std::fs::read_to_string(&common.config)
                .with_context(|| format!("reading {}", common.config.display()))
                .map_err(Failure::Config)?;
            let cfg = BoundsConfig::from_toml(&text)?;
            let csv = cmd_bounds(&cfg)?;
            match &common.out {
                Some(dir) => write_file(&out_dir(Some(dir))?, "bounds.csv", &csv)?,
                None => print!("{csv}"),
            }
            // gated bounds are answers, not failures
            Ok(0)
        }
    }
}

fn metrics(
    common: &Common,
    f: fn(&ExperimentConfig) -> fieldfilter::Result<fieldfilter::experiment::MetricsOutput>,
) -> Result<usize, Failure> {
    let cfg = load(common)?;
    let out = f(&cfg)?;
    let dir = out_dir(cfg.out.as_deref())?;
    write_file(&dir, "metrics.csv", &out.csv)?;
    write_file(&dir, "manifest.toml", &out.manifest.to_toml())?;
    Ok(out.skipped)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(skipped) => {
            eprintln!("warning: {skipped} rows skipped; see the status column");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
