//! Batch front end for the `agecodec` library: design prefix-free codes for
//! timely status updates, sweep distribution families, simulate the designed
//! codes, and verify the solver against independent oracles and simulators.
//!
//! Settings resolve as flags over config-file entries over defaults, and
//! every randomized artifact records its seed. Set `AGECODEC_LOG=info` (or
//! `debug`) for progress logging.

mod design;
mod input;
mod output;
mod simulate;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use agecodec::varform::Mode;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::input::{ConfigMap, RunSpec};

/// Objective selector as it appears on the command line.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    /// Average age of the memoryless update scheme.
    Age,
    /// Mean M/G/1 sojourn time at arrival rate λ.
    Delay,
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Self {
        match arg {
            ModeArg::Age => Mode::Age,
            ModeArg::Delay => Mode::Delay,
        }
    }
}

/// Table output format for sweeps.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Settings shared by every subcommand.
#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Source distribution: zipf:s=1,n=256, file:PATH, or inline:0.5,0.25,0.25.
    #[arg(long)]
    pub dist: Option<String>,
    /// Cost to optimize (default: age).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Poisson arrival rate; required in delay mode.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Per-bit erasure probability of the update channel.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Transmit probabilities: inline:… or file:PATH.
    #[arg(long)]
    pub theta: Option<String>,
    /// Skip-codeword length in bits (default: the shortest codeword).
    #[arg(long)]
    pub skip_length: Option<f64>,
    /// Master seed for solver restarts and simulation streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random restarts of the inner ascent.
    #[arg(long)]
    pub multistarts: Option<usize>,
    /// Resolution of the outer tilt-magnitude grid.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Flat key=value config file; flags take precedence over its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Parser)]
#[command(
    name = "agecodec",
    version,
    about = "Design and evaluate prefix-free codes that minimize update age or queueing delay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance; write design.json, codebook.json and summary.csv.
    Design {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a parameter grid and emit one plot-ready row per point.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Grid START:STOP:STEP over the Zipf exponent (age) or λ (delay).
        #[arg(long)]
        grid: Option<String>,
        /// Concurrent grid points (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Table format (default: csv).
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Design (or take) an integer code and simulate it.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Slots to simulate (arrivals in delay mode; default 1000000).
        #[arg(long)]
        horizon: Option<u64>,
        /// Explicit integer lengths (inline:… or file:PATH) instead of a solver design.
        #[arg(long)]
        lengths: Option<String>,
        /// Write the per-cycle trace CSV here (update scheme only).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Output file for the report JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run end-to-end consistency checks; exit 0 iff every check passes.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Slots (and arrivals) to simulate per check (default 1000000).
        #[arg(long)]
        horizon: Option<u64>,
        /// Explicit integer lengths to check instead of a solver design.
        #[arg(long)]
        lengths: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AGECODEC_LOG", "warn"))
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn setup(common: &CommonArgs) -> Result<(RunSpec, ConfigMap)> {
    let cfg = ConfigMap::load(common.config.as_deref())?;
    let spec = RunSpec::resolve(common, &cfg)?;
    Ok((spec, cfg))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Design { common, out } => {
            let (spec, cfg) = setup(&common)?;
            let out_dir = out
                .or_else(|| cfg.get("out").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            design::run(&spec, &out_dir)?;
            Ok(true)
        }
        Command::Sweep {
            common,
            grid,
            jobs,
            out,
            format,
        } => {
            let (spec, cfg) = setup(&common)?;
            let grid_text = grid
                .or_else(|| cfg.get("grid").map(str::to_string))
                .context("sweep needs --grid START:STOP:STEP")?;
            let grid = input::parse_grid(&grid_text)?;
            let jobs = input::pick(jobs, &cfg, "jobs")?;
            let format = match format {
                Some(format) => format,
                None => cfg
                    .get("format")
                    .map(input::parse_format)
                    .transpose()?
                    .unwrap_or(OutputFormat::Csv),
            };
            let out = out.or_else(|| cfg.get("out").map(PathBuf::from));
            sweep::run(&spec, &grid, jobs, format, out.as_deref())?;
            Ok(true)
        }
        Command::Simulate {
            common,
            horizon,
            lengths,
            trace,
            out,
        } => {
            let (spec, cfg) = setup(&common)?;
            let horizon = input::pick(horizon, &cfg, "horizon")?.unwrap_or(1_000_000);
            let lengths = lengths
                .or_else(|| cfg.get("lengths").map(str::to_string))
                .map(|text| input::parse_lengths(&text))
                .transpose()?;
            let out = out.or_else(|| cfg.get("out").map(PathBuf::from));
            simulate::run(&spec, horizon, lengths.as_ref(), trace.as_deref(), out.as_deref())?;
            Ok(true)
        }
        Command::Verify {
            common,
            horizon,
            lengths,
        } => {
            let (spec, cfg) = setup(&common)?;
            let horizon = input::pick(horizon, &cfg, "horizon")?.unwrap_or(1_000_000);
            let lengths = lengths
                .or_else(|| cfg.get("lengths").map(str::to_string))
                .map(|text| input::parse_lengths(&text))
                .transpose()?;
            verify::run(&spec, horizon, lengths.as_ref())
        }
    }
}
