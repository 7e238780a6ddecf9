//! Batch experiment runner for the spectral block-coordinate solver.

pub mod config;
pub mod output;
pub mod region;
pub mod runner;
pub mod selftest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_seeds, Experiment, ExperimentConfig, Format};
pub use runner::{run_experiment, GenSdpRow, QcqpRow, Rows, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spectral-bcd", version, about = "Spectral block-coordinate solver experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of instances and write results, summary and manifest.
    Run(RunArgs),
    /// Write the point cloud for one QCQP instance.
    Region(RegionArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    /// Matrix sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Constraint counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Seeds: `0..9` (inclusive), `3` or a comma-separated mix.
    #[arg(long, value_parser = parse_seed_arg)]
    pub seeds: Option<Seeds>,
    /// Band widths, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub delta: Option<Vec<f64>>,
    /// Stationarity tolerance for all three phases.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Solver starts per QCQP band width.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Randomization draws per rounding.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Angles in the QCQP grid oracle.
    #[arg(long)]
    pub angles: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write per-iteration records to trace.jsonl.
    #[arg(long)]
    pub trace: bool,
    /// JSON config file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Seeds(pub Vec<u64>);

fn parse_seed_arg(s: &str) -> Result<Seeds, String> {
    parse_seeds(s).map(Seeds)
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = spectral_bcd::apps::qcqp::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl RunArgs {
    /// The config file (or defaults) with flags applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(e) = self.experiment {
            cfg.experiment = e;
        }
        if let Some(n) = &self.n {
            cfg.n = n.clone();
        }
        if let Some(m) = &self.m {
            cfg.m = m.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.0.clone();
        }
        if let Some(d) = &self.delta {
            cfg.deltas = d.clone();
        }
        if self.eps.is_some() {
            cfg.eps = self.eps;
        }
        if let Some(r) = self.restarts {
            cfg.restarts = r;
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(a) = self.angles {
            cfg.angles = a;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        cfg.trace |= self.trace;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs a batch. Outputs are written even when some instances fail; the
/// first instance failure then becomes the error.
pub fn execute_run(args: &RunArgs) -> Result<RunOutput, CliError> {
    let cfg = args.resolve()?;
    let run = run_experiment(&cfg);
    output::write_all(&cfg, &run)?;
    if let Some(first) = run.errors.first() {
        return Err(CliError::Numeric(format!("{} instance(s) failed; first: {first}", run.errors.len())));
    }
    Ok(run)
}

pub fn execute_region(args: &RegionArgs) -> Result<PathBuf, CliError> {
    if args.m == 0 {
        return Err(CliError::Config("--m must be at least 1".into()));
    }
    if !(args.delta >= 0.0 && args.delta.is_finite()) {
        return Err(CliError::Config("--delta must be finite and nonnegative".into()));
    }
    if args.grid < 2 || args.samples == 0 || args.restarts == 0 {
        return Err(CliError::Config("--grid must be at least 2, --samples and --restarts at least 1".into()));
    }
    let cfg = region::RegionConfig {
        m: args.m,
        seed: args.seed,
        delta: args.delta,
        grid: args.grid,
        samples: args.samples,
        restarts: args.restarts,
        ..Default::default()
    };
    region::write_region(&args.out, &cfg)
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => execute_run(a).map(|run| {
            eprintln!("wrote {} row(s)", run.rows.len());
        }),
        Command::Region(a) => execute_region(a).map(|p| eprintln!("wrote {}", p.display())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
