//! The `debias` pipeline: data generation, classifier pre-training,
//! reconstructor training, evaluation, the λ sweep and the spillover report.
//!
//! Every subcommand reads one JSON [`RunConfig`]. Exit codes: 0 on success,
//! 1 when a stage fails at run time, 2 for usage or configuration errors.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Paths, RunConfig, SweepGrid};
pub use svg::{emit_svg_line_chart, render_svg, Series};

/// Environment variable that fixes the worker-thread count.
pub const THREADS_ENV: &str = "DEBIAS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "debias", version, about = "HSIC-regularized image de-biasing pipeline")]
struct Cli {
    /// JSON run configuration; `{}` selects every default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `paths.report_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic train/test splits as PGM directories.
    Gen,
    /// Train and freeze the two-headed classifier.
    Pretrain,
    /// Train the reconstructor and report metrics before/after.
    Train,
    /// Re-evaluate saved checkpoints on the test split.
    Eval,
    /// One-epoch trainings over the λ grid, with CSV and SVG output.
    Sweep,
    /// Per-attribute parity change under the trained reconstructor.
    Spillover,
}

fn configure_threads() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(argv: Vec<OsString>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version are requests, not failures.
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Usage("missing required option --config <PATH>".into()))?;
    configure_threads()?;

    let mut raw = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        raw.set_seed(seed);
    }
    if let Some(out) = cli.out {
        raw.paths.report_dir = out;
    }
    let base = config_path.parent().map(PathBuf::from).unwrap_or_default();
    let cfg = raw.resolved(&base);

    match cli.command {
        Command::Gen => commands::gen(&raw, &cfg)?,
        Command::Pretrain => commands::pretrain(&cfg)?,
        Command::Train => {
            commands::train(&cfg)?;
        }
        Command::Eval => {
            commands::eval(&cfg)?;
        }
        Command::Sweep => {
            commands::sweep(&cfg)?;
        }
        Command::Spillover => {
            commands::spillover(&cfg)?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    match run(argv.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
                CliError::Usage(msg) => eprint!("{msg}"),
                CliError::Config(_) => eprintln!("{e}"),
            }
            e.exit_code()
        }
    }
}
