//! Command-line driver for the `weylwalk` toolkit.
//!
//! Every command is deterministic given its flags and `--seed`: files written
//! to the output directory and the JSON lines printed on stdout are
//! byte-identical across runs and across `--workers` settings.

mod commands;
mod config;
mod output;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use output::OutputDir;

/// Exit code for malformed flags or inputs that fail a precondition.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for a numerical contract violation, such as a transform value
/// that is not positive.
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(weylwalk::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        use weylwalk::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(E::InvalidInput(_) | E::Unsupported(_) | E::TooLarge(_)) => EXIT_USAGE,
            CliError::Core(
                E::DegenerateConditioning { .. }
                | E::AbsorbingState { .. }
                | E::NonPositiveTransform { .. }
                | E::NoConvergence(_),
            ) => EXIT_NUMERICAL,
            CliError::Core(E::Io(_) | E::Json(_)) | CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) if m.starts_with("error:") => f.write_str(m),
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Core(e) => write!(f, "error: {e}"),
            CliError::Io(e) => write!(f, "error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<weylwalk::Error> for CliError {
    fn from(e: weylwalk::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "weylwalk",
    version,
    about = "Random walks conditioned to stay in Weyl chambers",
    args_override_self = true,
    after_help = "Records on stdout are JSON lines carrying \"schema\": \"weylwalk/1\".\n\
                  Flags can also be given in a JSON object passed with --config; \
                  flags on the command line take precedence."
)]
pub struct Cli {
    /// JSON file whose keys mirror the long flags (`n_max` or `n-max`); an
    /// optional "command" key selects the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for output files.
    #[arg(long, global = true, env = "WEYLWALK_OUT_DIR", default_value = ".")]
    pub out: PathBuf,

    /// Master seed of all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Constants(commands::constants::ConstantsArgs),
    Tails(commands::tails::TailsArgs),
    Transform(commands::transform::TransformArgs),
    Limit(commands::limit::LimitArgs),
}

/// Parses `args` (including the program name), runs the command and writes
/// its records to `out`.
pub fn run(args: &[String], out: &mut dyn Write) -> CliResult<()> {
    let args = config::expand(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(out, "{e}")?;
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let dir = OutputDir::new(cli.out.clone());
    let mut records = Vec::new();
    let result = pool.install(|| {
        let buf: &mut dyn Write = &mut records;
        match &cli.command {
            Command::Constants(a) => commands::constants::run(a, buf),
            Command::Tails(a) => commands::tails::run(a, &cli, &dir, buf),
            Command::Transform(a) => commands::transform::run(a, &cli, &dir, buf),
            Command::Limit(a) => commands::limit::run(a, &cli, &dir, buf),
        }
    });
    out.write_all(&records)?;
    out.flush()?;
    result
}
