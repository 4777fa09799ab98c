//! The `logicscan` command line.
//!
//! [`run`] parses arguments, loads the configuration and dispatches to one
//! subcommand. It writes to the streams it is given and returns the process
//! exit status: 0 on success, 1 when some functions were skipped or failed
//! their audit, 2 on usage or configuration errors.

pub mod config;
mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Config, ConfigError, EmbedderConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "logicscan", version, about = "Contrastive business-logic auditing for Solidity")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file (default: ./logicscan.toml when present)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON on standard output
    #[arg(long, global = true)]
    pub json: bool,
    /// Answer model prompts from a recorded transcript; no network access
    #[arg(long, global = true, value_name = "TRANSCRIPT", conflicts_with = "record")]
    pub replay: Option<PathBuf>,
    /// Capture every model exchange of this run into a transcript
    #[arg(long, global = true, value_name = "TRANSCRIPT")]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prepare corpus metadata
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Mine specifications from a corpus directory into the store
    Mine {
        /// Directory holding metadata.jsonl (or metadata.csv) and sources
        corpus_dir: PathBuf,
    },
    /// Synonym dictionary maintenance
    #[command(subcommand)]
    Dict(DictCommand),
    /// Audit the public functions of a Solidity file
    Check {
        target: PathBuf,
        /// Audit only this function
        #[arg(long = "fn", value_name = "NAME")]
        function: Option<String>,
        /// Report file (default: <target stem>.report.json)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Hide state-writing functions from the verifier
        #[arg(long)]
        no_writers: bool,
        /// Check every template condition instead of the majority
        #[arg(long)]
        no_aggregate: bool,
    },
    /// Score a report against ground-truth labels
    Eval {
        report: PathBuf,
        labels: PathBuf,
        #[arg(long, default_value = "dataset")]
        dataset: String,
        #[arg(long, default_value = "logicscan")]
        tool: String,
    },
    /// Inspect the store
    #[command(subcommand)]
    Db(DbCommand),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Keep contracts in the top fraction by both age and transaction count
    Filter {
        metadata: PathBuf,
        /// Survival fraction in (0, 1] (default from config, else 0.2)
        #[arg(long)]
        percentile: Option<f64>,
        /// Output JSON-lines file (default: standard output)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Assign business categories from contract names
    Categorize {
        metadata: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DictCommand {
    /// Condition names across stored specifications, most frequent first
    Rank {
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DbCommand {
    /// Record counts by category and Solidity version
    Stats,
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or inputs; nothing was changed.
    Config(String),
    /// The command started but could not finish.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Failed(_) => EXIT_PARTIAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) | Self::Failed(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

/// Runs one command line (program name first) and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return EXIT_OK;
                }
                _ => EXIT_CONFIG,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match commands::dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "logicscan: {e}");
            e.exit_code()
        }
    }
}
