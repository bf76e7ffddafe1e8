//! Command-line front end: argument parsing, layered configuration and the
//! exit-code contract (0 success, 1 domain failure, 2 usage or environment).

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_analyze, cmd_annotate, cmd_evaluate, cmd_generate, cmd_ingest, cmd_train, TrainFiles};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DOMAIN, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<pluralism_core::Error> for CliError {
    fn from(e: pluralism_core::Error) -> Self {
        use pluralism_core::Error::*;
        let code = match e {
            Io { .. } | Config(_) => EXIT_USAGE,
            _ => EXIT_DOMAIN,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "pluralism", version, about = "Ethical-pluralism classification runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a case file and print its dataset report.
    Ingest(CommonArgs),
    /// Write a synthetic case file and matching embeddings.
    Generate(GenerateArgs),
    /// Split, fit the stack, and write the model, report and predictions.
    Train(CommonArgs),
    /// Run a four-arm ablation table.
    Evaluate(CommonArgs),
    /// Write plot data and analytics for a trained run.
    Analyze(AnalyzeArgs),
    /// Fill priors from a chat-completion endpoint.
    Annotate(AnnotateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Case file (.csv or .jsonl).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Embedding file path, `hash` or `hash:d1,d2,d3`.
    #[arg(long)]
    pub embeddings: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `features` or `transformers`.
    #[arg(long)]
    pub ablation: Option<String>,
    /// Calibration temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Out-of-fold folds for stacking.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Latent overlap between subtheories, in [0, 1].
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Cases per subtheory.
    #[arg(long)]
    pub per_class: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model artifact; defaults to `<out>/model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Precomputed 2-D coordinates (case_id,x,y) used instead of PCA.
    #[arg(long)]
    pub coords: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Chat-completion endpoint URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Requests per second; 0 disables throttling.
    #[arg(long)]
    pub rate: Option<f64>,
}

/// Prints a line to stdout, ignoring a closed pipe.
pub(crate) fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(&a).map(|report| emit(&report)),
        Command::Generate(a) => cmd_generate(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|files| emit(&format!("wrote {}", files.report.display()))),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|table| emit(table.trim_end())),
        Command::Analyze(a) => cmd_analyze(&a).map(|_| ()),
        Command::Annotate(a) => cmd_annotate(&a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
