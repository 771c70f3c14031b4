//! `crossalign` command-line entry point.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use crossalign::alignment::GammaMode;
use crossalign::imgio::CropMode;
use crossalign::losses::GradientOperator;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Validation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Validation(m) => f.write_str(m),
        }
    }
}

impl From<crossalign::Error> for CliError {
    fn from(e: crossalign::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "crossalign", version, about = "Cross-dataset channel alignment and fusion evaluation")]
struct Cli {
    /// Worker threads (default: logical CPUs)
    #[arg(long, global = true, env = "CROSSALIGN_JOBS")]
    jobs: Option<usize>,

    /// Plain-text `key = value` configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a configuration key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select the K closest external patches and gamma-align them to the target set
    Align(AlignArgs),
    /// Produce weak/aggressive view pairs and scheduled SSL losses
    Augment(AugmentArgs),
    /// Evaluate the nine fusion metrics over a directory of triples
    Metrics(MetricsArgs),
    /// Evaluate the training objectives for one sample
    Loss(LossArgs),
    /// Derived reports over metric tables
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
    /// Compare RGB distributions of target, external and aligned sets
    Stats(StatsArgs),
    /// Print the resolved configuration
    Config,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[arg(long, value_name = "DIR")]
    pub external: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub target: PathBuf,
    /// Number of patches to keep
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "aligned")]
    pub out: PathBuf,
    #[arg(long)]
    pub patch_size: Option<u32>,
    /// closed_form or mean_exact
    #[arg(long)]
    pub gamma_mode: Option<GammaMode>,
    /// grid or random
    #[arg(long)]
    pub crop_mode: Option<CropMode>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Current training step m
    #[arg(long)]
    pub step: u64,
    /// Total training steps M
    #[arg(long)]
    pub total: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub crop_size: Option<u32>,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long, value_name = "DIR")]
    pub dir: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    /// Sample stem; images are `{STEM}_ir.png`, `{STEM}_vis.png`, `{STEM}_fused.png`
    #[arg(long, value_name = "STEM")]
    pub triple: String,
    /// Directory holding `{STEM}_{hf,lf}_{ir,vis}.fmap`
    #[arg(long, value_name = "DIR")]
    pub features: PathBuf,
    /// Image directory (defaults to the features directory)
    #[arg(long, value_name = "DIR")]
    pub dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub step: u64,
    #[arg(long)]
    pub total: Option<u64>,
    /// sobel or forward-diff
    #[arg(long)]
    pub gradient: Option<GradientOperator>,
}

#[derive(Subcommand, Debug)]
enum ReportCommand {
    /// Percent change of every metric between two metric tables
    Degrade(DegradeArgs),
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// In-distribution metric table
    #[arg(long, value_name = "CSV")]
    pub id: PathBuf,
    /// Out-of-distribution metric table
    #[arg(long, value_name = "CSV")]
    pub ood: PathBuf,
    #[arg(long, default_value = "method")]
    pub method: String,
    /// Write the report here instead of standard output
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long, value_name = "DIR")]
    pub target: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub before: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub after: PathBuf,
    /// Directory for `distribution.csv` and `distribution_summary.json`
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    config.apply_overrides(&cli.set)?;
    Ok(config)
}

fn init_pool(jobs: Option<usize>) -> Result<(), CliError> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Validation("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_pool(cli.jobs)?;
    let mut config = resolve_config(&cli)?;
    match cli.command {
        Command::Align(args) => commands::align(&args, &mut config),
        Command::Augment(args) => commands::augment(&args, &mut config),
        Command::Metrics(args) => commands::metrics(&args, &config),
        Command::Loss(args) => commands::loss(&args, &mut config),
        Command::Report {
            command: ReportCommand::Degrade(args),
        } => commands::degrade(&args),
        Command::Stats(args) => commands::stats(&args),
        Command::Config => {
            config.validate()?;
            print!("{}", config.render());
            Ok(())
        }
    }
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Align(_) => "align",
        Command::Augment(_) => "augment",
        Command::Metrics(_) => "metrics",
        Command::Loss(_) => "loss",
        Command::Report { .. } => "report",
        Command::Stats(_) => "stats",
        Command::Config => "config",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = subcommand_name(&cli.command);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            // same shape as clap's own usage errors, with the subcommand's usage line
            let mut root = Cli::command();
            root.build();
            let mut sub = root.find_subcommand(name).cloned().unwrap_or(root);
            let _ = sub.error(clap::error::ErrorKind::MissingRequiredArgument, msg).print();
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
