//! `uhls`: build a unified label hierarchy, train, evaluate and predict.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uhls_core::evaluation::{Criterion, Scheme};

use crate::config::ModelKind;

#[derive(Parser, Debug)]
#[command(name = "uhls", version, about = "Unified hierarchical label set entity typing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every config-driven command.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `run.model`.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `data.seed_hierarchy`.
    #[arg(long)]
    pub seed_hierarchy: Option<PathBuf>,
    /// Overrides `evaluation.scheme`.
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    /// Overrides `evaluation.criterion`.
    #[arg(long, value_parser = parse_criterion)]
    pub criterion: Option<Criterion>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: uhls_core::evaluation::EvalError| e.to_string())
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse().map_err(|e: uhls_core::evaluation::EvalError| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic benchmark corpus and a matching run config.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances_per_label: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Children per node of the ground-truth tree.
        #[arg(long, default_value_t = 5)]
        branching: usize,
    },
    /// Build the unified hierarchy and label mapping.
    BuildHierarchy(Common),
    /// Train the configured model kind.
    Train(Common),
    /// Evaluate a trained model on the merged test split.
    Evaluate(Common),
    /// Label mentions from a JSON-lines file.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Input file: one `{"id", "tokens", "start", "end"}` object per line; extra fields are ignored.
        #[arg(long)]
        input: PathBuf,
        /// Output file; defaults to `<out>/predict/<model>.jsonl`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the effective configuration with all defaults filled in.
    ShowConfig(Common),
}

/// A failed command and the exit code it maps to.
pub enum Failure {
    /// Bad flags or configuration: exit code 2.
    Usage(anyhow::Error),
    /// Anything that goes wrong while running: exit code 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

pub trait UsageContext<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T> UsageContext<T> for anyhow::Result<T> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(Failure::Usage)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { out, seed, instances_per_label, noise, branching } => {
            commands::generate(&out, seed, instances_per_label, noise, branching)
        }
        Command::BuildHierarchy(c) => commands::build_hierarchy(&c),
        Command::Train(c) => commands::train(&c),
        Command::Evaluate(c) => commands::evaluate(&c),
        Command::Predict { common, input, output } => commands::predict(&common, &input, output.as_deref()),
        Command::ShowConfig(c) => commands::show_config(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
