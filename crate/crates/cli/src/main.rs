mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fgpinn::autodiff::Activation;
use fgpinn::problem::BenchmarkId;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fgpinn::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Work finished but something numeric failed; the message is printed
    /// and the process exits with code 3.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Failed(_) => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fgpinn", version, about = "Frequency-guided PINN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, value_parser = parse_benchmark)]
    pub benchmark: Option<BenchmarkId>,
    /// TOML config, or a report JSON whose `config` is reused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub modules: Option<usize>,
    #[arg(long)]
    pub interior: Option<usize>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Keep per-evaluation parameter snapshots in the run directory.
    #[arg(long)]
    pub keep_checkpoints: bool,
}

impl Common {
    pub fn overrides(&self) -> config::Overrides {
        config::Overrides {
            benchmark: self.benchmark,
            modules: self.modules,
            interior: self.interior,
            activation: self.activation,
            iters: self.iters,
            seed: self.seed,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ModulesInterior,
    Activations,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write its report.
    Run(Common),
    /// Train a grid of configurations and write a table.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "modules-interior")]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        modules_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1000,3000,5000")]
        interior_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "sin,cos,tanh,sigmoid", value_parser = parse_activation)]
        activations_list: Vec<Activation>,
        /// Cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train the FG network and the plain baseline on the same points.
    Compare(Common),
    /// Run the oracle self-checks.
    Verify {
        /// Networks per activation and module count in the jet check.
        #[arg(long, default_value_t = 13)]
        nets: usize,
        /// Scale activation second derivatives to exercise the harness.
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
    },
}

fn parse_benchmark(s: &str) -> Result<BenchmarkId, String> {
    s.parse().map_err(|e: fgpinn::Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: fgpinn::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => commands::run(&c),
        Command::Compare(c) => commands::compare(&c),
        Command::Sweep {
            common,
            axis,
            modules_list,
            interior_list,
            activations_list,
            jobs,
        } => commands::sweep(
            &common,
            commands::SweepSpec {
                axis,
                modules: modules_list,
                interior: interior_list,
                activations: activations_list,
                jobs,
            },
        ),
        Command::Verify { nets, inject_fault } => commands::verify(nets, inject_fault),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
