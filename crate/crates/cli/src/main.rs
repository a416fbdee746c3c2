//! `hercules` — profiling and cluster-provisioning experiment runner.
//!
//! Every command reads one TOML scenario config (resolved through
//! `--config`, then `$HERCULES_CONFIG_DIR`), applies flag overrides, and
//! writes deterministic columnar text files into `--out-dir`. Exit codes:
//! 0 success, 2 config error, 3 infeasible scenario, 4 internal error.

mod commands;
mod config;
mod fsio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use fsio::Failure;

const DEFAULT_CONFIG: &str = "hercules.toml";

#[derive(Parser)]
#[command(
    name = "hercules",
    version,
    about = "Two-stage scheduler for heterogeneous recommendation-inference clusters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config file (TOML); missing default name runs on builtins.
    #[arg(long, default_value = DEFAULT_CONFIG, global = true)]
    config: PathBuf,
    /// Override the config's random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for emitted files.
    #[arg(long, default_value = "out", global = true)]
    out_dir: PathBuf,
    /// Worker threads for parallel sub-runs (0 = all cores).
    #[arg(long, default_value_t = 0, global = true)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Profile (model, server) pairs into an efficiency table.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Comma-separated model names (default: whole catalog).
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Comma-separated server types (default: whole catalog).
        #[arg(long, value_delimiter = ',')]
        servers: Vec<String>,
    },
    /// Provision the scenario's cluster under each requested policy.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Comma-separated policies (default: config list).
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
    },
    /// Sweep the model-evolution schedule on CPU-only and accelerated clusters.
    Evolve {
        #[command(flatten)]
        common: Common,
    },
    /// Generate the scenario's diurnal load traces as CSV files.
    TraceGen {
        #[command(flatten)]
        common: Common,
    },
    /// Parse and semantically check the scenario config.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Profile { common, .. }
            | Command::Serve { common, .. }
            | Command::Evolve { common }
            | Command::TraceGen { common }
            | Command::ValidateConfig { common } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let is_default = common.config.as_os_str() == DEFAULT_CONFIG;
    let mut cfg = match fsio::resolve_config(&common.config, is_default)? {
        Some(path) => ExperimentConfig::parse_toml(&fsio::read_file(&path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.command.common())?;
    match &cli.command {
        Command::Profile {
            common,
            models,
            servers,
        } => commands::cmd_profile(&cfg, &common.out_dir, common.jobs, models, servers),
        Command::Serve { common, policies } => {
            commands::cmd_serve(&cfg, &common.out_dir, policies)
        }
        Command::Evolve { common } => commands::cmd_evolve(&cfg, &common.out_dir),
        Command::TraceGen { common } => commands::cmd_trace_gen(&cfg, &common.out_dir),
        Command::ValidateConfig { .. } => commands::cmd_validate(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code as u8)
        }
    }
}
