//! Command-line interface: argument parsing, configuration and report
//! emission. Exit codes are 0 on success, 2 for input or format errors, 3 for
//! solver errors and 4 for configuration errors.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CommandError, Inputs};
use config::RunConfig;

/// Environment variable holding the log filter, e.g. `PARETOPOOL_LOG=debug`.
pub const LOG_ENV: &str = "PARETOPOOL_LOG";

#[derive(Debug, Parser)]
#[command(name = "paretopool", version, about = "Pareto-optimal risk sharing with distortion risk measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Claims CSV; overrides the config's data path.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    /// Output directory; overrides the config's output dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Loss column of the claims CSV.
    #[arg(long, global = true)]
    pub loss_column: Option<String>,

    /// Expected Shortfall level of the central insurer.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// Welfare split: `equal`, `last` or a file of shares.
    #[arg(long, global = true)]
    pub weights: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Summary statistics and correlation of the monthly loss panel.
    Summary,
    /// Decentralized Pareto optimum, side payments and welfare.
    PoDecentralized,
    /// Centralized Pareto optimum with an Expected Shortfall insurer.
    PoCentralized,
    /// Stackelberg premiums of the centralized contract.
    Stackelberg,
    /// Average welfare gains over a parameter grid.
    Sweep,
    /// Parse and validate the configuration only.
    ValidateConfig,
}

fn execute(cli: &Cli) -> Result<Vec<String>, CommandError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config::ConfigError("--config is required".into()))?;
    let mut inputs = Inputs::new(RunConfig::load(path)?);
    inputs.data = cli.data.clone();
    inputs.out = cli.out.clone();
    inputs.loss_column = cli.loss_column.clone();
    inputs.alpha = cli.alpha;
    inputs.weights = cli.weights.clone();

    let out = match cli.command {
        Command::ValidateConfig => return Ok(vec![commands::validate_config(&inputs)?]),
        Command::Summary => commands::summary(&inputs)?,
        Command::PoDecentralized => commands::po_decentralized(&inputs)?,
        Command::PoCentralized => commands::po_centralized(&inputs)?,
        Command::Stackelberg => commands::stackelberg(&inputs)?,
        Command::Sweep => commands::sweep(&inputs)?,
    };
    Ok(out.written().iter().map(|p| format!("wrote {}", p.display())).collect())
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
