use clap::Parser;

use paretopool::cli::{run, Cli, LOG_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}
