use std::process::ExitCode;

use clap::Parser;
use emogest_cli::args::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    ExitCode::from(emogest_cli::run(&cli))
}
