use std::process::ExitCode;

use clap::Parser;
use dvr::cli::{execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(execute(&Cli::parse()))
}
