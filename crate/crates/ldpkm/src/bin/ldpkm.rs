use std::process::ExitCode;

use clap::Parser;
use ldpkm::cli::{execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if ldpkm::THEORY_ENABLED {
        eprintln!("refusing to run: built with the test-only `theory` feature");
        return ExitCode::from(2);
    }
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
