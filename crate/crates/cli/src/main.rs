mod args;
mod commands;
mod fail;
mod input;
mod output;
mod synth;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = match serde_json::to_value(&cli.command) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Decompose(a) => commands::decompose(a, &config),
        Command::Metrics(a) => commands::metrics(a, &config),
        Command::Cluster(a) => commands::cluster(a, &config),
        Command::Synth(a) => synth::run(a, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
