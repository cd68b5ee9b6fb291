//! `demscale` command-line front-end.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DEMSCALE_LOG", "info"))
        .format_timestamp_millis()
        .init();

    let result = match cli.command {
        Command::PrepareGdem(a) => commands::prepare_gdem(a),
        Command::Synth(a) => commands::synth(a),
        Command::SegmentGround(a) => commands::segment_ground(a),
        Command::Scale(a) => commands::scale(a),
        Command::Eval(a) => commands::eval(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(2)
        }
    }
}
