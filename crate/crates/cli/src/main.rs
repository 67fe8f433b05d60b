mod cli;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::{Cli, Command};
use error::CliError;

fn run() -> Result<(), CliError> {
    let args = config::expand(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let msg = e.render().to_string();
            let msg = msg.trim_start_matches("error: ").trim_end().to_string();
            return Err(CliError::Usage(msg));
        }
    };
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Compress(a) => commands::compress_cmd(a),
        Command::TrainNcb(a) => commands::train_ncb_cmd(a),
        Command::Decompress(a) => commands::decompress(a),
        Command::Render(a) => commands::render(a),
        Command::Bench(a) => commands::bench(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Inspect(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.token());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
