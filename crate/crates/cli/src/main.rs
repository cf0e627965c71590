use std::process::ExitCode;

use clap::Parser;
use gna_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match gna_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gnasim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
