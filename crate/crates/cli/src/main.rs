use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = dclr_cli::Cli::parse();
    match dclr_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            for line in format!("{e:#}").lines() {
                eprintln!("error: {line}");
            }
            ExitCode::FAILURE
        }
    }
}
