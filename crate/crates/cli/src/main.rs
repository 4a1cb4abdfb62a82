use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = tutor_cli::cli::Cli::parse();
    match tutor_cli::cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
