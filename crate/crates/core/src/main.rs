use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = fairrm::cli::Cli::parse();
    match fairrm::cli::execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
