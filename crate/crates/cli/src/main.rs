use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = nowcast_cli::Cli::parse();
    match nowcast_cli::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
