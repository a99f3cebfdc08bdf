use std::process::ExitCode;

use clap::Parser;
use simdoa::cli::{configure_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(cli, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("simdoa: {failure}");
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
