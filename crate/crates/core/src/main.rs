use std::process::ExitCode;

use clap::Parser;
use qrtag::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.message);
            if !outcome.message.ends_with('\n') {
                println!();
            }
            if outcome.bounds_ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("qrtag: acceptance bound violated");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("qrtag: {e:#}");
            ExitCode::FAILURE
        }
    }
}
