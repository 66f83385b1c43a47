mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use textcause::ErrorClass;

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Contract | ErrorClass::Io => 2,
        ErrorClass::Lock => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let commands: Vec<String> = args::Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let argv = match config::expand_args(std::env::args().collect(), &commands) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(e.class()));
        }
    };
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
