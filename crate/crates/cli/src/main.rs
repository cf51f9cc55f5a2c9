//! Command-line front end for vine-copula classification.
//!
//! Every command is a pure function of its inputs, flags and seed; outputs
//! are byte-identical across re-runs and worker counts. Failures print a
//! single line `error: <Kind>: <message>` to stderr.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match args::merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), single_line(&e.to_string()));
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: Usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: InvalidArgument: {}", single_line(&e.to_string()));
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), single_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
