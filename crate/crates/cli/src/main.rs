//! `qdbc` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
//! verification failure.

mod args;
mod config;
mod error;
mod run;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    if let Err(e) = run::run(cli) {
        eprintln!("qdbc: {e}");
        std::process::exit(e.exit_code());
    }
}
