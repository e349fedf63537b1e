use clap::Parser;

use golnet::cli::{exit_code, run, Cli};

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
