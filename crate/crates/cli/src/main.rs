use std::process::ExitCode;

use clap::Parser;
use heisenberg_hsp_cli::config::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(heisenberg_hsp_cli::main_exit_code(&cli))
}
