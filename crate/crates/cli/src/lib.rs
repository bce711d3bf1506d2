//! Experiment driver behind the `heis-hsp` binary.

pub mod config;
pub mod report;
pub mod suites;

use std::fs::File;
use std::io::{BufWriter, Write};

use heisenberg_hsp::pipeline::PipelineError;
use thiserror::Error;

use config::{Cli, ExperimentConfig, TOLERANCE_ENV};
use report::ExperimentReport;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_VERIFICATION_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl ExperimentError {
    pub fn exit_code(&self) -> u8 {
        match self {
            ExperimentError::ConfigInvalid(_) => EXIT_CONFIG,
            ExperimentError::Io(_) => EXIT_IO,
            ExperimentError::Pipeline(_) => EXIT_VERIFICATION_FAILED,
        }
    }
}

/// Resolves the configuration, runs the command and writes the report.
pub fn execute(cli: &Cli, tolerance: Option<&str>) -> Result<ExperimentReport, ExperimentError> {
    let config = ExperimentConfig::resolve(cli.command, &cli.args, tolerance)?;
    let report = suites::run(&config)?;
    match &config.output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            report.emit(config.format, &mut out)?;
            out.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            report.emit(config.format, &mut out)?;
            out.flush()?;
        }
    }
    Ok(report)
}

/// Runs the CLI and maps the outcome to an exit code.
pub fn main_exit_code(cli: &Cli) -> u8 {
    let tolerance = std::env::var(TOLERANCE_ENV).ok();
    match execute(cli, tolerance.as_deref()) {
        Ok(report) => {
            let failed: Vec<_> = report.aggregate.checks.iter().filter(|c| !c.passed).collect();
            for c in &failed {
                eprintln!(
                    "FAILED {}: observed {} expected {} (tolerance {})",
                    c.name, c.observed, c.expected, c.tolerance
                );
            }
            if report.aggregate.passed {
                EXIT_PASS
            } else {
                EXIT_VERIFICATION_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
