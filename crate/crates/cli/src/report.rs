use std::io::Write;

use heisenberg_hsp::pipeline::PipelineTrace;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::ExperimentError;

/// One named comparison of an observed number against its expected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            expected,
            tolerance,
            passed: (observed - expected).abs() <= tolerance,
        }
    }

    /// A deviation that should vanish.
    pub fn zero(name: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        Self::new(name, deviation, 0.0, tolerance)
    }

    /// `observed ≥ bound`.
    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            expected: bound,
            tolerance: 0.0,
            passed: observed >= bound,
        }
    }

    /// Empirical frequency within three binomial standard deviations.
    pub fn binomial(name: impl Into<String>, successes: usize, n: usize, p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        let observed = if n == 0 { p } else { successes as f64 / n as f64 };
        let sigma = if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() };
        Self::new(name, observed, p, 3.0 * sigma + 1e-12)
    }
}

/// Empirical stage rates of the pipeline. Each is conditioned on the
/// previous stage having been reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRates {
    pub good_branch: f64,
    pub u2_success: Option<f64>,
    pub label_correct: Option<f64>,
}

/// Exact counterparts of [`StageRates`] plus end-to-end probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRates {
    pub good_branch: f64,
    pub u2_success: f64,
    pub label_correct: Option<f64>,
    pub recover_j: Option<f64>,
    pub one_shot: f64,
    pub solve: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
}

impl ChiSquare {
    /// Pearson statistic over cells with positive expected probability.
    /// Returns `None` if a zero-probability cell was observed.
    pub fn from_counts(counts: &[usize], probs: &[f64]) -> Option<Self> {
        let n: usize = counts.iter().sum();
        let mut statistic = 0.0;
        let mut cells: usize = 0;
        for (&c, &q) in counts.iter().zip(probs) {
            if q <= 1e-15 {
                if c > 0 {
                    return None;
                }
                continue;
            }
            let e = q * n as f64;
            statistic += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
        Some(Self {
            statistic,
            degrees_of_freedom: cells.saturating_sub(1),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub passed: bool,
    pub successes: Option<usize>,
    pub success_rate: Option<f64>,
    pub branch_rates: Option<StageRates>,
    pub exact: Option<ExactRates>,
    pub chi_square: Option<ChiSquare>,
    pub distribution: Option<Vec<f64>>,
    pub checks: Vec<Check>,
    pub wall_time_seconds: f64,
}

impl Aggregate {
    pub fn from_checks(checks: Vec<Check>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            successes: None,
            success_rate: None,
            branch_rates: None,
            exact: None,
            chi_square: None,
            distribution: None,
            checks,
            wall_time_seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<PipelineTrace>,
    pub aggregate: Aggregate,
}

/// Column order of trial CSV output.
pub const TRIAL_HEADER: [&str; 8] = ["k1", "k2", "m", "u2_success", "x", "i", "j", "verified"];
/// Column order of check CSV output, used by commands without trials.
pub const CHECK_HEADER: [&str; 5] = ["name", "observed", "expected", "tolerance", "passed"];

impl ExperimentReport {
    /// Pipeline commands write one trial per row. The verification commands
    /// write one check per row.
    pub fn emit(&self, format: Format, out: &mut dyn Write) -> Result<(), ExperimentError> {
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut *out, self).map_err(std::io::Error::from)?;
                out.write_all(b"\n")?;
            }
            Format::Csv => {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .has_headers(false)
                    .from_writer(&mut *out);
                if self.config.command.has_trials() {
                    w.write_record(TRIAL_HEADER).map_err(csv_io)?;
                    for t in &self.trials {
                        w.serialize(t).map_err(csv_io)?;
                    }
                } else {
                    w.write_record(CHECK_HEADER).map_err(csv_io)?;
                    for c in &self.aggregate.checks {
                        w.serialize(c).map_err(csv_io)?;
                    }
                }
                w.flush()?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self, format: Format) -> Result<Vec<u8>, ExperimentError> {
        let mut buf = Vec::new();
        self.emit(format, &mut buf)?;
        Ok(buf)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}
