use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use heisenberg_hsp::field::FieldPrime;
use heisenberg_hsp::group::SubgroupId;
use heisenberg_hsp::linalg::DEFAULT_TOLERANCE;
use heisenberg_hsp::pipeline::U2Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ExperimentError;

/// Environment variable overriding the comparison tolerance.
pub const TOLERANCE_ENV: &str = "HEIS_HSP_TOLERANCE";

/// Largest prime for sampled experiments.
pub const MAX_SAMPLED_PRIME: u32 = 31;
/// Largest prime for suites that build `p³`-dimensional dense objects.
pub const MAX_DENSE_PRIME: u32 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "heis-hsp",
    version,
    about = "Exact and Monte-Carlo experiments for Heisenberg-group hidden subgroup algorithms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Homomorphism, character and Fourier-transform identities.
    RepVerify,
    /// Hidden subgroup state identities.
    StateVerify,
    /// Clebsch-Gordan conjugation and accounting identities.
    CgVerify,
    /// Weak Fourier sampling distributions against closed forms.
    SampleIrreps,
    /// The two-copy conjugacy algorithm.
    SolveHscp,
    /// The full hidden subgroup solver.
    SolveHsp,
    /// Equivalence of the reduced PGM states with the Clebsch-Gordan output.
    PgmCompare,
    /// Exact distribution of the measured label.
    ExactDist,
}

impl Command {
    /// Commands that materialize `p³`-dimensional dense objects.
    fn dense(self) -> bool {
        matches!(
            self,
            Command::RepVerify
                | Command::StateVerify
                | Command::CgVerify
                | Command::PgmCompare
                | Command::ExactDist
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::RepVerify => "rep-verify",
            Command::StateVerify => "state-verify",
            Command::CgVerify => "cg-verify",
            Command::SampleIrreps => "sample-irreps",
            Command::SolveHscp => "solve-hscp",
            Command::SolveHsp => "solve-hsp",
            Command::PgmCompare => "pgm-compare",
            Command::ExactDist => "exact-dist",
        }
    }

    /// Commands whose reports carry per-trial traces.
    pub fn has_trials(self) -> bool {
        matches!(self, Command::SolveHscp | Command::SolveHsp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum U2Arg {
    Isometry,
    Probabilistic,
}

impl From<U2Arg> for U2Mode {
    fn from(a: U2Arg) -> Self {
        match a {
            U2Arg::Isometry => U2Mode::Isometry,
            U2Arg::Probabilistic => U2Mode::Probabilistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Odd prime p.
    #[arg(long, global = true, default_value_t = 5)]
    pub prime: u32,
    /// Hidden subgroup (Full, T, C, N:i, N:inf, A:i,j, A:inf,j) or "random".
    #[arg(long, global = true, default_value = "random")]
    pub subgroup: String,
    #[arg(long, global = true, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long = "u2-mode", global = true, value_enum, default_value_t = U2Arg::Isometry)]
    pub u2_mode: U2Arg,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long = "max-repetitions", global = true, default_value_t = 50)]
    pub max_repetitions: usize,
}

/// Fully resolved run configuration, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub prime: u32,
    pub subgroup: String,
    pub trials: usize,
    pub mode: Mode,
    pub u2_mode: U2Mode,
    pub seed: u64,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub max_repetitions: usize,
    pub tolerance: f64,
}

impl ExperimentConfig {
    /// Validates arguments. `tolerance` is the raw value of
    /// [`TOLERANCE_ENV`], if set.
    pub fn resolve(
        command: Command,
        args: &CommonArgs,
        tolerance: Option<&str>,
    ) -> Result<Self, ExperimentError> {
        let invalid = |m: String| Err(ExperimentError::ConfigInvalid(m));
        let prime = FieldPrime::new(args.prime)
            .map_err(|e| ExperimentError::ConfigInvalid(format!("--prime {}: {e}", args.prime)))?;
        if command.dense() && args.prime > MAX_DENSE_PRIME {
            return invalid(format!(
                "{} builds dense p^3 objects; --prime must be at most {MAX_DENSE_PRIME}",
                command.name()
            ));
        }
        if args.prime > MAX_SAMPLED_PRIME {
            return invalid(format!("--prime must be at most {MAX_SAMPLED_PRIME}"));
        }
        let tolerance = match tolerance {
            None => DEFAULT_TOLERANCE,
            Some(raw) => match raw.trim().parse::<f64>() {
                Ok(t) if t.is_finite() && t > 0.0 => t,
                _ => return invalid(format!("{TOLERANCE_ENV}={raw:?} is not a positive number")),
            },
        };
        let subgroup = resolve_subgroup(command, prime, &args.subgroup, args.seed)?;
        Ok(Self {
            command,
            prime: args.prime,
            subgroup: subgroup.to_string(),
            trials: args.trials,
            mode: args.mode,
            u2_mode: args.u2_mode.into(),
            seed: args.seed,
            format: args.format,
            output: args.output.clone(),
            max_repetitions: args.max_repetitions,
            tolerance,
        })
    }

    pub fn field(&self) -> FieldPrime {
        FieldPrime::new(self.prime).expect("validated")
    }

    pub fn subgroup_id(&self) -> SubgroupId {
        SubgroupId::parse(&self.subgroup, self.field()).expect("validated")
    }

    /// Independent generator for trial `index`.
    pub fn trial_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn resolve_subgroup(
    command: Command,
    prime: FieldPrime,
    text: &str,
    seed: u64,
) -> Result<SubgroupId, ExperimentError> {
    let s = if text.eq_ignore_ascii_case("random") {
        // one draw from A(i,j) ∪ {T}, on a stream no trial uses
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let p = prime.get() as usize;
        let pick = rng.random_range(0..p * p + 1);
        if pick == p * p {
            SubgroupId::Trivial
        } else {
            SubgroupId::A(prime.residue((pick / p) as i64), prime.residue((pick % p) as i64))
        }
    } else {
        SubgroupId::parse(text, prime)
            .map_err(|e| ExperimentError::ConfigInvalid(format!("--subgroup {text:?}: {e}")))?
    };
    let ok = match command {
        Command::SolveHscp | Command::SolveHsp => {
            matches!(s, SubgroupId::A(..) | SubgroupId::Trivial)
        }
        Command::ExactDist => matches!(s, SubgroupId::A(..)),
        _ => true,
    };
    if !ok {
        return Err(ExperimentError::ConfigInvalid(format!(
            "{} needs a subgroup of the form A:i,j{}, got {s}",
            command.name(),
            if command.has_trials() { " or T" } else { "" }
        )));
    }
    Ok(s)
}
