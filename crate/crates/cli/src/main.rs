use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod report;
mod table;

use report::{emit, Exit};

/// Batch runner for operator-valued kernel computations.
///
/// Exit status: 0 ok, 1 tolerance or positivity failure, 2 bad input,
/// 3 failed hypothesis (reported as a structured condition).
#[derive(Parser, Debug)]
#[command(name = "opkern", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Input spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Numerical tolerance; module defaults apply when absent.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the timestamp out of JSON reports.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Args, Debug, Clone)]
pub struct Seed {
    /// RNG seed.
    #[arg(long, env = "OPKERN_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct Check {
    /// Relative bound on reported residuals.
    #[arg(long, default_value_t = 1e-8)]
    pub check_tol: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Positive definiteness of a kernel.
    CheckPd {
        #[command(flatten)]
        common: Common,
    },
    /// Minimal factorization `K(s,t) = V(s)* V(t)`.
    Factorize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        check: Check,
    },
    /// Transfer-function realization of an equivalent kernel system.
    Realize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        check: Check,
    },
    /// Radon-Nikodym derivative of `l` with respect to `k`.
    Rn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        check: Check,
    },
    /// Gaussian sample paths as CSV.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: Seed,
        /// Number of paths.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Monte Carlo check of the conditional law of a joint process.
    McVerify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seed: Seed,
        /// Number of joint paths.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        /// Allowed deviation in standard errors.
        #[arg(long, default_value_t = 5.0)]
        sigmas: f64,
    },
    /// Conditional law given the `observed_l` field of a joint spec file.
    Condition {
        #[command(flatten)]
        common: Common,
        /// Use a pseudo-inverse for singular `L`.
        #[arg(long)]
        pinv: bool,
    },
    /// Fit kernel ridge regression to a training CSV.
    KrrFit {
        #[command(flatten)]
        common: Common,
        /// Training CSV.
        #[arg(long)]
        train: PathBuf,
    },
    /// Evaluate a saved fit at query points.
    KrrPredict {
        #[command(flatten)]
        common: Common,
        /// Fit JSON written by `krr-fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Query CSV.
        #[arg(long)]
        queries: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, result) = match &cli.command {
        Command::CheckPd { common } => (common, commands::check_pd(common)),
        Command::Factorize { common, check } => (common, commands::factorize(common, check)),
        Command::Realize { common, check } => (common, commands::realize(common, check)),
        Command::Rn { common, check } => (common, commands::rn(common, check)),
        Command::Sample { common, seed, samples } => (common, commands::sample(common, seed.seed, *samples)),
        Command::McVerify {
            common,
            seed,
            samples,
            sigmas,
        } => (common, commands::mc_verify(common, seed.seed, *samples, *sigmas)),
        Command::Condition { common, pinv } => (common, commands::condition(common, *pinv)),
        Command::KrrFit { common, train } => (common, commands::krr_fit(common, train)),
        Command::KrrPredict { common, fit, queries } => (common, commands::krr_predict(common, fit, queries)),
    };
    match result {
        Ok(outcome) => {
            if let Err(e) = emit(&outcome, common.out.as_deref(), !common.no_timestamp) {
                eprintln!("opkern: cannot write output: {e}");
                return ExitCode::from(Exit::Input as u8);
            }
            ExitCode::from(outcome.exit as u8)
        }
        Err(e) => {
            eprintln!("opkern: {}", e.0);
            ExitCode::from(Exit::Input as u8)
        }
    }
}
