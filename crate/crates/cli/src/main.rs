//! `postcon`: rate calculators and contraction experiments.
//!
//! Exit codes: 0 pass, 1 contract violation, 2 usage or config error,
//! 3 inconclusive (some estimate flagged unreliable).

mod experiments;
mod output;
mod plot;
mod rates_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Violation,
    Inconclusive,
}

impl Status {
    fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Violation => 1,
            Status::Inconclusive => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "postcon", version, about = "Posterior contraction rates and consistency experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct OutDir {
    /// Output directory for CSV and SVG artifacts.
    #[arg(long, env = "POSTCON_OUT", default_value = "postcon-out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a theoretical rate.
    Rates {
        #[command(subcommand)]
        kind: RatesKind,
        /// Also write the printed table as CSV.
        #[arg(long, global = true)]
        csv: Option<PathBuf>,
    },
    /// Gaussian-case rate comparison over a grid of prior smoothness t.
    Figure1 {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.2, 2.5, 3.0, 4.0, 6.0])]
        t: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Form::Theorem)]
        form: Form,
        #[command(flatten)]
        out: OutDir,
    },
    /// Conjugate Gaussian small-noise contraction experiment.
    Contract(ContractArgs),
    /// Uniform-prior contraction from pointwise data (elliptic or regression).
    Elliptic(EllipticArgs),
    /// Two-atom-family example where the posterior concentrates on the wrong set.
    Inconsistency(InconsistencyArgs),
    /// Monte Carlo small-ball probabilities against the analytic lower bound.
    Smallball(SmallBallArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Theorem,
    Corollary,
}

#[derive(Subcommand, Debug)]
pub enum RatesKind {
    /// Gaussian prior k^-t, noise k^-r.
    Gaussian {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, value_enum, default_value_t = Form::Theorem)]
        form: Form,
    },
    /// General program at fixed lambda.
    General {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        e: f64,
        #[arg(long, value_enum, default_value_t = Form::Theorem)]
        form: Form,
    },
    /// Priors bounded in the s-norm.
    NoTail {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        sigma0: f64,
        #[arg(long)]
        rho: f64,
    },
    /// Large-data regression with a beta-Hölder prior.
    LargeData {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        rho: f64,
    },
    /// Elliptic inverse problem.
    Elliptic {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        rho: f64,
    },
    /// Elliptic inverse problem with a uniform prior.
    Uniform {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        r: f64,
    },
    /// Tail-exponent condition for consistency.
    ConsistencyCondition {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        e: f64,
    },
}

#[derive(Args, Debug)]
pub struct ContractArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// conjugate-t2.5, conjugate-t3 or conjugate-t4.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub trunc: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub n_grid: Option<Vec<u64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Posterior draws per (n, replicate).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
pub struct EllipticArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Number of mesh cells.
    #[arg(long)]
    pub mesh: Option<usize>,
    /// `elliptic` (observe the pressure) or `identity` (regression).
    #[arg(long)]
    pub forward: Option<String>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub n_grid: Option<Vec<u64>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
pub struct InconsistencyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; noise seed i is `seed + i`.
    #[arg(long, required_unless_present = "zero_noise")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub n_grid: Option<Vec<u64>>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Set every noise draw to zero.
    #[arg(long)]
    pub zero_noise: bool,
    /// Number of noise seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Prior atoms kept beyond ceil(sqrt(n)).
    #[arg(long)]
    pub k_max_extra: Option<u64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
pub struct SmallBallArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub mesh: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Summability index for the analytic bound.
    #[arg(long)]
    pub nu: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rates { kind, csv } => rates_cmd::run_rates(kind, csv.as_deref()),
        Command::Figure1 { r, t, form, out } => rates_cmd::run_figure1(*r, t, *form, &out.out),
        Command::Contract(a) => experiments::run_contract(a, &a.out.out),
        Command::Elliptic(a) => experiments::run_elliptic(a, &a.out.out),
        Command::Inconsistency(a) => experiments::run_inconsistency(a, &a.out.out),
        Command::Smallball(a) => experiments::run_smallball(a, &a.out.out),
    };
    match result {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
