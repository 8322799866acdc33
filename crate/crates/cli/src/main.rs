use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epidiff_cli::commands::{self, CqOptions, VerifyOptions};
use epidiff_cli::directions::parse_direction;
use epidiff_cli::problem::resolve_seed;
use epidiff_cli::{CliError, Instance, ProblemFile, Report};

/// Second-order variational analysis of composite problems min φ(x) + g(F(x)).
#[derive(Parser)]
#[command(name = "epidiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    file: PathBuf,
    /// Seed for every sampled check; overrides EPIDIFF_SEED and the file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Multipliers, τ, critical cone and the second subderivative along directions.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Direction as comma-separated entries; repeatable.
        #[arg(long = "dir", allow_hyphen_values = true)]
        dirs: Vec<String>,
    },
    /// Compare the closed-form second subderivative with the difference-quotient oracle.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long = "dir", allow_hyphen_values = true)]
        dirs: Vec<String>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, hide = true, default_value_t = 0.0, allow_hyphen_values = true)]
        formula_offset: f64,
    },
    /// Second-order optimality conditions, growth scan and subregularity certificate.
    Certify {
        #[command(flatten)]
        common: Common,
    },
    /// Metric subregularity constraint qualification evidence.
    CheckCq {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
    },
}

fn load(common: &Common) -> Result<Instance, CliError> {
    let file = ProblemFile::load(&common.file)?;
    let env = std::env::var("EPIDIFF_SEED").ok();
    let seed = resolve_seed(common.seed, env.as_deref(), file.seed)?;
    file.build(seed)
}

fn directions(texts: &[String], n: usize) -> Result<Option<Vec<nalgebra::DVector<f64>>>, CliError> {
    if texts.is_empty() {
        return Ok(None);
    }
    texts.iter().map(|t| parse_direction(t, n)).collect::<Result<Vec<_>, _>>().map(Some)
}

fn run(cmd: &Command) -> Result<Report, CliError> {
    match cmd {
        Command::Analyze { common, dirs } => {
            let inst = load(common)?;
            let dirs = directions(dirs, inst.prob.n())?;
            commands::analyze(&inst, dirs)
        }
        Command::Verify { common, dirs, t0, ratio, steps, formula_offset } => {
            let inst = load(common)?;
            let mut sched = inst.settings.schedule;
            if let Some(t) = t0 {
                sched.t0 = *t;
            }
            if let Some(r) = ratio {
                sched.ratio = *r;
            }
            if let Some(k) = steps {
                sched.steps = *k;
            }
            sched.validate().map_err(|e| CliError::validation("--t0/--ratio/--steps", e))?;
            let opts = VerifyOptions {
                dirs: directions(dirs, inst.prob.n())?,
                schedule: Some(sched),
                formula_offset: *formula_offset,
            };
            commands::verify(&inst, &opts)
        }
        Command::Certify { common } => commands::certify(&load(common)?),
        Command::CheckCq { common, samples, radius } => {
            commands::check_cq(&load(common)?, &CqOptions { samples: *samples, radius: *radius })
        }
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Analyze { .. } => "analyze",
        Command::Verify { .. } => "verify",
        Command::Certify { .. } => "certify",
        Command::CheckCq { .. } => "check-cq",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let report = run(&cli.command).unwrap_or_else(|e| commands::error_report(name(&cli.command), &e));
    print!("{}", report.render());
    ExitCode::from(report.exit_code as u8)
}
