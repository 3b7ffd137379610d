//! Command-line front end: problem files in, trace CSVs and check reports
//! out.
//!
//! Exit codes: 0 when every enabled check passes, 1 when a bound check
//! fails, 2 on usage, parse or I/O errors (in which case nothing is
//! written).

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod problem_file;
pub mod report;
pub mod trace_csv;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use feas_core::oracles::{generate_fixtures, render_fixtures, FIXTURE_SEED};
use feas_core::regularity::{cyclic_rate_from_angle, friedrichs_cosine, friedrichs_cosine_with_kappa, rate_from_angle};
use feas_core::{run, Mode, Trace, Workers};
use serde::Serialize;
use thiserror::Error;

use problem_file::{Instance, ParseError, ProblemFile, RegionSpec};
use report::{CheckOutcome, KappaSummary};
use trace_csv::{CsvError, CsvRow};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable selecting the log level.
pub const LOG_ENV: &str = "FEAS_LOG_LEVEL";
pub const LOG_LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

#[derive(Debug, Parser)]
#[command(name = "feas", version, about = "Projection methods for convex feasibility problems")]
pub struct Cli {
    /// Worker threads for sampling and independent checks (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Replace every seed declared in the problem file.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a problem, write trace.csv and report.json, check the bounds.
    Solve {
        file: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Replay a problem, compare with a stored trace and check the bounds.
    Verify {
        trace: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Estimate the linear regularity constant declared in analysis.kappa.
    Kappa { file: PathBuf },
    /// Friedrichs cosine of a family of linear subspaces.
    Angle { file: PathBuf },
    /// Regenerate the grid-oracle fixtures file.
    OracleFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FIXTURE_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Csv(#[from] CsvError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] feas_core::Error),

    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sets up logging from [`LOG_ENV`], defaulting to `warn`.
pub fn init_logging() -> Result<(), CliError> {
    let level = match std::env::var(LOG_ENV) {
        Ok(v) if LOG_LEVELS.contains(&v.as_str()) => v,
        Ok(v) => {
            return Err(CliError::Usage(format!(
                "{LOG_ENV} must be one of {}, got {v:?}",
                LOG_LEVELS.join(", ")
            )))
        }
        Err(_) => "warn".into(),
    };
    // a second initialization (e.g. in tests) keeps the first logger
    let _ = env_logger::Builder::new().parse_filters(&level).try_init();
    Ok(())
}

/// Parses arguments and runs one subcommand, returning the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Parses a problem file, applies `--seed-override`, and builds it.
pub fn load(path: &Path, seed_override: Option<u64>) -> Result<(ProblemFile, Instance), CliError> {
    let mut pf = problem_file::parse_problem(path)?;
    if let Some(s) = seed_override {
        pf.override_seeds(s);
    }
    let inst = pf.build()?;
    Ok((pf, inst))
}

pub fn solve_instance(inst: &Instance) -> Result<Trace, CliError> {
    run(
        &inst.problem,
        &inst.schedule,
        &inst.config,
        inst.perturbation.as_ref(),
        inst.steering.as_ref(),
    )
    .map_err(CliError::from)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Returns whether every check passed.
pub fn execute(cli: &Cli) -> Result<bool, CliError> {
    let workers = Workers(cli.jobs);
    match &cli.command {
        Command::Solve { file, out_dir } => {
            let (pf, inst) = load(file, cli.seed_override)?;
            log::info!("solving {} ({} sets in R^{})", file.display(), inst.problem.len(), inst.problem.dim());
            let trace = solve_instance(&inst)?;
            let report = analysis::analyze(&pf, &inst, &trace, workers);
            std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
            trace_csv::write_trace_csv(&trace, &out_dir.join("trace.csv"))?;
            write_file(&out_dir.join("report.json"), &report.to_json())?;
            print!("{}", report.to_text());
            Ok(report.passed())
        }
        Command::Verify { trace, problem, report } => {
            let (pf, inst) = load(problem, cli.seed_override)?;
            let stored = trace_csv::read_trace_csv(trace)?;
            let replay = solve_instance(&inst)?;
            let mut rep = analysis::analyze(&pf, &inst, &replay, workers);
            analysis::prepend(&mut rep, replay_outcome(&stored, &trace_csv::trace_rows(&replay)));
            if let Some(path) = report {
                write_file(path, &rep.to_json())?;
            }
            print!("{}", rep.to_text());
            Ok(rep.passed())
        }
        Command::Kappa { file } => {
            let (pf, inst) = load(file, cli.seed_override)?;
            let spec = pf
                .analysis
                .kappa
                .as_ref()
                .ok_or_else(|| CliError::Usage("kappa needs analysis.kappa in the problem file".into()))?;
            let needs_run = match spec.region {
                RegionSpec::Restarts => true,
                RegionSpec::Auto => pf.mode() != Mode::Exact,
                RegionSpec::Start | RegionSpec::Ball { .. } => false,
            };
            let trace = needs_run.then(|| solve_instance(&inst)).transpose()?;
            let est = analysis::kappa_estimate(&pf, &inst, trace.as_ref(), workers).map_err(CliError::Usage)?;
            println!("{}", to_json(&KappaSummary::from(&est)));
            Ok(true)
        }
        Command::Angle { file } => {
            let (pf, inst) = load(file, cli.seed_override)?;
            angle(&pf, &inst, workers)
        }
        Command::OracleFixtures { out, seed } => {
            let seed = cli.seed_override.unwrap_or(*seed);
            let records = generate_fixtures(seed, workers)?;
            write_file(out, &render_fixtures(&records, seed))?;
            println!("wrote {} fixtures to {}", records.len(), out.display());
            Ok(true)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("outputs serialize")
}

/// Bit-exact comparison of a stored trace with its replay.
pub fn replay_outcome(stored: &[CsvRow], replay: &[CsvRow]) -> CheckOutcome {
    let ineq = "stored trace equals its deterministic replay";
    let statement = "every stored row is bit-identical to the replayed row";
    let mut r = feas_core::CheckReport::new(statement);
    for (a, b) in stored.iter().zip(replay) {
        r.record(b.k, None, if a.bit_eq(b) { 0.0 } else { -1.0 }, 0.0);
    }
    let mut o = CheckOutcome::from_report("trace_replay", ineq, &r);
    if stored.len() != replay.len() {
        o = CheckOutcome::failed(
            "trace_replay",
            ineq,
            statement,
            format!("stored trace has {} rows, replay has {}", stored.len(), replay.len()),
        );
    } else if let Some(p) = r.first_violation {
        o = o.with_detail(format!("first mismatch at k = {}", p.k));
    }
    o
}

#[derive(Serialize)]
struct AngleOutput {
    cosine: f64,
    theta: f64,
    num_subspaces: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<KappaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    within_bounds: Option<bool>,
    /// Linear rate implied by the cosine under the declared schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule_rate: Option<f64>,
    /// Rate of cyclic projections through every subspace.
    #[serde(skip_serializing_if = "Option::is_none")]
    cyclic_rate: Option<f64>,
}

fn angle(pf: &ProblemFile, inst: &Instance, workers: Workers) -> Result<bool, CliError> {
    let p = &inst.problem;
    if !p.all_linear_subspaces() {
        return Err(CliError::Usage("angle needs every set to be a linear subspace".into()));
    }
    if p.len() < 2 {
        return Err(CliError::Usage("angle needs at least two subspaces".into()));
    }
    let est = match &pf.analysis.kappa {
        Some(_) => Some(analysis::kappa_estimate(pf, inst, None, workers).map_err(CliError::Usage)?),
        None => None,
    };
    let a = match &est {
        Some(e) => friedrichs_cosine_with_kappa(p.sets(), e.inflated())?,
        None => friedrichs_cosine(p.sets())?,
    };
    let s = &inst.schedule;
    let out = AngleOutput {
        cosine: a.cosine,
        theta: a.theta,
        num_subspaces: a.num_subspaces,
        kappa: est.as_ref().map(KappaSummary::from),
        bounds: a.bounds,
        within_bounds: a.within_bounds(),
        schedule_rate: rate_from_angle(a.cosine, s.declared_omega_min(), s.declared_m(), s.declared_s()).ok(),
        cyclic_rate: cyclic_rate_from_angle(a.cosine, p.len()).ok(),
    };
    println!("{}", to_json(&out));
    Ok(out.within_bounds != Some(false))
}
