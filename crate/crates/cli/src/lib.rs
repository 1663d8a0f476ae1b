//! Argument parsing and command execution for the `ergolab` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use ergolab_core::certificates::{best_lower_bound, certify_lambda};
use ergolab_core::control_sim::{control_check, SimConfig};
use ergolab_core::io::write_atomic;
use ergolab_core::linear_xcheck::cross_check;
use ergolab_core::radial_solver::{
    build_grid, default_ladder, estimate_lambda_extrapolated, GridOptions, LadderOptions, SolverOptions,
};
use ergolab_core::sweep_harness::{
    build_report, geometric_betas, read_report, read_rows, report_to_json, rows_to_csv, run_sweep, write_report,
    ReportFormat, SweepOptions, PLATEAU_TOL,
};
use ergolab_core::{Error as CoreError, ProblemSpec};

const CONFIG_HELP: &str = "\
CONFIG FILE
  Flat key = value lines (TOML syntax):
    m = 2.0               Hamiltonian exponent, > 1
    d = 3                 dimension
    delta = 1.0           drift growth exponent
    rho = 1.0             leading drift coefficient, > 0
    a = 0.0               subleading drift coefficient
    eta = 2.0             potential decay exponent, > 0
    R = 1.0               matching radius
    potential_kind = \"inverse_power\"   or \"compact_support\"
    R_prime = 2.0         support radius for compact_support, > R
  --set KEY=VALUE overrides any key and takes precedence over the file.

DEFAULTS
  ladder: --grid-n 512 doubling over three rungs, --rmax-mult 4 (rungs at 4, 6, 8
  times the domain scale), --tol 1e-10; --plateau-tol 1e-3; xcheck and simulate
  use one grid with --grid-n 2048; simulate: --paths 256 --horizon 200 --dt 2e-3
  --seed 0.

EXIT CODES
  0 success, 1 numerical failure or failed check, 2 usage or configuration error.";

#[derive(Debug, Parser)]
#[command(name = "ergolab", version, about = "Principal eigenvalues of radial ergodic Hamilton-Jacobi problems")]
#[command(after_help = CONFIG_HELP)]
pub struct Command {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Extrapolated eigenvalue at one beta.
    Solve(SolveArgs),
    /// Verified lower bound at one beta, or verification of a supplied lambda.
    Certify(CertifyArgs),
    /// Geometric beta sweep with fits and shape checks.
    Sweep(SweepArgs),
    /// Compare against the linear eigenproblem (m = 2 only).
    Xcheck(SolveArgs),
    /// Monte Carlo check of the extracted feedback control.
    Simulate(SimulateArgs),
    /// Rebuild a sweep report from a JSON or CSV file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
    pub overrides: Vec<(String, String)>,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; defaults to the extension of --out, else json.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Base number of intervals.
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Domain multiplier of the coarsest rung.
    #[arg(long)]
    pub rmax_mult: Option<f64>,
    /// Newton residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub beta: f64,
    /// Candidate to verify instead of constructing one.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// start:stop:xFACTOR, or a comma-separated list.
    #[arg(long, value_parser = parse_betas)]
    pub betas: Betas,
    #[arg(long, default_value_t = PLATEAU_TOL)]
    pub plateau_tol: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Report (JSON) or rows (CSV) to rebuild.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = PLATEAU_TOL)]
    pub plateau_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Betas(pub Vec<f64>);

fn parse_kv(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// `1e1:1e6:x10` or `1,10,100`.
pub fn parse_betas(s: &str) -> Result<Betas, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("cannot parse '{t}' as a number"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, factor] => {
            let factor = factor.trim().strip_prefix('x').ok_or("factor must look like x10")?;
            geometric_betas(num(start)?, num(stop)?, num(factor)?).map(Betas).map_err(|e| e.to_string())
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>().map(Betas),
        _ => Err(format!("expected start:stop:xFACTOR or a comma list, got '{s}'")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 1,
            CliError::Core(_) => 2,
            CliError::CheckFailed(_) => 1,
        }
    }
}

pub fn parse_args<I, T>(argv: I) -> Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Command::try_parse_from(argv)
}

fn load_spec(common: &Common) -> Result<ProblemSpec, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".to_string()))?;
    let mut spec = ProblemSpec::load(path)?;
    for (k, v) in &common.overrides {
        spec.set(k, v)?;
    }
    let violations = ergolab_core::model::validate_spec(&spec);
    if !violations.is_empty() {
        return Err(CoreError::InvalidSpec(violations).into());
    }
    Ok(spec)
}

fn solver_options(common: &Common) -> SolverOptions {
    let mut s = SolverOptions::default();
    if let Some(t) = common.tol {
        s.tol = t;
    }
    s
}

fn ladder_options(common: &Common) -> LadderOptions {
    let mut l = LadderOptions { solver: solver_options(common), ..Default::default() };
    if let Some(n) = common.grid_n {
        l.base_n = n;
    }
    if let Some(c) = common.rmax_mult {
        l.multipliers = vec![c, 1.5 * c, 2.0 * c];
    }
    l
}

fn check_beta(beta: f64) -> Result<(), CliError> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--beta must be finite and nonnegative, got {beta}")))
    }
}

fn format_of(common: &Common) -> ReportFormat {
    match (common.format, &common.out) {
        (Some(Format::Json), _) => ReportFormat::Json,
        (Some(Format::Csv), _) => ReportFormat::Csv,
        (None, Some(p)) => ReportFormat::from_path(p),
        (None, None) => ReportFormat::Json,
    }
}

fn emit(common: &Common, text: &str) -> Result<(), CliError> {
    match &common.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CoreError::Io { path: "<stdout>".into(), source: e })?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn csv_only_for(verb: &str, common: &Common) -> Result<(), CliError> {
    if format_of(common) == ReportFormat::Csv && verb != "solve" {
        return Err(CliError::Usage(format!("{verb} writes JSON only")));
    }
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let c = &args.common;
    check_beta(args.beta)?;
    let spec = load_spec(c)?;
    let lo = ladder_options(c);
    let ladder = default_ladder(&spec, args.beta, &lo);
    let e = estimate_lambda_extrapolated(&spec, args.beta, &ladder, &lo.solver)?;
    eprintln!("lambda = {:.12e} +- {:.2e}", e.lambda, e.error_estimate);
    match format_of(c) {
        ReportFormat::Json => emit(c, &json(&e)),
        ReportFormat::Csv => emit(c, &e.finest.to_csv()),
    }
}

fn certify(args: &CertifyArgs) -> Result<(), CliError> {
    let c = &args.common;
    csv_only_for("certify", c)?;
    check_beta(args.beta)?;
    let spec = load_spec(c)?;
    let cert = match args.lambda {
        Some(l) => certify_lambda(&spec, args.beta, l)?,
        None => best_lower_bound(&spec, args.beta)?,
    };
    eprintln!("certified lower bound {:.12e} ({:?})", cert.lambda_lower, cert.construction);
    emit(c, &json(&cert))
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let c = &args.common;
    let spec = load_spec(c)?;
    let opts = SweepOptions { ladder: ladder_options(c), plateau_tol: args.plateau_tol };
    let rows = run_sweep(&spec, &args.betas.0, &opts)?;
    let report = build_report(&spec, rows, &opts);
    let failed = report.rows.iter().filter(|r| !r.ok()).count();
    eprintln!(
        "{} rows ({failed} failed); monotone {}, concave {}",
        report.rows.len(),
        report.checks.monotone,
        report.checks.concave
    );
    match &c.out {
        Some(p) => write_report(&report, p, format_of(c))?,
        None => emit(
            c,
            &match format_of(c) {
                ReportFormat::Json => report_to_json(&report),
                ReportFormat::Csv => rows_to_csv(&report.rows),
            },
        )?,
    }
    if failed > 0 {
        return Err(CliError::CheckFailed(format!("{failed} beta values failed to solve")));
    }
    Ok(())
}

fn single_grid(common: &Common, spec: &ProblemSpec, beta: f64) -> Result<ergolab_core::Grid, CliError> {
    let mut g = GridOptions { n: common.grid_n.unwrap_or(2048), ..Default::default() };
    if let Some(m) = common.rmax_mult {
        g.c_dom = m;
    }
    Ok(build_grid(spec, beta, &g)?)
}

fn xcheck(args: &SolveArgs) -> Result<(), CliError> {
    let c = &args.common;
    csv_only_for("xcheck", c)?;
    check_beta(args.beta)?;
    let spec = load_spec(c)?;
    let grid = single_grid(c, &spec, args.beta)?;
    let x = cross_check(&spec, args.beta, &grid, &solver_options(c))?;
    eprintln!(
        "nonlinear {:.12e}, linear {:.12e}, difference {:.3e}",
        x.report.lambda_nonlinear, x.report.lambda_linear, x.report.lambda_diff
    );
    emit(c, &json(&x))?;
    if !x.pass {
        return Err(CliError::CheckFailed(format!(
            "eigenvalue difference {:.3e} above tolerance",
            x.report.lambda_diff
        )));
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let c = &args.common;
    csv_only_for("simulate", c)?;
    check_beta(args.beta)?;
    let spec = load_spec(c)?;
    let mut cfg = SimConfig { seed: args.seed, ..Default::default() };
    if let Some(p) = args.paths {
        cfg.n_paths = p;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    cfg.validate()?;
    let grid = single_grid(c, &spec, args.beta)?;
    let sol = ergolab_core::radial_solver::solve(&spec, args.beta, &grid, None, &solver_options(c))?;
    let check = control_check(&spec, args.beta, &sol, &cfg)?;
    eprintln!(
        "lambda {:.6}, Monte Carlo {:.6} +- {:.6}",
        check.comparison.lambda, check.optimal.mean, check.optimal.std_err
    );
    emit(c, &json(&check))?;
    if !check.pass {
        return Err(CliError::CheckFailed("control check did not pass".to_string()));
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), CliError> {
    let c = &args.common;
    let from_json = ReportFormat::from_path(&args.input) == ReportFormat::Json;
    let (spec, rows) = if from_json && c.config.is_none() {
        let r = read_report(&args.input)?;
        (r.spec, r.rows)
    } else {
        (load_spec(c)?, read_rows(&args.input)?)
    };
    let opts = SweepOptions { ladder: ladder_options(c), plateau_tol: args.plateau_tol };
    let mut report = build_report(&spec, rows, &opts);
    if from_json {
        // keep the original stamp so repeated rebuilds are stable
        let old = read_report(&args.input)?;
        report.timestamp = old.timestamp;
        report.environment = old.environment;
    }
    match &c.out {
        Some(p) => write_report(&report, p, format_of(c))?,
        None => emit(
            c,
            &match format_of(c) {
                ReportFormat::Json => report_to_json(&report),
                ReportFormat::Csv => rows_to_csv(&report.rows),
            },
        )?,
    }
    Ok(())
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be positive".to_string()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn common(verb: &Verb) -> &Common {
    match verb {
        Verb::Solve(a) | Verb::Xcheck(a) => &a.common,
        Verb::Certify(a) => &a.common,
        Verb::Sweep(a) => &a.common,
        Verb::Simulate(a) => &a.common,
        Verb::Report(a) => &a.common,
    }
}

/// Executes a parsed command.
pub fn execute(cmd: &Command) -> Result<(), CliError> {
    let c = common(&cmd.verb);
    if let Some(p) = &c.config {
        if !Path::new(p).is_file() {
            return Err(CliError::Usage(format!("config file {} does not exist", p.display())));
        }
    }
    pool(c.jobs)?.install(|| match &cmd.verb {
        Verb::Solve(a) => solve(a),
        Verb::Certify(a) => certify(a),
        Verb::Sweep(a) => sweep(a),
        Verb::Xcheck(a) => xcheck(a),
        Verb::Simulate(a) => simulate(a),
        Verb::Report(a) => report(a),
    })
}

/// Executes a command and maps the outcome to an exit code, printing diagnostics to
/// standard error.
pub fn run(cmd: &Command) -> i32 {
    match execute(cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses and runs; usage errors exit with 2, help and version with 0.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(cmd) => run(&cmd),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_syntax() {
        assert_eq!(parse_betas("1e1:1e6:x10").unwrap().0.len(), 6);
        assert_eq!(parse_betas("1,10, 100").unwrap().0, vec![1.0, 10.0, 100.0]);
        assert!(parse_betas("1e1:1e6:10").is_err());
        assert!(parse_betas("1:2:3:4").is_err());
        assert!(parse_betas("abc").is_err());
    }

    #[test]
    fn parses_documented_invocations() {
        let c =
            parse_args(["ergolab", "solve", "--config", "case.toml", "--beta", "100", "--out", "sol.json"]).unwrap();
        match c.verb {
            Verb::Solve(a) => {
                assert_eq!(a.beta, 100.0);
                assert_eq!(a.common.out, Some(PathBuf::from("sol.json")));
            }
            v => panic!("parsed {v:?}"),
        }
        let c =
            parse_args(["ergolab", "sweep", "--config", "c.toml", "--betas", "1e1:1e6:x10", "--set", "a=2"]).unwrap();
        match c.verb {
            Verb::Sweep(a) => {
                assert_eq!(a.betas.0, vec![1e1, 1e2, 1e3, 1e4, 1e5, 1e6]);
                assert_eq!(a.common.overrides, vec![("a".to_string(), "2".to_string())]);
            }
            v => panic!("parsed {v:?}"),
        }
        let e = parse_args(["ergolab", "frobnicate"]).unwrap_err();
        assert!(e.use_stderr());
        assert_eq!(main_with_args(["ergolab", "frobnicate"]), 2);
        assert_eq!(main_with_args(["ergolab", "solve", "--beta", "1", "--bogus"]), 2);
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::Config(String::new())).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::NotConverged(String::new())).exit_code(), 1);
        assert_eq!(CliError::CheckFailed(String::new()).exit_code(), 1);
    }
}
