//! Command-line front end: `pss analyze | solve-hjb | sim-wcp | sim-qcp |
//! verify-bound`.
//!
//! Every command writes one JSON report that embeds the instance hash, the
//! effective configuration, the seed and the toolkit version. Reports hold
//! no timing data, so identical inputs give byte-identical output.

mod report;
mod traces;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use pss_core::hjb::{extract_policy, solve_hjb, FeedbackPolicy, HjbConfig, HjbError, HjbSolution};
use pss_core::lp::{analyze, AssumptionFailure, LpAnalysis, LpError};
use pss_core::model::{load_instance, PssInstance};
use pss_core::qcp::{
    check_trace_inequalities, compute_scaled, estimate_qcp_cost, run_qcp, verify_lower_bound,
    BoundVerdict, PolicySpec, QcpError,
};
use pss_core::wcp::{self, estimate_wcp_cost, simulate_wcp, Scheme, WcpError, WcpParams};

pub use report::Report;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_N: u64 = 100;
pub const DEFAULT_N_LIST: &str = "25,100,400";
pub const DEFAULT_QCP_REPS: usize = 200;
pub const DEFAULT_WCP_PATHS: usize = 20_000;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const PARSE: i32 = 10;
    pub const IO: i32 = 11;
    pub const CONFIG: i32 = 12;
    pub const ASSUMPTION: i32 = 20;
    pub const SOLVER: i32 = 30;
    pub const BOUND_FAIL: i32 = 40;

    /// 21, 22 or 23 for parts 1, 2, 3 of the standing assumption.
    pub fn assumption_part(part: u8) -> i32 {
        ASSUMPTION + i32::from(part)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("assumption failure: {0}")]
    Assumption(AssumptionFailure),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Parse(_) => exit::PARSE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Assumption(f) => exit::assumption_part(f.part()),
            CliError::Solver(_) => exit::SOLVER,
        }
    }
}

impl From<LpError> for CliError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Assumption(f) => CliError::Assumption(f),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<HjbError> for CliError {
    fn from(e: HjbError) -> Self {
        match e {
            HjbError::Config(m) => CliError::Config(m),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<WcpError> for CliError {
    fn from(e: WcpError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<QcpError> for CliError {
    fn from(e: QcpError) -> Self {
        match e {
            QcpError::Assumption(f) => CliError::Assumption(f),
            QcpError::IdentityBreach { .. } => CliError::Solver(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pss", version, about = "Heavy-traffic lower bounds for parallel server systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the static allocation LP, enumerate modes and check assumptions.
    Analyze(CommonArgs),
    /// Solve the HJB equation of the workload control problem.
    SolveHjb {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        hjb: HjbArgs,
    },
    /// Monte Carlo estimate of the workload control cost.
    SimWcp {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        hjb: HjbArgs,
        /// Comma-separated policies: `hjb`, `static:M` (1-based).
        #[arg(long, default_value = "hjb,static")]
        policy: String,
        /// Euler step.
        #[arg(long, default_value_t = wcp::DEFAULT_STEP)]
        step: f64,
        /// Simulation horizon [default: 12/gamma].
        #[arg(long)]
        horizon: Option<f64>,
        /// Number of sample paths.
        #[arg(long, default_value_t = DEFAULT_WCP_PATHS)]
        reps: usize,
        /// Initial workload.
        #[arg(long, default_value_t = 0.0)]
        z0: f64,
        /// Use the projected Euler scheme instead of bridge reflection.
        #[arg(long)]
        euler: bool,
    },
    /// Simulate the prelimit queueing system.
    SimQcp {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        hjb: HjbArgs,
        #[command(flatten)]
        qcp: QcpArgs,
        /// Scaling parameter n.
        #[arg(long, default_value_t = DEFAULT_N)]
        n: u64,
    },
    /// Compare simulated costs against the lower bound V0.
    VerifyBound {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        hjb: HjbArgs,
        #[command(flatten)]
        qcp: QcpArgs,
        /// Comma-separated values of n.
        #[arg(long, default_value = DEFAULT_N_LIST)]
        n_list: String,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Instance JSON file, or `builtin:NAME` for a reference instance.
    #[arg(long)]
    pub instance: String,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HjbArgs {
    /// Grid cells for the HJB solver.
    #[arg(long, default_value_t = HjbConfig::DEFAULT_GRID_N)]
    pub grid_n: usize,
    /// Truncation point of the HJB domain [default: from the coefficients].
    #[arg(long)]
    pub z_max: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QcpArgs {
    /// Comma-separated policies: `static:M`, `static` (all modes),
    /// `threshold`, `priority`.
    #[arg(long, default_value = "static,threshold,priority")]
    pub policy: String,
    /// Redistribute masked effort among nonempty classes (static and
    /// threshold policies).
    #[arg(long)]
    pub work_conserving: bool,
    /// Simulation horizon [default: 12/gamma].
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Replications per (n, policy).
    #[arg(long, default_value_t = DEFAULT_QCP_REPS)]
    pub reps: usize,
    /// Write the trace of replication 0 as CSV (sim-qcp only).
    #[arg(long)]
    pub trace: bool,
    /// Wide CSV layout for traces.
    #[arg(long)]
    pub wide: bool,
}

/// A loaded instance and its hash.
pub struct LoadedInstance {
    pub source: String,
    pub sha256: String,
    pub instance: PssInstance,
}

pub fn load(source: &str) -> Result<LoadedInstance, CliError> {
    let bytes = if let Some(name) = source.strip_prefix("builtin:") {
        let inst = pss_core::instances::by_name(name)
            .ok_or_else(|| CliError::Parse(format!("unknown builtin instance `{name}`")))?;
        inst.to_json().into_bytes()
    } else {
        fs::read(source).map_err(|e| CliError::Io {
            path: source.into(),
            source: e,
        })?
    };
    let instance = load_instance(&bytes).map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(LoadedInstance {
        source: source.to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        instance,
    })
}

fn hjb_config(analysis: &LpAnalysis, gamma: f64, args: &HjbArgs) -> Result<HjbConfig, CliError> {
    let standing = analysis.standing().map_err(CliError::Assumption)?;
    let mut cfg = HjbConfig::default_for(standing.coefficients, gamma);
    cfg.grid_n = args.grid_n;
    if let Some(z) = args.z_max {
        cfg.z_max = z;
    }
    Ok(cfg)
}

fn solve(inst: &PssInstance, analysis: &LpAnalysis, args: &HjbArgs) -> Result<(HjbConfig, HjbSolution), CliError> {
    let cfg = hjb_config(analysis, inst.gamma(), args)?;
    let coefficients = analysis.standing().map_err(CliError::Assumption)?.coefficients;
    let sol = solve_hjb(coefficients, inst.gamma(), &cfg)?;
    Ok((cfg, sol))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Parse(format!("invalid {what} `{s}`")))
        })
        .collect()
}

fn parse_mode(token: &str, modes: usize) -> Result<usize, CliError> {
    let m: usize = token
        .parse()
        .map_err(|_| CliError::Parse(format!("invalid mode `{token}`")))?;
    if m == 0 || m > modes {
        return Err(CliError::Config(format!("mode {m} out of range 1..={modes}")));
    }
    Ok(m - 1)
}

/// Expands a policy list for the queueing simulator.
pub fn parse_qcp_policies(
    text: &str,
    inst: &PssInstance,
    analysis: &LpAnalysis,
    threshold: Option<&FeedbackPolicy>,
    work_conserving: bool,
) -> Result<Vec<PolicySpec>, CliError> {
    let modes = analysis.modes.len();
    let mut out = Vec::new();
    for token in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match token {
            "static" => out.extend((0..modes).map(|m| PolicySpec::static_mode(m).with_work_conserving(work_conserving))),
            "threshold" => {
                let fp = threshold.ok_or_else(|| CliError::Config("threshold policy needs the HJB solution".into()))?;
                out.push(PolicySpec::threshold(fp.clone()).with_work_conserving(work_conserving));
            }
            "priority" => out.push(PolicySpec::c_mu(inst)),
            t => match t.strip_prefix("static:") {
                Some(m) => out.push(PolicySpec::static_mode(parse_mode(m, modes)?).with_work_conserving(work_conserving)),
                None => return Err(CliError::Parse(format!("unknown policy `{t}`"))),
            },
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no policy given".into()));
    }
    Ok(out)
}

/// Expands a policy list for the workload simulator into (label, policy).
pub fn parse_wcp_policies(
    text: &str,
    modes: usize,
    hjb: &FeedbackPolicy,
) -> Result<Vec<(String, FeedbackPolicy)>, CliError> {
    let mut out = Vec::new();
    for token in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match token {
            "hjb" => out.push(("hjb".to_string(), hjb.clone())),
            "static" => out.extend((0..modes).map(|m| (format!("static:{}", m + 1), FeedbackPolicy::constant(m)))),
            t => match t.strip_prefix("static:") {
                Some(m) => {
                    let m = parse_mode(m, modes)?;
                    out.push((format!("static:{}", m + 1), FeedbackPolicy::constant(m)));
                }
                None => return Err(CliError::Parse(format!("unknown policy `{t}`"))),
            },
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no policy given".into()));
    }
    Ok(out)
}

/// Files a command produced besides its JSON report.
pub struct Output {
    pub report: Report,
    pub files: Vec<(String, Vec<u8>)>,
    pub exit: i32,
}

pub fn execute(command: &Command) -> Result<Output, CliError> {
    match command {
        Command::Analyze(common) => {
            let li = load(&common.instance)?;
            let analysis = analyze(&li.instance)?;
            let exit = analysis
                .assumptions
                .first_failure()
                .map_or(exit::OK, |f| exit::assumption_part(f.part()));
            let body = report::analysis(&li.instance, &analysis);
            Ok(Output {
                report: Report::new("analyze", &li, common.seed, &serde_json::json!({}), body),
                files: Vec::new(),
                exit,
            })
        }
        Command::SolveHjb { common, hjb } => {
            let li = load(&common.instance)?;
            let analysis = analyze(&li.instance)?;
            let (cfg, sol) = solve(&li.instance, &analysis, hjb)?;
            let body = report::hjb(&li.instance, &analysis, &sol)?;
            Ok(Output {
                report: Report::new("solve-hjb", &li, common.seed, &cfg, body),
                files: vec![("hjb_grid.csv".into(), traces::hjb_grid(&sol)?)],
                exit: exit::OK,
            })
        }
        Command::SimWcp {
            common,
            hjb,
            policy,
            step,
            horizon,
            reps,
            z0,
            euler,
        } => {
            let li = load(&common.instance)?;
            let inst = &li.instance;
            let analysis = analyze(inst)?;
            let (cfg, sol) = solve(inst, &analysis, hjb)?;
            let coefficients = analysis.standing().map_err(CliError::Assumption)?.coefficients;
            let fp = extract_policy(&sol);
            let policies = parse_wcp_policies(policy, analysis.modes.len(), &fp)?;
            let params = WcpParams {
                z0: *z0,
                step: *step,
                horizon: horizon.unwrap_or(wcp::default_horizon(inst.gamma())),
                scheme: if *euler { Scheme::ProjectedEuler } else { Scheme::Bridge },
            };
            let mut estimates = Vec::new();
            for (label, p) in &policies {
                let e = estimate_wcp_cost(p, coefficients, inst.gamma(), &params, *reps, common.seed)?;
                estimates.push((label.clone(), e));
            }
            let path = simulate_wcp(&policies[0].1, coefficients, &params, common.seed, 0)?;
            let config = serde_json::json!({ "hjb": cfg, "wcp": params, "policy": policy, "reps": reps });
            let body = report::wcp(&sol, &estimates, *z0);
            Ok(Output {
                report: Report::new("sim-wcp", &li, common.seed, &config, body),
                files: vec![("wcp_path.csv".into(), traces::wcp_path(&path)?)],
                exit: exit::OK,
            })
        }
        Command::SimQcp { common, hjb, qcp, n } => {
            let li = load(&common.instance)?;
            let inst = &li.instance;
            let analysis = analyze(inst)?;
            let (cfg, sol) = solve(inst, &analysis, hjb)?;
            let fp = extract_policy(&sol);
            let policies = parse_qcp_policies(&qcp.policy, inst, &analysis, Some(&fp), qcp.work_conserving)?;
            let horizon = qcp.horizon.unwrap_or(wcp::default_horizon(inst.gamma()));
            let mut entries = Vec::new();
            let mut files = Vec::new();
            for p in &policies {
                let est = estimate_qcp_cost(inst, &analysis, *n, p, qcp.reps, horizon, common.seed)?;
                let trace = run_qcp(inst, &analysis, *n, p, horizon, common.seed, 0)?;
                let series = compute_scaled(&trace, inst, &analysis)?;
                let checks = check_trace_inequalities(&trace, &series, inst, &analysis)?;
                if qcp.trace {
                    let name = format!("trace_{}.csv", p.label().replace([':', '+'], "_"));
                    files.push((name, traces::qcp_trace(inst, &trace, &series, qcp.wide)?));
                }
                entries.push(report::QcpEntry {
                    policy: p.label(),
                    estimate: est,
                    events_rep0: trace.len(),
                    checks,
                });
            }
            let config = serde_json::json!({ "hjb": cfg, "qcp": qcp, "n": n, "horizon": horizon });
            let body = report::qcp(inst, &analysis, &sol, *n, entries)?;
            Ok(Output {
                report: Report::new("sim-qcp", &li, common.seed, &config, body),
                files,
                exit: exit::OK,
            })
        }
        Command::VerifyBound { common, hjb, qcp, n_list } => {
            let li = load(&common.instance)?;
            let inst = &li.instance;
            let analysis = analyze(inst)?;
            analysis.standing().map_err(CliError::Assumption)?;
            let (cfg, sol) = solve(inst, &analysis, hjb)?;
            let fp = extract_policy(&sol);
            let policies = parse_qcp_policies(&qcp.policy, inst, &analysis, Some(&fp), qcp.work_conserving)?;
            let ns: Vec<u64> = parse_list(n_list, "n")?;
            if ns.is_empty() {
                return Err(CliError::Config("empty n list".into()));
            }
            let horizon = qcp.horizon.unwrap_or(wcp::default_horizon(inst.gamma()));
            let bound = verify_lower_bound(inst, &analysis, &sol, &ns, &policies, qcp.reps, horizon, common.seed)?;
            let exit = match bound.verdict {
                BoundVerdict::Pass => exit::OK,
                BoundVerdict::Fail => exit::BOUND_FAIL,
            };
            let config = serde_json::json!({ "hjb": cfg, "qcp": qcp, "n_list": ns, "horizon": horizon });
            let body = report::bound(&analysis, &sol, &fp, bound);
            Ok(Output {
                report: Report::new("verify-bound", &li, common.seed, &config, body),
                files: Vec::new(),
                exit,
            })
        }
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Io { path, source: e })
}

/// Prints a line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn configure_threads() {
    if let Some(n) = std::env::var("PSS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Analyze(_) => "analyze",
        Command::SolveHjb { .. } => "solve-hjb",
        Command::SimWcp { .. } => "sim-wcp",
        Command::SimQcp { .. } => "sim-qcp",
        Command::VerifyBound { .. } => "verify-bound",
    }
}

fn out_dir(command: &Command) -> Option<&Path> {
    let common = match command {
        Command::Analyze(c) => c,
        Command::SolveHjb { common, .. }
        | Command::SimWcp { common, .. }
        | Command::SimQcp { common, .. }
        | Command::VerifyBound { common, .. } => common,
    };
    common.out.as_deref()
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::PARSE } else { exit::OK };
        }
    };
    configure_threads();
    let name = command_name(&cli.command);
    let result = execute(&cli.command).and_then(|out| {
        let json = out.report.to_json();
        match out_dir(&cli.command) {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| CliError::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
                write_file(dir, &format!("{name}.json"), json.as_bytes())?;
                for (file, bytes) in &out.files {
                    write_file(dir, file, bytes)?;
                }
                emit(&out.report.summary());
            }
            None => emit(json.trim_end()),
        }
        Ok(out.exit)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pss {name}: {e}");
            if let CliError::Assumption(AssumptionFailure::DualNotUnique) = &e {
                if let Some(w) = dual_witnesses(&cli.command) {
                    eprintln!("{w}");
                }
            }
            e.exit_code()
        }
    }
}

/// The two dual witnesses, for refusal messages.
fn dual_witnesses(command: &Command) -> Option<String> {
    let common = match command {
        Command::Analyze(c) => c,
        Command::SolveHjb { common, .. }
        | Command::SimWcp { common, .. }
        | Command::SimQcp { common, .. }
        | Command::VerifyBound { common, .. } => common,
    };
    let li = load(&common.instance).ok()?;
    let analysis = analyze(&li.instance).ok()?;
    let w = analysis.assumptions.dual_witnesses.as_ref()?;
    Some(format!(
        "dual witnesses: {}",
        serde_json::to_string(&[report::DualView::from(&w[0]), report::DualView::from(&w[1])]).ok()?
    ))
}
