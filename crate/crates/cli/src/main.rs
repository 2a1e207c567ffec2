//! Command line front end: sample traces, run either engine, compare them.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lifted_filter::filter::{FilterConfig, Query};
use lifted_filter::prob;
use lifted_filter::run::{compare, run_grounded, run_lifted, RunOutput};
use lifted_filter::scenario::{from_reference, sample_trace, Scenario, Trace};
use lifted_filter::Error;

/// Largest marginal difference tolerated by `compare`.
const COMPARE_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "lifted-filter", version, about = "Exact lifted Bayesian filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a ground-truth run and its sensor readings.
    Sample(SampleArgs),
    /// Run a filter over a trace and write metrics and marginals.
    Filter(FilterArgs),
    /// Same as `filter --engine grounded`.
    Oracle(RunArgs),
    /// Run both engines and compare their marginals step by step.
    Compare(RunArgs),
    /// Check a scenario and optionally a trace against it.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Builtin scenario, optionally with parameters: `warehouse:n=3,horizon=15`.
    #[arg(long, conflicts_with = "scenario_file")]
    scenario: Option<String>,
    /// Scenario file in JSON format.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    seed: u64,
    /// Number of prediction steps; defaults to the scenario's horizon.
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Observation trace to filter.
    #[arg(long, conflicts_with_all = ["seed", "horizon"])]
    trace: Option<PathBuf>,
    /// Sample a fresh trace with this seed instead of reading one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u32>,
    /// `SLOT=VALUE:SLOT`; may be repeated. Defaults to the scenario's queries.
    #[arg(long = "query")]
    queries: Vec<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Maximum number of hypotheses (or ground states) per phase.
    #[arg(long, default_value_t = 1_000_000)]
    guard: usize,
    /// Drop hypotheses whose weight falls below this value.
    #[arg(long)]
    prune: Option<f64>,
    /// Report hypothesis counts after merging equal states (default).
    #[arg(long, conflicts_with = "report_unmerged")]
    report_merged: bool,
    /// Report hypothesis counts before merging.
    #[arg(long)]
    report_unmerged: bool,
    /// Record wall time per step. Output is then no longer reproducible.
    #[arg(long)]
    timing: bool,
    /// Expand hypotheses on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = EngineArg::Lifted)]
    engine: EngineArg,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Lifted,
    Grounded,
    Both,
}

/// A failed command: exit code plus a diagnostic for stderr.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    t: Option<u32>,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, kind: "config", t: None, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: 1, kind: "io", t: None, message: format!("{}: {e}", path.display()) }
    }

    fn engine(t: Option<u32>, e: &Error) -> Self {
        let (code, kind) = match e {
            Error::ImpossibleObservation => (3, "impossible_observation"),
            Error::ExplosionGuard { .. } => (4, "explosion_guard"),
            Error::Parse(_) | Error::Validation { .. } | Error::UnknownScenario(_) => (2, "config"),
            _ => (1, "engine"),
        };
        Failure { code, kind, t, message: e.to_string() }
    }

    fn report(&self) {
        let mut m = serde_json::Map::new();
        m.insert("error".into(), self.kind.into());
        if let Some(t) = self.t {
            m.insert("t".into(), t.into());
        }
        m.insert("message".into(), self.message.clone().into());
        eprintln!("{}", serde_json::Value::Object(m));
    }
}

type CmdResult = Result<(), Failure>;

fn load_scenario(a: &ScenarioArgs) -> Result<Scenario, Failure> {
    let sc = match (&a.scenario, &a.scenario_file) {
        (Some(r), None) => from_reference(r),
        (None, Some(p)) => Scenario::load(p),
        _ => return Err(Failure::config("one of --scenario or --scenario-file is required")),
    };
    sc.map_err(|e| Failure::engine(None, &e))
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn trace_path(dir: &Path, sc: &Scenario, seed: u64) -> PathBuf {
    dir.join(format!("{}-seed{seed}.trace", sc.name))
}

fn write_trace(path: &Path, trace: &Trace) -> CmdResult {
    std::fs::write(path, trace.to_jsonl()).map_err(|e| Failure::io(path, e))
}

fn cmd_sample(a: SampleArgs) -> CmdResult {
    let sc = load_scenario(&a.scenario)?;
    let horizon = a.horizon.unwrap_or(sc.horizon);
    let trace = sample_trace(&sc, a.seed, horizon).map_err(|e| Failure::engine(None, &e))?;
    create_dir(&a.out_dir)?;
    let path = trace_path(&a.out_dir, &sc, a.seed);
    write_trace(&path, &trace)?;
    for s in &trace.steps {
        if let Some(g) = &s.truth {
            println!("t={} {g}", s.t);
        }
    }
    println!("wrote {} ({} steps)", path.display(), trace.horizon());
    Ok(())
}

/// Loads the trace named on the command line or samples one, writing it
/// next to the other outputs.
fn obtain_trace(a: &RunArgs, sc: &Scenario) -> Result<Trace, Failure> {
    let trace = match (&a.trace, a.seed) {
        (Some(p), None) => Trace::load(p).map_err(|e| Failure::engine(None, &e))?,
        (None, Some(seed)) => {
            let t = sample_trace(sc, seed, a.horizon.unwrap_or(sc.horizon)).map_err(|e| Failure::engine(None, &e))?;
            write_trace(&trace_path(&a.out_dir, sc, seed), &t)?;
            t
        }
        _ => return Err(Failure::config("exactly one of --trace or --seed is required")),
    };
    trace.check_against(sc).map_err(|e| Failure::engine(None, &e))?;
    Ok(trace)
}

fn parse_queries(a: &RunArgs, sc: &Scenario) -> Result<Vec<Query>, Failure> {
    if a.queries.is_empty() {
        return Ok(sc.queries.clone());
    }
    a.queries
        .iter()
        .map(|q| q.parse::<Query>().map_err(|e| Failure::engine(None, &e)))
        .collect()
}

fn filter_config(a: &RunArgs) -> Result<FilterConfig, Failure> {
    let prune = match a.prune {
        None => None,
        Some(eps) if eps.is_finite() && (0.0..1.0).contains(&eps) => prob::from_f64(eps),
        Some(eps) => return Err(Failure::config(format!("--prune {eps} is not in [0, 1)"))),
    };
    Ok(FilterConfig {
        guard: a.guard,
        prune,
        parallel: !a.sequential,
        timing: a.timing,
        ..FilterConfig::default()
    })
}

struct Prepared {
    trace: Trace,
    queries: Vec<Query>,
    config: FilterConfig,
    scenario: Scenario,
}

fn prepare(a: &RunArgs) -> Result<Prepared, Failure> {
    let scenario = load_scenario(&a.scenario)?;
    let queries = parse_queries(a, &scenario)?;
    let config = filter_config(a)?;
    create_dir(&a.out_dir)?;
    let trace = obtain_trace(a, &scenario)?;
    Ok(Prepared { trace, queries, config, scenario })
}

fn run_engines(a: &RunArgs, p: &Prepared, engine: EngineArg) -> Vec<RunOutput> {
    let mut runs = Vec::new();
    if engine != EngineArg::Grounded {
        runs.push(run_lifted(&p.scenario, &p.trace, &p.queries, p.config.clone()));
    }
    if engine != EngineArg::Lifted {
        runs.push(run_grounded(&p.scenario, &p.trace, &p.queries, a.guard, a.timing));
    }
    runs
}

/// The first failure among the runs, if any.
fn first_failure(runs: &[RunOutput]) -> CmdResult {
    match runs.iter().find_map(|r| r.failure.as_ref()) {
        Some((t, e)) => Err(Failure::engine(Some(*t), e)),
        None => Ok(()),
    }
}

fn cmd_filter(a: &RunArgs, engine: EngineArg) -> CmdResult {
    let p = prepare(a)?;
    let runs = run_engines(a, &p, engine);
    output::write_runs(&a.out_dir, &runs, a.report_unmerged)?;
    for r in &runs {
        println!("{}: {} steps, peak {} hypotheses", r.engine, r.steps.len(), r.peak());
    }
    first_failure(&runs)
}

fn cmd_compare(a: &RunArgs) -> CmdResult {
    let p = prepare(a)?;
    let runs = run_engines(a, &p, EngineArg::Both);
    output::write_runs(&a.out_dir, &runs, a.report_unmerged)?;
    let report = compare(&runs[0], &runs[1]);
    output::write_compare(&a.out_dir, &report)?;
    println!(
        "max diff {:e} over {} steps; lifted never larger: {}",
        report.max_diff(),
        report.rows.len(),
        report.lifted_never_larger()
    );
    first_failure(&runs)?;
    if !report.agrees_within(COMPARE_TOLERANCE) {
        let worst = report.rows.iter().find(|r| r.max_diff > COMPARE_TOLERANCE).map(|r| r.t);
        return Err(Failure {
            code: 5,
            kind: "marginals_differ",
            t: worst,
            message: format!("marginals differ by {:e}", report.max_diff()),
        });
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let sc = load_scenario(&a.scenario)?;
    println!(
        "scenario {}: {} locations, {} schemas, {} sensors, {} initial hypotheses",
        sc.name,
        sc.locations.len(),
        sc.schemas.len(),
        sc.sensors.len(),
        sc.initial.len()
    );
    if let Some(path) = &a.trace {
        let t = Trace::load(path).map_err(|e| Failure::engine(None, &e))?;
        t.check_against(&sc).map_err(|e| Failure::engine(None, &e))?;
        println!("trace {}: {} steps", path.display(), t.horizon());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Filter(a) => cmd_filter(&a.run, a.engine),
        Command::Oracle(a) => cmd_filter(&a, EngineArg::Grounded),
        Command::Compare(a) => cmd_compare(&a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code)
        }
    }
}
