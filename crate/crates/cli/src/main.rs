use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sfcprot::constraints::{evaluate, EvalOptions};
use sfcprot::harness::{
    builtin_scenario_8node, generate_scenario, run_algorithm, run_experiment, toy_scenario,
    Algorithm, ExperimentPlan, RunSettings,
};
use sfcprot::mcsim::{estimate_reliability, ContentionRule, TrialConfig};
use sfcprot::model::{load_scenario, save_scenario, Scenario, Solution};
use sfcprot::rcg::write_telemetry;
use sfcprot::reliability::ReliabilityModel;

/// Exit status for a run that ended without a feasible solution.
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "sfcprot",
    version,
    about = "Reliability-aware SFC placement with shared backup protection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario file.
    Generate(GenerateArgs),
    /// Solve a scenario with one algorithm.
    Solve(SolveArgs),
    /// Run every combination in an experiment plan.
    Sweep {
        /// TOML experiment plan.
        plan: PathBuf,
    },
    /// Compare analytic and simulated reliability of a solution.
    McValidate(McArgs),
    /// Check a solution against every constraint.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 40)]
    links: usize,
    #[arg(long, default_value_t = 10)]
    services: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the built-in 8-node scenario instead of a random one.
    #[arg(long, conflicts_with = "toy")]
    builtin: bool,
    /// Emit a three-server toy instance.
    #[arg(long)]
    toy: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "SP_EXACT")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds allowed for exact search.
    #[arg(long, default_value_t = 10.0)]
    time_limit: f64,
    /// Keep only the first N services.
    #[arg(long)]
    services: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// CSV of per-generation RCG records.
    #[arg(long)]
    telemetry: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    scenario: PathBuf,
    solution: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Let every failed sharer use a live backup.
    #[arg(long)]
    no_contention: bool,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    scenario: PathBuf,
    solution: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Skip the reliability constraints.
    #[arg(long)]
    no_reliability: bool,
    #[arg(long, value_enum, default_value = "one-shot")]
    model: Model,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Model {
    OneShot,
    FixedPoint,
    Dedicated,
}

impl From<Model> for ReliabilityModel {
    fn from(m: Model) -> Self {
        match m {
            Model::OneShot => ReliabilityModel::OneShot,
            Model::FixedPoint => ReliabilityModel::FixedPoint,
            Model::Dedicated => ReliabilityModel::Dedicated,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_INFEASIBLE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns whether the command ended with a feasible result.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Sweep { plan } => sweep(&plan),
        Command::McValidate(a) => mc_validate(a),
        Command::Check(a) => check(a),
    }
}

fn read_solution(path: &Path) -> Result<Solution> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Solution::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    Ok(load_scenario(path)?)
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn generate(a: GenerateArgs) -> Result<bool> {
    let sc = if a.builtin {
        builtin_scenario_8node()
    } else if a.toy {
        toy_scenario(a.seed)
    } else {
        generate_scenario(a.nodes, a.links, a.services, a.seed)?
    };
    save_scenario(&sc, &a.out)?;
    emit(&json!({
            "servers": sc.network.servers().len(),
            "links": sc.network.links().len() / 2,
            "services": sc.services.len(),
            "out": a.out,
    }))?;
    Ok(true)
}

fn solve(a: SolveArgs) -> Result<bool> {
    let mut sc = read_scenario(&a.scenario)?;
    if let Some(n) = a.services {
        if n == 0 || n > sc.services.len() {
            bail!("--services must lie in 1..={}", sc.services.len());
        }
        sc = sc.with_service_count(n);
    }
    if !(0.0..=1.0).contains(&a.alpha) {
        bail!("--alpha must lie in [0, 1]");
    }
    let settings = RunSettings {
        time_limit: Some(a.time_limit),
        ..RunSettings::default()
    };
    let o = run_algorithm(a.algorithm, &sc, a.alpha, a.seed, &settings);
    if let (Some(path), Some(sol)) = (&a.out, &o.solution) {
        fs::write(path, sol.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.telemetry {
        let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_telemetry(&o.telemetry, f)?;
    }
    let metrics = o.evaluation.as_ref().map(|e| {
        json!({
            "objective": e.metrics.objective,
            "total_bandwidth": e.metrics.total_bandwidth,
            "backups": e.metrics.backup_count,
            "mean_reliability": e.metrics.mean_reliability(),
            "min_reliability": e.metrics.min_reliability(),
            "violations": e.report.failed_families().iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        })
    });
    emit(&json!({
            "algorithm": o.algorithm.name(),
            "status": o.status,
            "feasible": o.feasible(),
            "proven_optimal": o.proven_optimal,
            "wall_time": o.wall_time,
            "nodes_expanded": o.nodes_expanded,
            "generations": o.generations,
            "metrics": metrics,
            "message": o.message,
    }))?;
    if o.status == sfcprot::harness::RunStatus::Error {
        bail!("{}", o.message);
    }
    Ok(o.feasible())
}

fn sweep(plan: &Path) -> Result<bool> {
    let plan = ExperimentPlan::load(plan)?;
    let out = run_experiment(&plan)?;
    let feasible = out.raw.iter().filter(|r| r.feasible).count();
    emit(&json!({
            "runs": out.raw.len(),
            "feasible": feasible,
            "raw": out.raw_path,
            "aggregate": out.aggregate_path,
    }))?;
    Ok(true)
}

fn mc_validate(a: McArgs) -> Result<bool> {
    let sc = read_scenario(&a.scenario)?;
    let sol = read_solution(&a.solution)?;
    let (net, reqs) = (&sc.network, &sc.services);
    let ev = evaluate(&sol, net, reqs, &EvalOptions::default())?;
    let cfg = TrialConfig {
        trials: a.trials,
        rng_seed: a.seed,
        contention_rule: if a.no_contention {
            ContentionRule::Disabled
        } else {
            ContentionRule::MttrWeighted
        },
    };
    let mc = estimate_reliability(&sol, net, reqs, &cfg)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("writing {}", p.display()))?)
        }
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "service_id",
        "analytic",
        "empirical",
        "half_width",
        "trials",
    ])?;
    for (s, id) in mc.service_ids.iter().enumerate() {
        let e = mc.per_service[s];
        w.write_record([
            id.to_string(),
            ev.reliability.per_service[s].to_string(),
            e.probability.to_string(),
            e.half_width.map_or(String::new(), |h| h.to_string()),
            mc.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(true)
}

fn check(a: CheckArgs) -> Result<bool> {
    let sc = read_scenario(&a.scenario)?;
    let sol = read_solution(&a.solution)?;
    let opts = EvalOptions {
        alpha: a.alpha,
        reliability: a.model.into(),
        enforce_reliability: !a.no_reliability,
        ..EvalOptions::default()
    };
    let ev = evaluate(&sol, &sc.network, &sc.services, &opts)?;
    let failures: Vec<_> = ev.report.failures().collect();
    emit(&json!({
            "feasible": ev.report.feasible,
            "objective": ev.metrics.objective,
            "total_bandwidth": ev.metrics.total_bandwidth,
            "backups": ev.metrics.backup_count,
            "reliability": ev.reliability.per_service,
            "failures": failures,
    }))?;
    Ok(ev.report.feasible)
}
