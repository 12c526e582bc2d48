//! Experiment plans, single runs and CSV output.
//!
//! Raw CSV columns: `algorithm, services, seed, status, feasible,
//! proven_optimal, objective, total_bandwidth, bandwidth_utilization,
//! cpu_utilization, backups, mean_reliability, min_reliability, wall_time,
//! nodes_expanded, generations, message`. Metric columns are empty when the
//! run produced no solution.
//!
//! Aggregate CSV: one row per `(algorithm, services)` with run counts and
//! mean/min/max of each metric over the runs that produced a solution.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{builtin_scenario_8node, generate_scenario, GenerateError};
use crate::baselines::{solve_dp, solve_np, solve_rp, RpConfig};
use crate::constraints::{evaluate, EvalOptions, Evaluation};
use crate::exact::{solve_exact, ProtectionMode, SearchConfig, SearchError};
use crate::model::{load_scenario, ModelError, Scenario, Solution};
use crate::rcg::{run_rcg, GaParams, GenerationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "SP_EXACT", alias = "sp-exact", alias = "sp_exact")]
    SpExact,
    #[serde(rename = "RCG", alias = "rcg")]
    Rcg,
    #[serde(rename = "DP", alias = "dp")]
    Dp,
    #[serde(rename = "NP", alias = "np")]
    Np,
    #[serde(rename = "RP", alias = "rp")]
    Rp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::SpExact,
        Algorithm::Rcg,
        Algorithm::Dp,
        Algorithm::Np,
        Algorithm::Rp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SpExact => "SP_EXACT",
            Algorithm::Rcg => "RCG",
            Algorithm::Dp => "DP",
            Algorithm::Np => "NP",
            Algorithm::Rp => "RP",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_uppercase().replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| {
                format!("unknown algorithm {s:?}; expected one of SP_EXACT, RCG, DP, NP, RP")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSource {
    /// A scenario file; each run keeps the first `services` requests.
    File { path: PathBuf },
    /// The built-in 8-node scenario, truncated like a file.
    Builtin,
    /// A fresh random scenario per `(services, seed)`.
    Generate { nodes: usize, links: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioSource,
    pub algorithms: Vec<Algorithm>,
    pub service_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub settings: RunSettings,
}

fn default_alpha() -> f64 {
    0.5
}

/// Solver knobs shared by every run of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Seconds per exact-search run.
    pub time_limit: Option<f64>,
    pub node_limit: Option<u64>,
    pub k_paths: Option<usize>,
    pub max_backups_per_vnf: usize,
    pub rcg: GaParams,
    pub rp: RpConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            time_limit: Some(10.0),
            node_limit: None,
            k_paths: Some(8),
            max_backups_per_vnf: 1,
            rcg: GaParams::default(),
            rp: RpConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("cannot read plan {path}: {source}")]
    PlanIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse plan: {0}")]
    PlanParse(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let plan: Self = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Reads a plan; relative scenario and output paths are resolved
    /// against the plan file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| HarnessError::PlanIo {
            path: path.to_path_buf(),
            source,
        })?;
        let mut plan = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ScenarioSource::File { path } = &mut plan.scenario {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if plan.output_dir.is_relative() {
            plan.output_dir = base.join(&plan.output_dir);
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidPlan(m.to_string()));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.service_counts.is_empty() || self.service_counts.contains(&0) {
            return bad("service_counts must be non-empty and positive");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        Ok(())
    }

    /// Every `(algorithm, services, seed)` combination in output order.
    pub fn runs(&self) -> Vec<(Algorithm, usize, u64)> {
        let mut out = Vec::new();
        for &a in &self.algorithms {
            for &n in &self.service_counts {
                for &s in &self.seeds {
                    out.push((a, n, s));
                }
            }
        }
        out
    }

    fn scenario(&self, services: usize, seed: u64) -> Result<Scenario, HarnessError> {
        let truncate = |sc: Scenario| {
            if services > sc.services.len() {
                Err(HarnessError::InvalidPlan(format!(
                    "scenario has {} services, {services} requested",
                    sc.services.len()
                )))
            } else {
                Ok(sc.with_service_count(services))
            }
        };
        match &self.scenario {
            ScenarioSource::File { path } => truncate(load_scenario(path)?),
            ScenarioSource::Builtin => truncate(builtin_scenario_8node()),
            ScenarioSource::Generate { nodes, links } => {
                Ok(generate_scenario(*nodes, *links, services, seed)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Heuristic finished, or exact search proved optimality.
    Ok,
    /// Exact search returned an incumbent without an optimality proof.
    BudgetLimited,
    /// No solution exists, or the heuristic found none it could certify.
    Infeasible,
    /// Exact search ran out of budget without any incumbent.
    BudgetExhausted,
    Error,
}

/// Result of one solver run, re-evaluated independently of the solver.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub algorithm: Algorithm,
    pub status: RunStatus,
    pub solution: Option<Solution>,
    pub evaluation: Option<Evaluation>,
    pub proven_optimal: bool,
    pub wall_time: f64,
    pub nodes_expanded: u64,
    pub generations: usize,
    /// Per-generation records; RCG only.
    pub telemetry: Vec<GenerationRecord>,
    pub message: String,
}

impl RunOutcome {
    fn failed(algorithm: Algorithm, status: RunStatus, wall_time: f64, message: String) -> Self {
        Self {
            algorithm,
            status,
            solution: None,
            evaluation: None,
            proven_optimal: false,
            wall_time,
            nodes_expanded: 0,
            generations: 0,
            telemetry: Vec::new(),
            message,
        }
    }

    pub fn feasible(&self) -> bool {
        self.evaluation.as_ref().is_some_and(|e| e.report.feasible)
    }
}

pub fn search_config(alpha: f64, settings: &RunSettings) -> SearchConfig {
    SearchConfig {
        alpha,
        k_paths: settings.k_paths,
        node_limit: settings.node_limit,
        time_limit: settings.time_limit,
        max_backups_per_vnf: settings.max_backups_per_vnf,
        ..SearchConfig::default()
    }
}

/// Runs one algorithm and evaluates its output with the constraint checker.
pub fn run_algorithm(
    algorithm: Algorithm,
    scenario: &Scenario,
    alpha: f64,
    seed: u64,
    settings: &RunSettings,
) -> RunOutcome {
    let net = &scenario.network;
    let reqs = &scenario.services;
    let cfg = search_config(alpha, settings);
    let start = Instant::now();
    let exact = match algorithm {
        Algorithm::SpExact => Some(solve_exact(
            net,
            reqs,
            &SearchConfig {
                mode: ProtectionMode::SharedProtection,
                ..cfg.clone()
            },
        )),
        Algorithm::Dp => Some(solve_dp(net, reqs, &cfg)),
        Algorithm::Np => Some(solve_np(net, reqs, &cfg)),
        Algorithm::Rp => Some(solve_rp(net, reqs, &cfg, &settings.rp, seed)),
        Algorithm::Rcg => None,
    };
    let (solution, proven, nodes, telemetry, mut message) = match exact {
        Some(Ok(r)) => {
            let proven = r.stats.proven_optimal && algorithm != Algorithm::Rp;
            (
                r.solution,
                proven,
                r.stats.nodes_expanded,
                Vec::new(),
                String::new(),
            )
        }
        Some(Err(e)) => {
            let status = match &e {
                SearchError::Infeasible { .. } => RunStatus::Infeasible,
                SearchError::BudgetExhausted { .. } => RunStatus::BudgetExhausted,
                _ => RunStatus::Error,
            };
            let mut out = RunOutcome::failed(
                algorithm,
                status,
                start.elapsed().as_secs_f64(),
                e.to_string(),
            );
            out.nodes_expanded = e.stats().map_or(0, |s| s.nodes_expanded);
            return out;
        }
        None => {
            let params = GaParams {
                rng_seed: seed,
                objective_alpha: alpha,
                k_paths: settings.k_paths.unwrap_or(settings.rcg.k_paths),
                max_backups_per_vnf: settings.max_backups_per_vnf,
                ..settings.rcg.clone()
            };
            match run_rcg(net, reqs, &params) {
                Ok(r) => {
                    let msg = if r.feasible {
                        String::new()
                    } else {
                        "no feasible individual found".to_string()
                    };
                    (r.solution, false, 0, r.telemetry, msg)
                }
                Err(e) => {
                    return RunOutcome::failed(
                        algorithm,
                        RunStatus::Error,
                        start.elapsed().as_secs_f64(),
                        e.to_string(),
                    )
                }
            }
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    // the verdict always comes from a fresh evaluation
    let opts = EvalOptions {
        enforce_reliability: algorithm != Algorithm::Np,
        ..cfg.eval_options()
    };
    let evaluation = match evaluate(&solution, net, reqs, &opts) {
        Ok(ev) => ev,
        Err(e) => return RunOutcome::failed(algorithm, RunStatus::Error, wall_time, e.to_string()),
    };
    let status = match algorithm {
        Algorithm::SpExact | Algorithm::Dp | Algorithm::Np if !proven => RunStatus::BudgetLimited,
        _ if !evaluation.report.feasible => RunStatus::Infeasible,
        _ => RunStatus::Ok,
    };
    if algorithm == Algorithm::Rp && !evaluation.report.feasible {
        let fams: Vec<String> = evaluation
            .report
            .failed_families()
            .iter()
            .map(|f| f.to_string())
            .collect();
        message = format!("violates {}", fams.join(", "));
    }
    RunOutcome {
        algorithm,
        status,
        solution: Some(solution),
        evaluation: Some(evaluation),
        proven_optimal: proven,
        wall_time,
        nodes_expanded: nodes,
        generations: telemetry.len(),
        telemetry,
        message,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub algorithm: Algorithm,
    pub services: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub feasible: bool,
    pub proven_optimal: bool,
    pub objective: Option<f64>,
    pub total_bandwidth: Option<f64>,
    pub bandwidth_utilization: Option<f64>,
    pub cpu_utilization: Option<f64>,
    pub backups: Option<usize>,
    pub mean_reliability: Option<f64>,
    pub min_reliability: Option<f64>,
    pub wall_time: f64,
    pub nodes_expanded: u64,
    pub generations: usize,
    pub message: String,
}

impl RawRow {
    pub fn from_outcome(o: &RunOutcome, services: usize, seed: u64) -> Self {
        let m = o.evaluation.as_ref().map(|e| &e.metrics);
        Self {
            algorithm: o.algorithm,
            services,
            seed,
            status: o.status,
            feasible: o.feasible(),
            proven_optimal: o.proven_optimal,
            objective: m.map(|m| m.objective),
            total_bandwidth: m.map(|m| m.total_bandwidth),
            bandwidth_utilization: m.map(|m| m.bandwidth_utilization),
            cpu_utilization: m.map(|m| m.cpu_utilization),
            backups: m.map(|m| m.backup_count),
            mean_reliability: m.map(|m| m.mean_reliability()),
            min_reliability: m.map(|m| m.min_reliability()),
            wall_time: o.wall_time,
            nodes_expanded: o.nodes_expanded,
            generations: o.generations,
            message: o.message.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub services: usize,
    pub runs: usize,
    /// Runs that produced a solution.
    pub solved: usize,
    pub feasible: usize,
    pub objective_mean: Option<f64>,
    pub objective_min: Option<f64>,
    pub objective_max: Option<f64>,
    pub total_bandwidth_mean: Option<f64>,
    pub total_bandwidth_min: Option<f64>,
    pub total_bandwidth_max: Option<f64>,
    pub bandwidth_utilization_mean: Option<f64>,
    pub bandwidth_utilization_min: Option<f64>,
    pub bandwidth_utilization_max: Option<f64>,
    pub cpu_utilization_mean: Option<f64>,
    pub cpu_utilization_min: Option<f64>,
    pub cpu_utilization_max: Option<f64>,
    pub mean_reliability_mean: Option<f64>,
    pub mean_reliability_min: Option<f64>,
    pub mean_reliability_max: Option<f64>,
    pub wall_time_mean: f64,
    pub wall_time_min: f64,
    pub wall_time_max: f64,
}

pub fn aggregate(rows: &[RawRow]) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(Algorithm, usize), Vec<&RawRow>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.algorithm, r.services)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((algorithm, services), rs)| {
            let col = |f: fn(&RawRow) -> Option<f64>| {
                let v: Vec<f64> = rs.iter().filter_map(|r| f(r)).collect();
                Spread::of(&v)
            };
            let obj = col(|r| r.objective);
            let bw = col(|r| r.total_bandwidth);
            let bwu = col(|r| r.bandwidth_utilization);
            let cpu = col(|r| r.cpu_utilization);
            let rel = col(|r| r.mean_reliability);
            let time = col(|r| Some(r.wall_time)).unwrap_or_default();
            AggregateRow {
                algorithm,
                services,
                runs: rs.len(),
                solved: rs.iter().filter(|r| r.objective.is_some()).count(),
                feasible: rs.iter().filter(|r| r.feasible).count(),
                objective_mean: obj.map(|s| s.mean),
                objective_min: obj.map(|s| s.min),
                objective_max: obj.map(|s| s.max),
                total_bandwidth_mean: bw.map(|s| s.mean),
                total_bandwidth_min: bw.map(|s| s.min),
                total_bandwidth_max: bw.map(|s| s.max),
                bandwidth_utilization_mean: bwu.map(|s| s.mean),
                bandwidth_utilization_min: bwu.map(|s| s.min),
                bandwidth_utilization_max: bwu.map(|s| s.max),
                cpu_utilization_mean: cpu.map(|s| s.mean),
                cpu_utilization_min: cpu.map(|s| s.min),
                cpu_utilization_max: cpu.map(|s| s.max),
                mean_reliability_mean: rel.map(|s| s.mean),
                mean_reliability_min: rel.map(|s| s.min),
                mean_reliability_max: rel.map(|s| s.max),
                wall_time_mean: time.mean,
                wall_time_min: time.min,
                wall_time_max: time.max,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<(), HarnessError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|source| HarnessError::Output {
            path: tmp.clone(),
            source,
        })?;
    }
    fs::rename(&tmp, path).map_err(|source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<RawRow>, _>>()?)
}

fn write_atomic(path: &Path, text: &str) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    let err = |source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    };
    fs::write(&tmp, text).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub raw: Vec<RawRow>,
    pub aggregate: Vec<AggregateRow>,
    pub raw_path: PathBuf,
    pub aggregate_path: PathBuf,
}

/// Executes every run of the plan in parallel. Each solution is written to
/// `solutions/` as it completes; `raw.csv` and `aggregate.csv` follow once
/// all runs are done. Failing runs become rows, never errors.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutput, HarnessError> {
    plan.validate()?;
    let dir = &plan.output_dir;
    let sol_dir = dir.join("solutions");
    fs::create_dir_all(&sol_dir).map_err(|source| HarnessError::Output {
        path: sol_dir.clone(),
        source,
    })?;
    let results: Vec<Result<RawRow, HarnessError>> = plan
        .runs()
        .into_par_iter()
        .map(|(algorithm, services, seed)| {
            let outcome = match plan.scenario(services, seed) {
                Ok(sc) => run_algorithm(algorithm, &sc, plan.alpha, seed, &plan.settings),
                Err(e) => RunOutcome::failed(algorithm, RunStatus::Error, 0.0, e.to_string()),
            };
            if let Some(sol) = &outcome.solution {
                let name = format!(
                    "{}_{services}_{seed}.json",
                    algorithm.name().to_ascii_lowercase()
                );
                write_atomic(&sol_dir.join(name), &sol.to_json())?;
            }
            Ok(RawRow::from_outcome(&outcome, services, seed))
        })
        .collect();
    let raw = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let agg = aggregate(&raw);
    let raw_path = dir.join("raw.csv");
    let aggregate_path = dir.join("aggregate.csv");
    write_csv(&raw, &raw_path)?;
    write_csv(&agg, &aggregate_path)?;
    Ok(ExperimentOutput {
        raw,
        aggregate: agg,
        raw_path,
        aggregate_path,
    })
}
