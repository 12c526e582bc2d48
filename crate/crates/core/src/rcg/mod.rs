//! Reliability-aware genetic search.
//!
//! Each generation keeps the elites, breeds the rest of the population from
//! rank-selected pairs by one-point crossover over services, mutates and
//! repairs the children, and scores them. The loop stops once the fitness
//! diversity stays below the threshold for `stall_generations` generations in
//! a row, or at the generation cap.

mod genome;
mod operators;

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{evaluate, EvalError, EvalOptions, Evaluation, PenaltyWeights};
use crate::model::{ServiceRequest, Solution, SubstrateNetwork};
use crate::reliability::ReliabilityModel;

pub use genome::{
    add_backup, random_individual, repair, route_walk, BackupGene, Context, Individual, SfcGene,
    VnfGene,
};
pub use operators::{
    assign_ranks, by_fitness, crossover, crossover_at, diversity, fitness, mutate_and_repair,
    rank_select,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population_size: usize,
    pub elitism_rate: f64,
    pub mutation_rate: f64,
    pub convergence_threshold: f64,
    pub stall_generations: usize,
    pub generation_cap: usize,
    pub rng_seed: u64,
    pub objective_alpha: f64,
    pub k_paths: usize,
    pub max_backups_per_vnf: usize,
    pub reliability: ReliabilityModel,
    pub weights: PenaltyWeights,
    /// Share of the initial population built by the guided constructor.
    pub guided_fraction: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 50,
            elitism_rate: 0.1,
            mutation_rate: 0.05,
            convergence_threshold: 0.01,
            stall_generations: 5,
            generation_cap: 500,
            rng_seed: 0,
            objective_alpha: 0.5,
            k_paths: 8,
            max_backups_per_vnf: 1,
            reliability: ReliabilityModel::OneShot,
            weights: PenaltyWeights::default(),
            guided_fraction: 0.5,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<(), RcgError> {
        let bad = |m: &str| Err(RcgError::InvalidParams(m.to_string()));
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return bad("population_size must be even and at least 4");
        }
        if !(self.elitism_rate > 0.0 && self.elitism_rate < 1.0) {
            return bad("elitism_rate must lie strictly between 0 and 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1]");
        }
        if !(self.convergence_threshold >= 0.0) {
            return bad("convergence_threshold must be non-negative");
        }
        if self.stall_generations == 0 || self.generation_cap == 0 {
            return bad("stall_generations and generation_cap must be positive");
        }
        if !(0.0..=1.0).contains(&self.objective_alpha) {
            return bad("objective_alpha must lie in [0, 1]");
        }
        if self.k_paths == 0 {
            return bad("k_paths must be positive");
        }
        if !(0.0..=1.0).contains(&self.guided_fraction) {
            return bad("guided_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Elites per generation: the elitism share rounded down to an even
    /// count, at least two.
    pub fn elite_count(&self) -> usize {
        let raw = (self.population_size as f64 * self.elitism_rate).floor() as usize;
        (raw - raw % 2).max(2).min(self.population_size - 2)
    }

    pub fn pair_count(&self) -> usize {
        (self.population_size - self.elite_count()) / 2
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            alpha: self.objective_alpha,
            reliability: self.reliability,
            enforce_reliability: true,
            capacity_slack: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum RcgError {
    #[error("invalid genetic parameters: {0}")]
    InvalidParams(String),
    #[error("could not build an initial individual: {0}")]
    Initialization(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub population_size: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub diversity: f64,
    pub feasible_count: usize,
    /// Children replaced by fresh individuals because repair failed.
    pub replacements: usize,
}

#[derive(Debug, Clone)]
pub struct RcgResult {
    pub solution: Solution,
    pub evaluation: Evaluation,
    /// Whether a feasible individual was found; otherwise the least
    /// penalized one is returned.
    pub feasible: bool,
    pub generations: usize,
    pub telemetry: Vec<GenerationRecord>,
    pub wall_time: f64,
}

pub fn write_telemetry<W: Write>(rows: &[GenerationRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn context<'a>(net: &'a SubstrateNetwork, reqs: &'a [ServiceRequest], p: &GaParams) -> Context<'a> {
    Context::new(
        net,
        reqs,
        p.k_paths,
        p.eval_options(),
        p.weights,
        p.max_backups_per_vnf,
    )
}

fn check_hostable(net: &SubstrateNetwork, reqs: &[ServiceRequest]) -> Result<(), RcgError> {
    if reqs.is_empty() || reqs.iter().any(|r| r.is_empty()) {
        return Err(EvalError::NoVnfs.into());
    }
    for r in reqs {
        for (j, v) in r.chain.iter().enumerate() {
            if net.servers().iter().all(|s| v.cpu_demand >= s.capacity) {
                return Err(RcgError::Initialization(format!(
                    "service {} position {j} fits on no server",
                    r.id
                )));
            }
        }
    }
    Ok(())
}

fn init_with(
    ctx: &Context,
    p: &GaParams,
    rng: &mut ChaCha8Rng,
    next_id: &mut u64,
) -> Result<Vec<Individual>, RcgError> {
    check_hostable(ctx.net, ctx.reqs)?;
    let guided = (p.population_size as f64 * p.guided_fraction).ceil() as usize;
    let mut pop = Vec::with_capacity(p.population_size);
    let mut attempts = 0;
    while pop.len() < p.population_size && attempts < 10 * p.population_size {
        attempts += 1;
        if let Some(ind) = random_individual(ctx, *next_id, pop.len() < guided, rng) {
            *next_id += 1;
            pop.push(ind);
        }
    }
    if pop.is_empty() {
        return Err(RcgError::Initialization("no routable individual".into()));
    }
    let mut k = 0;
    while pop.len() < p.population_size {
        let mut clone = pop[k].clone();
        clone.id = *next_id;
        *next_id += 1;
        pop.push(clone);
        k += 1;
    }
    Ok(pop)
}

/// Seeded random population, every member repaired.
pub fn init_population(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    params: &GaParams,
) -> Result<Vec<Individual>, RcgError> {
    params.validate()?;
    let ctx = context(net, reqs, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut id = 0;
    init_with(&ctx, params, &mut rng, &mut id)
}

pub fn run_rcg(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    params: &GaParams,
) -> Result<RcgResult, RcgError> {
    params.validate()?;
    let start = Instant::now();
    let ctx = context(net, reqs, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut next_id = 0;
    let pop = init_with(&ctx, params, &mut rng, &mut next_id)?;
    evolve(&ctx, params, pop, rng, next_id, start)
}

/// Runs the loop from a given population, which must have
/// `population_size` members built for this instance.
pub fn run_rcg_with_population(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    params: &GaParams,
    population: Vec<Individual>,
) -> Result<RcgResult, RcgError> {
    params.validate()?;
    if population.len() != params.population_size {
        return Err(RcgError::InvalidParams(format!(
            "population has {} members, expected {}",
            population.len(),
            params.population_size
        )));
    }
    check_hostable(net, reqs)?;
    let start = Instant::now();
    let ctx = context(net, reqs, params);
    let rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let next_id = population.iter().map(|i| i.id + 1).max().unwrap_or(0);
    let mut pop = population;
    for ind in &mut pop {
        if !repair(ind, &ctx) {
            return Err(RcgError::Initialization(
                "seed individual cannot be repaired".into(),
            ));
        }
    }
    evolve(&ctx, params, pop, rng, next_id, start)
}

fn score(pop: &mut [Individual], ctx: &Context) {
    pop.par_iter_mut().for_each(|ind| {
        fitness(ind, ctx);
    });
}

fn evolve(
    ctx: &Context,
    p: &GaParams,
    mut pop: Vec<Individual>,
    mut rng: ChaCha8Rng,
    mut next_id: u64,
    start: Instant,
) -> Result<RcgResult, RcgError> {
    score(&mut pop, ctx);
    let mut best_feasible: Option<Individual> = None;
    let mut least_penalized: Option<Individual> = None;
    let mut remember = |pop: &[Individual]| {
        for ind in pop {
            if ind.feasible
                && best_feasible
                    .as_ref()
                    .is_none_or(|b| ind.objective < b.objective)
            {
                best_feasible = Some(ind.clone());
            }
            if least_penalized
                .as_ref()
                .is_none_or(|b| (ind.penalty, -ind.fitness) < (b.penalty, -b.fitness))
            {
                least_penalized = Some(ind.clone());
            }
        }
    };
    remember(&pop);

    let ne = p.elite_count();
    let nc = p.pair_count();
    let mut telemetry = Vec::new();
    let mut stall = 0;
    let mut generations = 0;
    while generations < p.generation_cap {
        generations += 1;
        assign_ranks(&mut pop);
        let pairs = rank_select(&pop, nc, &mut rng);
        let mut children = Vec::with_capacity(2 * nc);
        let mut replacements = 0;
        for (a, b) in pairs {
            let ids = (next_id, next_id + 1);
            next_id += 2;
            let (c, d) = crossover(&pop[a], &pop[b], ids, &mut rng);
            for mut child in [c, d] {
                if !(repair(&mut child, ctx)
                    && mutate_and_repair(&mut child, ctx, p.mutation_rate, &mut rng))
                {
                    replacements += 1;
                    match genome::random_individual(ctx, child.id, false, &mut rng) {
                        Some(fresh) => child = fresh,
                        None => child = pop[a].clone(),
                    }
                }
                children.push(child);
            }
        }
        score(&mut children, ctx);
        pop.truncate(ne);
        pop.extend(children);
        remember(&pop);

        let fits: Vec<f64> = pop.iter().map(|i| i.fitness).collect();
        let d = diversity(&fits);
        telemetry.push(GenerationRecord {
            generation: generations,
            population_size: pop.len(),
            best_fitness: fits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_fitness: fits.iter().sum::<f64>() / fits.len() as f64,
            diversity: d,
            feasible_count: pop.iter().filter(|i| i.feasible).count(),
            replacements,
        });
        if d < p.convergence_threshold {
            stall += 1;
            if stall >= p.stall_generations {
                break;
            }
        } else {
            stall = 0;
        }
    }

    let feasible = best_feasible.is_some();
    let winner = best_feasible
        .or(least_penalized)
        .expect("population is never empty");
    let solution = winner.decode();
    let evaluation = evaluate(&solution, ctx.net, ctx.reqs, &ctx.opts)?;
    Ok(RcgResult {
        solution,
        evaluation,
        feasible,
        generations,
        telemetry,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin_scenario_8node;

    #[test]
    fn parameter_validation_and_counts() {
        let p = GaParams::default();
        assert!(p.validate().is_ok());
        assert_eq!(p.elite_count() + 2 * p.pair_count(), p.population_size);
        for bad in [
            GaParams {
                population_size: 5,
                ..p.clone()
            },
            GaParams {
                population_size: 2,
                ..p.clone()
            },
            GaParams {
                elitism_rate: 1.0,
                ..p.clone()
            },
            GaParams {
                mutation_rate: 1.5,
                ..p.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        let small = GaParams {
            population_size: 4,
            ..p
        };
        assert_eq!((small.elite_count(), small.pair_count()), (2, 1));
    }

    #[test]
    fn builtin_run_is_feasible_and_repeatable() {
        let sc = builtin_scenario_8node();
        let p = GaParams {
            rng_seed: 7,
            ..GaParams::default()
        };
        let a = run_rcg(&sc.network, &sc.services, &p).unwrap();
        assert!(a.feasible);
        assert!(a.evaluation.report.feasible);
        assert!(a
            .evaluation
            .metrics
            .service_reliability
            .iter()
            .all(|&r| r >= 0.98));
        let b = run_rcg(&sc.network, &sc.services, &p).unwrap();
        assert_eq!(a.solution.to_json(), b.solution.to_json());
        assert_eq!(a.telemetry, b.telemetry);
    }

    #[test]
    fn telemetry_csv_has_a_header_and_rows() {
        let sc = builtin_scenario_8node();
        let p = GaParams {
            generation_cap: 3,
            convergence_threshold: 0.0,
            ..GaParams::default()
        };
        let r = run_rcg(&sc.network, &sc.services, &p).unwrap();
        assert_eq!(r.generations, 3);
        let mut buf = Vec::new();
        write_telemetry(&r.telemetry, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("generation,population_size,best_fitness,mean_fitness,diversity,feasible_count,replacements"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn unhostable_chain_fails_initialization() {
        let sc = builtin_scenario_8node();
        let mut reqs = sc.services.clone();
        reqs[0].chain[0].cpu_demand = 9.0;
        let err = init_population(&sc.network, &reqs, &GaParams::default()).unwrap_err();
        assert!(matches!(err, RcgError::Initialization(_)));
    }
}
