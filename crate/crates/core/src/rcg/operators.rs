//! Scoring, selection, crossover, mutation and the diversity measure.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::genome::{
    add_backup, feasible_host, repair, route_walk, service_reliability, weakest_open, BackupGene,
    Context, Individual, VnfGene,
};
use crate::model::ServerId;

/// Scores an individual in place and returns `(fitness, penalty)`.
pub fn fitness(ind: &mut Individual, ctx: &Context) -> (f64, f64) {
    let ev = ind.evaluate(ctx);
    let penalty = ev.report.penalty(&ctx.weights);
    ind.objective = ev.metrics.objective;
    ind.penalty = penalty;
    ind.feasible = ev.report.feasible;
    ind.fitness = -ind.objective - penalty;
    (ind.fitness, penalty)
}

/// Best first; equal fitness falls back to the lower id.
pub fn by_fitness(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    b.fitness.total_cmp(&a.fitness).then(a.id.cmp(&b.id))
}

/// Sorts the population best first and assigns linear ranks, the best
/// getting the population size.
pub fn assign_ranks(pop: &mut [Individual]) {
    pop.sort_by(by_fitness);
    let n = pop.len();
    for (i, ind) in pop.iter_mut().enumerate() {
        ind.rank = n - i;
    }
}

/// Draws `pairs` parent pairs by linear ranking. The two members of a pair
/// are distinct individuals (when the population has at least two), listed
/// fitter first. Expects ranks from [`assign_ranks`]; returns indices into
/// `pop`.
pub fn rank_select(pop: &[Individual], pairs: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = pop.len();
    if n == 0 {
        return Vec::new();
    }
    let pick = |rng: &mut ChaCha8Rng, skip: Option<usize>| {
        let total: usize = (0..n)
            .filter(|&i| Some(i) != skip)
            .map(|i| pop[i].rank)
            .sum();
        let mut x = rng.gen_range(0..total.max(1));
        for i in (0..n).filter(|&i| Some(i) != skip) {
            if x < pop[i].rank {
                return i;
            }
            x -= pop[i].rank;
        }
        n - 1
    };
    (0..pairs)
        .map(|_| {
            let a = pick(rng, None);
            let b = if n > 1 { pick(rng, Some(a)) } else { a };
            if by_fitness(&pop[a], &pop[b]).is_le() {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect()
}

/// One-point crossover at service index `cut`: the first child takes
/// services `..cut` from `a` and the rest from `b`, the second child the
/// opposite. Backup genes referenced by the inherited services come along;
/// unused ones are dropped. Gene-identical parents yield copies of
/// themselves. Children still need [`repair`].
pub fn crossover_at(
    a: &Individual,
    b: &Individual,
    cut: usize,
    ids: (u64, u64),
) -> (Individual, Individual) {
    if a.vnfs == b.vnfs && a.sfcs == b.sfcs && a.backups == b.backups {
        let twin = |id| Individual { id, ..a.clone() };
        return (twin(ids.0), twin(ids.1));
    }
    (splice(a, b, cut, ids.0), splice(b, a, cut, ids.1))
}

pub fn crossover(
    a: &Individual,
    b: &Individual,
    ids: (u64, u64),
    rng: &mut ChaCha8Rng,
) -> (Individual, Individual) {
    let n = a.vnfs.len();
    let cut = if n >= 2 { rng.gen_range(1..n) } else { 0 };
    crossover_at(a, b, cut, ids)
}

fn splice(head: &Individual, tail: &Individual, cut: usize, id: u64) -> Individual {
    let mut child = Individual {
        id,
        vnfs: Vec::with_capacity(head.vnfs.len()),
        sfcs: Vec::with_capacity(head.sfcs.len()),
        backups: Vec::new(),
        fitness: f64::NEG_INFINITY,
        penalty: 0.0,
        objective: 0.0,
        feasible: false,
        rank: 0,
    };
    let mut remaps: [BTreeMap<usize, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for s in 0..head.vnfs.len() {
        let (src, which) = if s < cut { (head, 0) } else { (tail, 1) };
        let mut chain = src.vnfs[s].clone();
        for g in &mut chain {
            for b in &mut g.assigned_backups {
                let next = child.backups.len();
                let new = *remaps[which].entry(*b).or_insert_with(|| {
                    child.backups.push(BackupGene {
                        user_vnfs: Vec::new(),
                        ..src.backups[*b].clone()
                    });
                    next
                });
                *b = new;
            }
        }
        child.vnfs.push(chain);
        child.sfcs.push(src.sfcs[s].clone());
    }
    // a backup gene both parents hold at the same index, same server and
    // type, is one backup whose users straddle the cut
    for (orig, &t) in &remaps[1] {
        let Some(&h) = remaps[0].get(orig) else {
            continue;
        };
        let (x, y) = (&child.backups[h], &child.backups[t]);
        if x.location == y.location && x.function_type == y.function_type && can_merge(&child, h, t)
        {
            for g in child.vnfs.iter_mut().flatten() {
                for b in &mut g.assigned_backups {
                    if *b == t {
                        *b = h;
                    }
                }
            }
        }
    }
    child
}

/// Whether backup `t`'s users can join backup `h` without a VNF holding
/// both or two users sharing a host.
fn can_merge(ind: &Individual, h: usize, t: usize) -> bool {
    let on = |b: usize| -> Vec<&VnfGene> {
        ind.vnfs
            .iter()
            .flatten()
            .filter(|g| g.assigned_backups.contains(&b))
            .collect()
    };
    let (uh, ut) = (on(h), on(t));
    ut.iter()
        .all(|g| !g.assigned_backups.contains(&h) && uh.iter().all(|o| o.location != g.location))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    RelocateVnf,
    ToggleBackup,
    Reroute,
    RelocateBackup,
}

/// Chance that a service below its reliability target gets one more backup
/// in [`mutate_and_repair`].
pub const HEAL_PROBABILITY: f64 = 0.5;

/// Per-gene mutation with probability `rate`, followed by repair and a
/// healing pass that protects the weakest VNF of services missing their
/// reliability target. Returns false when the result cannot be repaired.
pub fn mutate_and_repair(
    ind: &mut Individual,
    ctx: &Context,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    if rate <= 0.0 {
        return true;
    }
    if !mutate(ind, ctx, rate, rng) {
        return false;
    }
    let mut healed = false;
    for s in 0..ind.vnfs.len() {
        if service_reliability(ind, s) >= ctx.reqs[s].min_reliability
            || !rng.gen_bool(HEAL_PROBABILITY)
        {
            continue;
        }
        healed |= match weakest_open(ind, ctx, s) {
            Some(j) if add_backup(ind, ctx, s, j, 0.8, rng) => true,
            _ => upgrade_weakest(ind, ctx, s, rng),
        };
    }
    !healed || repair(ind, ctx)
}

/// Moves the primary or one backup of the least reliable VNF of service `s`
/// to a random more reliable server with room for it.
fn upgrade_weakest(ind: &mut Individual, ctx: &Context, s: usize, rng: &mut ChaCha8Rng) -> bool {
    let Some(j) = (0..ind.vnfs[s].len()).min_by(|&a, &b| {
        ind.vnfs[s][a]
            .reliability
            .total_cmp(&ind.vnfs[s][b].reliability)
    }) else {
        return false;
    };
    let theta = |h: ServerId| ctx.net.server(h).map_or(0.0, |x| x.reliability);
    let loads = ind.cpu_loads(ctx);
    let demand = ctx.reqs[s].chain[j].cpu_demand;
    let g = &ind.vnfs[s][j];
    let mut occupied = vec![g.location];
    occupied.extend(g.assigned_backups.iter().map(|&b| ind.backups[b].location));
    let move_backup = !g.assigned_backups.is_empty() && rng.gen_bool(0.5);
    let current = if move_backup {
        let k = rng.gen_range(0..g.assigned_backups.len());
        (Some(k), ind.backups[g.assigned_backups[k]].location)
    } else {
        (None, g.location)
    };
    let better: Vec<ServerId> = ctx
        .server_ids()
        .iter()
        .copied()
        .filter(|&h| {
            !occupied.contains(&h)
                && theta(h) > theta(current.1)
                && loads[&h] + demand < ctx.capacity(h)
        })
        .collect();
    let Some(&h) = better.choose(rng) else {
        return false;
    };
    let g = &mut ind.vnfs[s][j];
    match current.0 {
        Some(k) => {
            // a private copy, so co-sharers keep their backup where it is
            g.assigned_backups.remove(k);
            g.backup_access_links.remove(k);
            ind.backups.push(BackupGene {
                location: h,
                function_type: g.function_type,
                user_vnfs: Vec::new(),
                reliability: 0.0,
            });
            g.assigned_backups.push(ind.backups.len() - 1);
            g.backup_access_links.push(Vec::new());
        }
        None => {
            g.location = h;
            ind.sfcs[s].used_links.clear();
        }
    }
    true
}

fn mutate(ind: &mut Individual, ctx: &Context, rate: f64, rng: &mut ChaCha8Rng) -> bool {
    let mut changed = false;
    for s in 0..ind.vnfs.len() {
        for j in 0..ind.vnfs[s].len() {
            if !rng.gen_bool(rate) {
                continue;
            }
            changed = true;
            let mv = if rng.gen_bool(0.5) {
                Move::RelocateVnf
            } else {
                Move::ToggleBackup
            };
            apply(ind, ctx, mv, s, j, rng);
        }
        if rng.gen_bool(rate) {
            changed = true;
            apply(ind, ctx, Move::Reroute, s, 0, rng);
        }
    }
    for b in 0..ind.backups.len() {
        if rng.gen_bool(rate) {
            changed = true;
            apply(ind, ctx, Move::RelocateBackup, b, 0, rng);
        }
    }
    !changed || repair(ind, ctx)
}

fn apply(ind: &mut Individual, ctx: &Context, mv: Move, s: usize, j: usize, rng: &mut ChaCha8Rng) {
    match mv {
        Move::RelocateVnf => {
            let loads = ind.cpu_loads(ctx);
            let here = ind.vnfs[s][j].location;
            let demand = ctx.reqs[s].chain[j].cpu_demand;
            if let Some(h) = feasible_host(ctx, &loads, demand, &[here], rng) {
                ind.vnfs[s][j].location = h;
                // force the walk through the new host
                ind.sfcs[s].used_links.clear();
            }
        }
        Move::ToggleBackup => {
            let g = &mut ind.vnfs[s][j];
            if g.assigned_backups.is_empty() {
                add_backup(ind, ctx, s, j, 0.5, rng);
            } else if rng.gen_bool(0.5) {
                let k = rng.gen_range(0..g.assigned_backups.len());
                g.assigned_backups.remove(k);
                g.backup_access_links.remove(k);
            } else {
                // retarget: drop one, then join or create another
                let k = rng.gen_range(0..g.assigned_backups.len());
                g.assigned_backups.remove(k);
                g.backup_access_links.remove(k);
                add_backup(ind, ctx, s, j, 0.7, rng);
            }
        }
        Move::Reroute => {
            let hosts: Vec<ServerId> = ind.vnfs[s].iter().map(|g| g.location).collect();
            if let Some(w) = route_walk(ctx, &ctx.reqs[s], &hosts, Some(rng)) {
                ind.sfcs[s].used_links = w;
            }
        }
        Move::RelocateBackup => {
            let b = s;
            let users: Vec<ServerId> = ind
                .vnfs
                .iter()
                .flatten()
                .filter(|g| g.assigned_backups.contains(&b))
                .map(|g| g.location)
                .collect();
            let mut options: Vec<ServerId> = ctx
                .server_ids()
                .iter()
                .copied()
                .filter(|h| *h != ind.backups[b].location && !users.contains(h))
                .collect();
            options.sort_unstable();
            if let Some(&h) = options.choose(rng) {
                ind.backups[b].location = h;
                for g in ind.vnfs.iter_mut().flatten() {
                    if let Some(k) = g.assigned_backups.iter().position(|&x| x == b) {
                        g.backup_access_links[k].clear();
                    }
                }
            }
        }
    }
}

/// Mean pairwise fitness gap divided by the largest absolute fitness. Zero
/// for fewer than two individuals or when every fitness is zero.
pub fn diversity(fitnesses: &[f64]) -> f64 {
    let n = fitnesses.len();
    if n < 2 {
        return 0.0;
    }
    let f_max = fitnesses.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    if f_max == 0.0 {
        return 0.0;
    }
    let mut gaps = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            gaps += (fitnesses[i] - fitnesses[j]).abs();
        }
    }
    2.0 / (n * (n - 1)) as f64 * gaps / f_max
}
