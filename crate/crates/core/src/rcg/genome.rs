//! Two-chromosome encoding: per-VNF and per-chain genes, plus backup genes.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{detour_endpoints, evaluate, EvalOptions, Evaluation, PenaltyWeights};
use crate::model::{
    segment_cuts, walk_nodes, Assignment, BackupPath, BackupVnf, LinkId, Placement, PrimaryPath,
    ProtectionLayout, ServerId, ServiceId, ServiceRequest, Solution, SubstrateNetwork, TypeId,
};
use crate::paths::{is_loop_free, Path, PathCatalog};
use crate::reliability::layout_reliability;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfGene {
    pub location: ServerId,
    pub function_type: TypeId,
    pub sfc_id: ServiceId,
    pub position_in_chain: usize,
    /// Indices into the individual's backup genes.
    pub assigned_backups: Vec<usize>,
    /// Detour toward each assigned backup, aligned with `assigned_backups`.
    pub backup_access_links: Vec<Vec<LinkId>>,
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcGene {
    pub sfc_id: ServiceId,
    pub used_links: Vec<LinkId>,
    pub max_delay: f64,
    pub min_reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupGene {
    pub location: ServerId,
    pub function_type: TypeId,
    pub user_vnfs: Vec<(ServiceId, usize)>,
    /// Mean effective reliability of the protected VNFs.
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Creation sequence number; breaks fitness ties.
    pub id: u64,
    /// `vnfs[s][j]` follows the request order.
    pub vnfs: Vec<Vec<VnfGene>>,
    pub sfcs: Vec<SfcGene>,
    pub backups: Vec<BackupGene>,
    pub fitness: f64,
    pub penalty: f64,
    pub objective: f64,
    pub feasible: bool,
    pub rank: usize,
}

/// Everything an operator needs about the instance.
type Detour = Option<Arc<Vec<LinkId>>>;

pub struct Context<'a> {
    pub net: &'a SubstrateNetwork,
    pub reqs: &'a [ServiceRequest],
    pub catalog: PathCatalog,
    pub opts: EvalOptions,
    pub weights: PenaltyWeights,
    pub max_backups_per_vnf: usize,
    ids: Vec<ServerId>,
    detours: Mutex<HashMap<(ServerId, ServerId, ServerId), Detour>>,
}

impl<'a> Context<'a> {
    pub fn new(
        net: &'a SubstrateNetwork,
        reqs: &'a [ServiceRequest],
        k_paths: usize,
        opts: EvalOptions,
        weights: PenaltyWeights,
        max_backups_per_vnf: usize,
    ) -> Self {
        Self {
            net,
            reqs,
            catalog: PathCatalog::new(net, Some(k_paths.max(1))),
            opts,
            weights,
            max_backups_per_vnf,
            ids: net.servers().iter().map(|s| s.id).collect(),
            detours: Mutex::new(HashMap::new()),
        }
    }

    /// First catalog detour `prev -> via -> next`, memoized.
    pub fn first_detour(
        &self,
        prev: ServerId,
        via: ServerId,
        next: ServerId,
    ) -> Option<Arc<Vec<LinkId>>> {
        let key = (prev, via, next);
        if let Some(hit) = self.detours.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let found = self
            .catalog
            .detours(prev, via, next)
            .into_iter()
            .next()
            .map(|p| Arc::new(p.links));
        self.detours
            .lock()
            .expect("cache lock")
            .insert(key, found.clone());
        found
    }

    pub fn server_ids(&self) -> &[ServerId] {
        &self.ids
    }

    pub(crate) fn capacity(&self, h: ServerId) -> f64 {
        self.net.server(h).map_or(0.0, |s| s.capacity) + self.opts.capacity_slack
    }
}

impl Individual {
    pub fn hosts(&self) -> Vec<Vec<ServerId>> {
        self.vnfs
            .iter()
            .map(|c| c.iter().map(|g| g.location).collect())
            .collect()
    }

    pub fn layout(&self) -> ProtectionLayout {
        let backups = self
            .backups
            .iter()
            .enumerate()
            .map(|(b, g)| BackupVnf {
                id: b as u32,
                vnf_type: g.function_type,
                host: g.location,
                cpu_reservation: 0.0,
            })
            .collect();
        let assigned = self.vnfs.iter().enumerate().flat_map(|(s, c)| {
            c.iter()
                .enumerate()
                .flat_map(move |(j, g)| g.assigned_backups.iter().map(move |&b| (s, j, b)))
        });
        ProtectionLayout::from_parts(self.hosts(), backups, assigned)
    }

    pub fn decode(&self) -> Solution {
        let mut sol = Solution::default();
        for (b, g) in self.backups.iter().enumerate() {
            sol.backups.push(BackupVnf {
                id: b as u32,
                vnf_type: g.function_type,
                host: g.location,
                cpu_reservation: 0.0,
            });
        }
        for (chain, sfc) in self.vnfs.iter().zip(&self.sfcs) {
            sol.primary_paths.push(PrimaryPath {
                service: sfc.sfc_id,
                links: sfc.used_links.clone(),
            });
            for g in chain {
                sol.placements.push(Placement {
                    service: g.sfc_id,
                    position: g.position_in_chain,
                    server: g.location,
                });
                for (&b, links) in g.assigned_backups.iter().zip(&g.backup_access_links) {
                    sol.assignments.push(Assignment {
                        service: g.sfc_id,
                        position: g.position_in_chain,
                        backup: b as u32,
                    });
                    sol.backup_paths.push(BackupPath {
                        service: g.sfc_id,
                        position: g.position_in_chain,
                        backup: b as u32,
                        links: links.clone(),
                    });
                }
            }
        }
        sol.canonicalize();
        sol
    }

    pub fn evaluate(&self, ctx: &Context) -> Evaluation {
        evaluate(&self.decode(), ctx.net, ctx.reqs, &ctx.opts)
            .expect("repaired individuals decode to well-formed solutions")
    }

    /// Current CPU use per server: primary demand plus, per backup with
    /// users, the largest user demand.
    pub fn cpu_loads(&self, ctx: &Context) -> BTreeMap<ServerId, f64> {
        let mut loads: BTreeMap<ServerId, f64> =
            ctx.server_ids().iter().map(|&h| (h, 0.0)).collect();
        let mut reserve = vec![0.0f64; self.backups.len()];
        for (s, chain) in self.vnfs.iter().enumerate() {
            for (j, g) in chain.iter().enumerate() {
                let d = ctx.reqs[s].chain[j].cpu_demand;
                *loads.entry(g.location).or_insert(0.0) += d;
                for &b in &g.assigned_backups {
                    reserve[b] = reserve[b].max(d);
                }
            }
        }
        for (bk, r) in self.backups.iter().zip(reserve) {
            *loads.entry(bk.location).or_insert(0.0) += r;
        }
        loads
    }
}

/// Shortest candidate per segment that keeps the walk free of repeated
/// links, falling back to plain shortest segments. `None` when some segment
/// has no path at all.
pub fn route_walk(
    ctx: &Context,
    req: &ServiceRequest,
    hosts: &[ServerId],
    rng: Option<&mut ChaCha8Rng>,
) -> Option<Vec<LinkId>> {
    let mut rng = rng;
    let mut used: Vec<LinkId> = Vec::new();
    let mut walk = Vec::new();
    let mut at = req.source;
    for &h in hosts.iter().chain(std::iter::once(&req.destination)) {
        let cands = ctx.catalog.paths(at, h);
        if cands.is_empty() {
            return None;
        }
        let clean: Vec<&Path> = cands
            .iter()
            .filter(|p| {
                p.links
                    .iter()
                    .all(|l| !used.contains(l) && !used.contains(&(l ^ 1)))
            })
            .collect();
        let pick = match (&mut rng, clean.is_empty()) {
            (_, true) => &cands[0],
            (Some(r), false) => clean[r.gen_range(0..clean.len())],
            (None, false) => clean[0],
        };
        used.extend_from_slice(&pick.links);
        walk.extend_from_slice(&pick.links);
        at = h;
    }
    Some(walk)
}

fn walk_is_valid(ctx: &Context, req: &ServiceRequest, hosts: &[ServerId], walk: &[LinkId]) -> bool {
    if walk.iter().any(|&l| l >= ctx.net.links().len()) || !is_loop_free(walk) {
        return false;
    }
    let Some(nodes) = walk_nodes(ctx.net, req.source, walk) else {
        return false;
    };
    nodes.first() == Some(&req.source)
        && nodes.last() == Some(&req.destination)
        && segment_cuts(&nodes, hosts).is_some()
}

fn detour_is_valid(
    ctx: &Context,
    prev: ServerId,
    via: ServerId,
    next: ServerId,
    links: &[LinkId],
) -> bool {
    if links.is_empty() || links.iter().any(|&l| l >= ctx.net.links().len()) || !is_loop_free(links)
    {
        return false;
    }
    match ctx.net.node_sequence(prev, links) {
        Some(nodes) => nodes.last() == Some(&next) && nodes.contains(&via),
        None => false,
    }
}

/// Restores shape validity: moves VNFs off overloaded servers, drops bad
/// assignments, reroutes broken walks and detours, removes unused backups
/// and refreshes the derived fields. Returns false when some walk cannot be
/// routed at all.
pub fn repair(ind: &mut Individual, ctx: &Context) -> bool {
    relieve_overloads(ind, ctx);
    let m = ctx.max_backups_per_vnf;
    for (s, req) in ctx.reqs.iter().enumerate() {
        let hosts: Vec<ServerId> = ind.vnfs[s].iter().map(|g| g.location).collect();
        if !walk_is_valid(ctx, req, &hosts, &ind.sfcs[s].used_links) {
            match route_walk(ctx, req, &hosts, None) {
                Some(w) => ind.sfcs[s].used_links = w,
                None => return false,
            }
        }
        for j in 0..req.len() {
            let (prev, next) = detour_endpoints(&hosts, req, j);
            let g = &ind.vnfs[s][j];
            let mut keep_b = Vec::new();
            let mut keep_l = Vec::new();
            let mut seen_hosts = Vec::new();
            for (k, &b) in g.assigned_backups.iter().enumerate() {
                let Some(bk) = ind.backups.get(b) else {
                    continue;
                };
                if bk.function_type != g.function_type
                    || bk.location == g.location
                    || seen_hosts.contains(&bk.location)
                    || keep_b.contains(&b)
                    || keep_b.len() >= m
                {
                    continue;
                }
                let mut links = g.backup_access_links.get(k).cloned().unwrap_or_default();
                if !detour_is_valid(ctx, prev, bk.location, next, &links) {
                    match ctx.first_detour(prev, bk.location, next) {
                        Some(p) => links = p.to_vec(),
                        None => continue,
                    }
                }
                seen_hosts.push(bk.location);
                keep_b.push(b);
                keep_l.push(links);
            }
            let g = &mut ind.vnfs[s][j];
            g.assigned_backups = keep_b;
            g.backup_access_links = keep_l;
        }
    }
    compact_backups(ind);
    refresh(ind, ctx);
    true
}

/// While some server is at or over capacity, moves one backup off it (to
/// the most reliable server that fits and clashes with none of its users),
/// or failing that one primary (to the fitting server closest to its chain
/// neighbours). A backup that fits nowhere is detached from its users.
fn relieve_overloads(ind: &mut Individual, ctx: &Context) {
    let genes = ind.vnfs.iter().map(Vec::len).sum::<usize>() + ind.backups.len();
    for _ in 0..genes {
        let loads = ind.cpu_loads(ctx);
        let Some(h) = ctx
            .server_ids()
            .iter()
            .copied()
            .find(|&h| loads[&h] >= ctx.capacity(h))
        else {
            return;
        };
        let theta = |x: ServerId| ctx.net.server(x).map_or(0.0, |s| s.reliability);
        let in_use = |b: usize| {
            ind.vnfs
                .iter()
                .flatten()
                .any(|g| g.assigned_backups.contains(&b))
        };
        if let Some(b) = (0..ind.backups.len()).find(|&b| ind.backups[b].location == h && in_use(b))
        {
            let users: Vec<(usize, usize)> = (0..ind.vnfs.len())
                .flat_map(|s| (0..ind.vnfs[s].len()).map(move |j| (s, j)))
                .filter(|&(s, j)| ind.vnfs[s][j].assigned_backups.contains(&b))
                .collect();
            let demand = users
                .iter()
                .map(|&(s, j)| ctx.reqs[s].chain[j].cpu_demand)
                .fold(0.0, f64::max);
            let mut clash: Vec<ServerId> = Vec::new();
            for &(s, j) in &users {
                let g = &ind.vnfs[s][j];
                clash.push(g.location);
                clash.extend(g.assigned_backups.iter().map(|&o| ind.backups[o].location));
            }
            let target = ctx
                .server_ids()
                .iter()
                .copied()
                .filter(|&x| !clash.contains(&x) && loads[&x] + demand < ctx.capacity(x))
                .max_by(|&a, &b| theta(a).total_cmp(&theta(b)).then(b.cmp(&a)));
            match target {
                Some(x) => {
                    ind.backups[b].location = x;
                    for &(s, j) in &users {
                        let g = &mut ind.vnfs[s][j];
                        let k = g.assigned_backups.iter().position(|&o| o == b).unwrap();
                        g.backup_access_links[k].clear();
                    }
                }
                None => {
                    for &(s, j) in &users {
                        let g = &mut ind.vnfs[s][j];
                        let k = g.assigned_backups.iter().position(|&o| o == b).unwrap();
                        g.assigned_backups.remove(k);
                        g.backup_access_links.remove(k);
                    }
                }
            }
            continue;
        }
        let Some((s, j)) = (0..ind.vnfs.len())
            .flat_map(|s| (0..ind.vnfs[s].len()).map(move |j| (s, j)))
            .find(|&(s, j)| ind.vnfs[s][j].location == h)
        else {
            return;
        };
        let hosts: Vec<ServerId> = ind.vnfs[s].iter().map(|g| g.location).collect();
        let (prev, next) = detour_endpoints(&hosts, &ctx.reqs[s], j);
        let demand = ctx.reqs[s].chain[j].cpu_demand;
        let taken: Vec<ServerId> = ind.vnfs[s][j]
            .assigned_backups
            .iter()
            .map(|&o| ind.backups[o].location)
            .collect();
        let dist = |x: ServerId| {
            ctx.catalog.hops(prev, x).unwrap_or(usize::MAX / 4)
                + ctx.catalog.hops(x, next).unwrap_or(usize::MAX / 4)
        };
        let target = ctx
            .server_ids()
            .iter()
            .copied()
            .filter(|&x| x != h && !taken.contains(&x) && loads[&x] + demand < ctx.capacity(x))
            .min_by_key(|&x| (dist(x), x));
        let Some(x) = target else { return };
        ind.vnfs[s][j].location = x;
        ind.sfcs[s].used_links.clear();
    }
}

/// Removes backups nobody uses and renumbers the rest, preserving order.
fn compact_backups(ind: &mut Individual) {
    let mut used = vec![false; ind.backups.len()];
    for g in ind.vnfs.iter().flatten() {
        for &b in &g.assigned_backups {
            used[b] = true;
        }
    }
    let mut remap = vec![usize::MAX; ind.backups.len()];
    let mut next = 0;
    for (b, &u) in used.iter().enumerate() {
        if u {
            remap[b] = next;
            next += 1;
        }
    }
    let mut b = 0;
    ind.backups.retain(|_| {
        b += 1;
        used[b - 1]
    });
    for g in ind.vnfs.iter_mut().flatten() {
        for x in &mut g.assigned_backups {
            *x = remap[*x];
        }
        // keep each VNF's list ascending, detours aligned
        let mut pairs: Vec<(usize, Vec<LinkId>)> = g
            .assigned_backups
            .drain(..)
            .zip(g.backup_access_links.drain(..))
            .collect();
        pairs.sort_by_key(|p| p.0);
        for (b, l) in pairs {
            g.assigned_backups.push(b);
            g.backup_access_links.push(l);
        }
    }
}

/// Re-derives user lists and cached reliabilities.
pub fn refresh(ind: &mut Individual, ctx: &Context) {
    for bk in &mut ind.backups {
        bk.user_vnfs.clear();
    }
    for g in ind.vnfs.iter().flatten() {
        for &b in &g.assigned_backups {
            ind.backups[b]
                .user_vnfs
                .push((g.sfc_id, g.position_in_chain));
        }
    }
    for bk in &mut ind.backups {
        bk.user_vnfs.sort_unstable();
    }
    let rel = layout_reliability(&ind.layout(), ctx.net, ctx.reqs, ctx.opts.reliability);
    for (s, chain) in ind.vnfs.iter_mut().enumerate() {
        for (j, g) in chain.iter_mut().enumerate() {
            g.reliability = rel.per_vnf[s][j];
        }
    }
    let pos: BTreeMap<ServiceId, usize> = ctx
        .reqs
        .iter()
        .enumerate()
        .map(|(s, r)| (r.id, s))
        .collect();
    for bk in &mut ind.backups {
        let n = bk.user_vnfs.len().max(1) as f64;
        bk.reliability = bk
            .user_vnfs
            .iter()
            .map(|(id, j)| rel.per_vnf[pos[id]][*j])
            .sum::<f64>()
            / n;
    }
}

pub(crate) fn service_reliability(ind: &Individual, s: usize) -> f64 {
    ind.vnfs[s].iter().map(|g| g.reliability).product()
}

/// Least reliable VNF of service `s` that can take another backup.
pub(crate) fn weakest_open(ind: &Individual, ctx: &Context, s: usize) -> Option<usize> {
    (0..ind.vnfs[s].len())
        .filter(|&j| ind.vnfs[s][j].assigned_backups.len() < ctx.max_backups_per_vnf)
        .min_by(|&a, &b| {
            ind.vnfs[s][a]
                .reliability
                .total_cmp(&ind.vnfs[s][b].reliability)
        })
}

/// Random host whose CPU stays under capacity, if any.
pub fn feasible_host(
    ctx: &Context,
    loads: &BTreeMap<ServerId, f64>,
    demand: f64,
    exclude: &[ServerId],
    rng: &mut ChaCha8Rng,
) -> Option<ServerId> {
    let ok: Vec<ServerId> = ctx
        .server_ids()
        .iter()
        .copied()
        .filter(|h| {
            !exclude.contains(h) && loads.get(h).copied().unwrap_or(0.0) + demand < ctx.capacity(*h)
        })
        .collect();
    ok.choose(rng).copied()
}

/// Adds one backup to VNF `(s, j)`: joins a compatible existing backup with
/// probability `join_bias` when one exists, otherwise creates one on a
/// random capacity-feasible server. Only hosts with at least one candidate
/// detour are considered; the detour itself is filled in by the next repair.
pub fn add_backup(
    ind: &mut Individual,
    ctx: &Context,
    s: usize,
    j: usize,
    join_bias: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    let g = &ind.vnfs[s][j];
    if g.assigned_backups.len() >= ctx.max_backups_per_vnf {
        return false;
    }
    let host = g.location;
    let ty = g.function_type;
    let taken: Vec<ServerId> = g
        .assigned_backups
        .iter()
        .map(|&b| ind.backups[b].location)
        .collect();
    let hosts = ind.hosts();
    let (prev, next) = detour_endpoints(&hosts[s], &ctx.reqs[s], j);
    let reachable = |via: ServerId| ctx.first_detour(prev, via, next).is_some();
    let pos: BTreeMap<ServiceId, usize> = ctx
        .reqs
        .iter()
        .enumerate()
        .map(|(s, r)| (r.id, s))
        .collect();
    let joinable: Vec<usize> = (0..ind.backups.len())
        .filter(|&b| {
            let bk = &ind.backups[b];
            bk.function_type == ty
                && bk.location != host
                && !taken.contains(&bk.location)
                && !g.assigned_backups.contains(&b)
                && bk
                    .user_vnfs
                    .iter()
                    .all(|&(id, k)| hosts[pos[&id]][k] != host)
                && reachable(bk.location)
        })
        .collect();
    let chosen = if !joinable.is_empty() && rng.gen_bool(join_bias) {
        *joinable.choose(rng).unwrap()
    } else {
        let loads = ind.cpu_loads(ctx);
        let mut exclude = taken.clone();
        exclude.push(host);
        exclude.extend(ctx.server_ids().iter().copied().filter(|&h| !reachable(h)));
        let demand = ctx.reqs[s].chain[j].cpu_demand;
        let Some(h) = feasible_host(ctx, &loads, demand, &exclude, rng) else {
            return false;
        };
        ind.backups.push(BackupGene {
            location: h,
            function_type: ty,
            user_vnfs: Vec::new(),
            reliability: 0.0,
        });
        ind.backups.len() - 1
    };
    let g = &mut ind.vnfs[s][j];
    g.assigned_backups.push(chosen);
    g.backup_access_links.push(Vec::new());
    ind.backups[chosen].user_vnfs.push((ctx.reqs[s].id, j));
    true
}

/// A random individual. With `guided`, primaries are spread along a short
/// source-destination path and the least reliable VNFs are protected until
/// each service meets its target; otherwise placement and protection are
/// uniform.
pub fn random_individual(
    ctx: &Context,
    id: u64,
    guided: bool,
    rng: &mut ChaCha8Rng,
) -> Option<Individual> {
    let mut ind = Individual {
        id,
        vnfs: Vec::with_capacity(ctx.reqs.len()),
        sfcs: Vec::with_capacity(ctx.reqs.len()),
        backups: Vec::new(),
        fitness: f64::NEG_INFINITY,
        penalty: 0.0,
        objective: 0.0,
        feasible: false,
        rank: 0,
    };
    let mut loads: BTreeMap<ServerId, f64> = ctx.server_ids().iter().map(|&h| (h, 0.0)).collect();
    for req in ctx.reqs {
        let mut chain = Vec::with_capacity(req.len());
        let along: Vec<ServerId> = if guided {
            let paths = ctx.catalog.paths(req.source, req.destination);
            let p = paths.choose(rng)?;
            ctx.net.node_sequence(req.source, &p.links)?
        } else {
            Vec::new()
        };
        let mut from = 0;
        for (j, v) in req.chain.iter().enumerate() {
            let pick = if guided {
                let ok: Vec<usize> = (from..along.len())
                    .filter(|&i| loads[&along[i]] + v.cpu_demand < ctx.capacity(along[i]))
                    .collect();
                match ok.first() {
                    Some(&first) => {
                        // stay on the path, usually on the earliest free node
                        let i = if rng.gen_bool(0.7) {
                            first
                        } else {
                            *ok.choose(rng).unwrap()
                        };
                        from = i;
                        Some(along[i])
                    }
                    None => None,
                }
            } else {
                None
            };
            let h = match pick {
                Some(h) => h,
                None => feasible_host(ctx, &loads, v.cpu_demand, &[], rng)
                    .unwrap_or_else(|| *ctx.server_ids().choose(rng).unwrap()),
            };
            *loads.get_mut(&h).unwrap() += v.cpu_demand;
            chain.push(VnfGene {
                location: h,
                function_type: v.vnf_type,
                sfc_id: req.id,
                position_in_chain: j,
                assigned_backups: Vec::new(),
                backup_access_links: Vec::new(),
                reliability: 0.0,
            });
        }
        let hosts: Vec<ServerId> = chain.iter().map(|g| g.location).collect();
        let walk = route_walk(ctx, req, &hosts, Some(rng))?;
        ind.sfcs.push(SfcGene {
            sfc_id: req.id,
            used_links: walk,
            max_delay: req.max_delay,
            min_reliability: req.min_reliability,
        });
        ind.vnfs.push(chain);
    }
    if ctx.max_backups_per_vnf > 0 {
        if guided {
            refresh(&mut ind, ctx);
            for s in 0..ctx.reqs.len() {
                let mut tries = 0;
                while service_reliability(&ind, s) < ctx.reqs[s].min_reliability
                    && tries < 2 * ctx.reqs[s].len()
                {
                    tries += 1;
                    let Some(j) = weakest_open(&ind, ctx, s) else {
                        break;
                    };
                    add_backup(&mut ind, ctx, s, j, 0.8, rng);
                    if !repair(&mut ind, ctx) {
                        return None;
                    }
                }
            }
        } else {
            for s in 0..ctx.reqs.len() {
                for j in 0..ctx.reqs[s].len() {
                    if rng.gen_bool(0.5) {
                        add_backup(&mut ind, ctx, s, j, 0.5, rng);
                    }
                }
            }
        }
    }
    repair(&mut ind, ctx).then_some(ind)
}

#[cfg(test)]
pub(crate) fn most_reliable(ctx: &Context) -> ServerId {
    *ctx.server_ids()
        .iter()
        .max_by(|a, b| {
            let t = |h: ServerId| ctx.net.server(h).unwrap().reliability;
            t(**a).total_cmp(&t(**b))
        })
        .unwrap()
}
