//! Comparison schemes: dedicated protection, no protection and random
//! placement.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{detour_endpoints, evaluate};
use crate::exact::{
    solve_exact, ProtectionMode, SearchConfig, SearchError, SearchResult, SearchStats,
};
use crate::model::{
    Assignment, BackupPath, BackupVnf, LinkId, Placement, PrimaryPath, ServerId, ServiceRequest,
    Solution, SubstrateNetwork,
};
use crate::paths::{compose_detours, k_shortest_paths, Path};

/// Exact search with one private backup per protected VNF.
pub fn solve_dp(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    cfg: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    let cfg = SearchConfig {
        mode: ProtectionMode::DedicatedProtection,
        ..cfg.clone()
    };
    solve_exact(net, reqs, &cfg)
}

/// Exact search without backups or reliability requirements.
pub fn solve_np(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    cfg: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    let cfg = SearchConfig {
        mode: ProtectionMode::NoProtection,
        ..cfg.clone()
    };
    solve_exact(net, reqs, &cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpConfig {
    /// Chance that a VNF receives one backup.
    pub backup_probability: f64,
    /// Placement draws tried per service before accepting a walk that
    /// repeats links.
    pub attempts: usize,
    pub k_paths: usize,
}

impl Default for RpConfig {
    fn default() -> Self {
        Self {
            backup_probability: 0.5,
            attempts: 100,
            k_paths: 8,
        }
    }
}

/// Random capacity-feasible placement with random dedicated backups, routed
/// along short candidate paths. Always returns a solution; it is evaluated
/// with the ordinary checks and may be infeasible.
pub fn solve_rp(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    cfg: &SearchConfig,
    rp: &RpConfig,
    rng_seed: u64,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let catalog = LazyPaths::new(net, rp.k_paths.max(1));
    let mut cpu: Vec<f64> = vec![0.0; net.servers().len()];
    let fits = |cpu: &[f64], h: ServerId, d: f64| {
        let slot = net.slot(h).expect("known server");
        cpu[slot] + d < net.servers()[slot].capacity + cfg.capacity_slack
    };
    let ids: Vec<ServerId> = net.servers().iter().map(|s| s.id).collect();
    let mut sol = Solution::default();

    for req in reqs {
        let mut chosen = None;
        for attempt in 0..rp.attempts.max(1) {
            let mut trial_cpu = cpu.clone();
            let mut hosts = Vec::with_capacity(req.len());
            for v in &req.chain {
                let feasible: Vec<ServerId> = ids
                    .iter()
                    .copied()
                    .filter(|&h| fits(&trial_cpu, h, v.cpu_demand))
                    .collect();
                let h = *feasible
                    .choose(&mut rng)
                    .unwrap_or_else(|| ids.choose(&mut rng).unwrap());
                trial_cpu[net.slot(h).unwrap()] += v.cpu_demand;
                hosts.push(h);
            }
            let last = attempt + 1 == rp.attempts.max(1);
            if let Some(walk) = route(&catalog, req, &hosts, last) {
                chosen = Some((hosts, walk, trial_cpu));
                break;
            }
        }
        let (hosts, walk, trial_cpu) = chosen.expect("final attempt always routes");
        cpu = trial_cpu;

        for (j, &h) in hosts.iter().enumerate() {
            sol.placements.push(Placement {
                service: req.id,
                position: j,
                server: h,
            });
            if cfg.mode == ProtectionMode::NoProtection || !rng.gen_bool(rp.backup_probability) {
                continue;
            }
            let v = &req.chain[j];
            let (prev, next) = detour_endpoints(&hosts, req, j);
            let mut options: Vec<ServerId> = ids
                .iter()
                .copied()
                .filter(|&b| b != h && fits(&cpu, b, v.cpu_demand))
                .collect();
            options.shuffle(&mut rng);
            let Some((b, links)) = options.into_iter().find_map(|b| {
                let d = compose_detours(&catalog.paths(prev, b), &catalog.paths(b, next));
                d.into_iter().next().map(|p| (b, p.links))
            }) else {
                continue;
            };
            cpu[net.slot(b).unwrap()] += v.cpu_demand;
            let id = sol.backups.len() as u32;
            sol.backups.push(BackupVnf {
                id,
                vnf_type: v.vnf_type,
                host: b,
                cpu_reservation: v.cpu_demand,
            });
            sol.assignments.push(Assignment {
                service: req.id,
                position: j,
                backup: id,
            });
            sol.backup_paths.push(BackupPath {
                service: req.id,
                position: j,
                backup: id,
                links,
            });
        }
        sol.primary_paths.push(PrimaryPath {
            service: req.id,
            links: walk,
        });
    }
    sol.canonicalize();
    let evaluation = evaluate(&sol, net, reqs, &cfg.eval_options()).map_err(SearchError::Eval)?;
    Ok(SearchResult {
        solution: sol,
        evaluation,
        stats: SearchStats {
            wall_time: start.elapsed().as_secs_f64(),
            ..SearchStats::default()
        },
    })
}

type Segments = Rc<Vec<Path>>;

/// k-shortest paths computed on first use.
struct LazyPaths<'a> {
    net: &'a SubstrateNetwork,
    k: usize,
    memo: RefCell<HashMap<(ServerId, ServerId), Segments>>,
}

impl<'a> LazyPaths<'a> {
    fn new(net: &'a SubstrateNetwork, k: usize) -> Self {
        Self {
            net,
            k,
            memo: RefCell::new(HashMap::new()),
        }
    }

    fn paths(&self, from: ServerId, to: ServerId) -> Rc<Vec<Path>> {
        self.memo
            .borrow_mut()
            .entry((from, to))
            .or_insert_with(|| Rc::new(k_shortest_paths(self.net, from, to, self.k)))
            .clone()
    }
}

/// Joins candidate segments through `hosts`, picking for each the shortest
/// one that keeps the walk free of repeated links. With `force`, falls back
/// to plain shortest segments.
fn route(
    catalog: &LazyPaths,
    req: &ServiceRequest,
    hosts: &[ServerId],
    force: bool,
) -> Option<Vec<LinkId>> {
    let mut used: HashSet<LinkId> = HashSet::new();
    let mut walk = Vec::new();
    let mut at = req.source;
    for &h in hosts.iter().chain(std::iter::once(&req.destination)) {
        let cands = catalog.paths(at, h);
        let pick = cands
            .iter()
            .find(|p| {
                p.links
                    .iter()
                    .all(|l| !used.contains(l) && !used.contains(&(l ^ 1)))
            })
            .or_else(|| if force { cands.first() } else { None })?;
        used.extend(pick.links.iter().copied());
        walk.extend_from_slice(&pick.links);
        at = h;
    }
    Some(walk)
}
