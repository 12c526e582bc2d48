//! Brute-force reference optimizer for tiny instances.
//!
//! Enumerates every placement, every backup collection and every routing
//! built from simple path segments, and evaluates each candidate with the
//! full constraint evaluator. Nothing is pruned except layouts that already
//! violate a layout-only constraint.

use thiserror::Error;

use super::{ProtectionMode, SearchConfig, OBJECTIVE_TOLERANCE};
use crate::constraints::{
    check_server_capacity, detour_endpoints, evaluate, layout_violation, EvalError, Evaluation,
};
use crate::model::{
    Assignment, BackupPath, BackupVnf, LinkId, Placement, PrimaryPath, ProtectionLayout, ServerId,
    ServiceRequest, Solution, SubstrateNetwork, TypeId,
};
use crate::paths::{Path, PathCatalog};

/// Largest number of candidates the oracle agrees to evaluate.
pub const ORACLE_GUARD: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for enumeration (more than {0} candidates)")]
    TooLarge(u64),
    #[error("no feasible candidate")]
    Infeasible,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub solution: Solution,
    pub evaluation: Evaluation,
    pub evaluated: u64,
}

/// Exhaustive optimum under the protection mode, per-VNF and per-type backup
/// caps, alpha, reliability model and slack of `cfg`. Every simple path is a
/// segment candidate regardless of `cfg.k_paths`.
pub fn enumerate_all(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    cfg: &SearchConfig,
) -> Result<OracleResult, OracleError> {
    if reqs.iter().all(|r| r.is_empty()) {
        return Err(EvalError::NoVnfs.into());
    }
    let catalog = PathCatalog::new(net, None);
    let slots: Vec<(usize, usize)> = reqs
        .iter()
        .enumerate()
        .flat_map(|(s, r)| (0..r.len()).map(move |j| (s, j)))
        .collect();
    let servers = net.servers().len() as u64;
    let m = match cfg.mode {
        ProtectionMode::NoProtection => 0,
        _ => cfg.max_backups_per_vnf,
    };
    if layout_bound(servers, slots.len(), m) > ORACLE_GUARD {
        return Err(OracleError::TooLarge(ORACLE_GUARD));
    }
    let mut o = Oracle {
        net,
        reqs,
        cfg,
        catalog,
        slots,
        servers: net.servers().iter().map(|s| s.id).collect(),
        budget: 0,
        best: None,
    };
    let mut hosts: Vec<Vec<ServerId>> = reqs.iter().map(|r| Vec::with_capacity(r.len())).collect();
    o.placements(0, &mut hosts)?;
    let evaluated = o.budget;
    match o.best {
        Some((_, solution, evaluation)) => Ok(OracleResult {
            solution,
            evaluation,
            evaluated,
        }),
        None => Err(OracleError::Infeasible),
    }
}

/// Upper bound on placements times backup collections, saturating.
pub fn layout_bound(servers: u64, slots: usize, per_vnf: usize) -> u64 {
    let mut total = 1u64;
    for k in 0..slots {
        total = total.saturating_mul(servers);
        // subsets of size <= per_vnf among existing backups plus new hosts
        let items = servers.saturating_add((k * per_vnf) as u64);
        let mut choices = 1u64;
        let mut c = 1u64;
        for i in 0..per_vnf as u64 {
            c = c.saturating_mul(items.saturating_sub(i)) / (i + 1);
            choices = choices.saturating_add(c);
        }
        total = total.saturating_mul(choices);
    }
    total
}

struct Oracle<'a> {
    net: &'a SubstrateNetwork,
    reqs: &'a [ServiceRequest],
    cfg: &'a SearchConfig,
    catalog: PathCatalog,
    slots: Vec<(usize, usize)>,
    servers: Vec<ServerId>,
    budget: u64,
    best: Option<(f64, Solution, Evaluation)>,
}

/// A backup under construction: type, host and protected slots.
type Draft = (TypeId, ServerId, Vec<(usize, usize)>);

impl Oracle<'_> {
    fn placements(&mut self, k: usize, hosts: &mut Vec<Vec<ServerId>>) -> Result<(), OracleError> {
        if k == self.slots.len() {
            let layout = ProtectionLayout::unprotected(hosts.clone());
            let cap = check_server_capacity(&layout, self.net, self.reqs, self.cfg.capacity_slack);
            if cap.iter().all(|c| c.passed) {
                let mut drafts = Vec::new();
                self.collections(0, hosts, &mut drafts)?;
            }
            return Ok(());
        }
        let (s, _) = self.slots[k];
        for i in 0..self.servers.len() {
            hosts[s].push(self.servers[i]);
            self.placements(k + 1, hosts)?;
            hosts[s].pop();
        }
        Ok(())
    }

    fn per_vnf(&self) -> usize {
        match self.cfg.mode {
            ProtectionMode::NoProtection => 0,
            _ => self.cfg.max_backups_per_vnf,
        }
    }

    /// Backups are created by their first protected slot, so each
    /// collection is produced exactly once.
    fn collections(
        &mut self,
        k: usize,
        hosts: &[Vec<ServerId>],
        drafts: &mut Vec<Draft>,
    ) -> Result<(), OracleError> {
        if k == self.slots.len() {
            return self.layout(hosts, drafts);
        }
        let (s, j) = self.slots[k];
        let ty = self.reqs[s].chain[j].vnf_type;
        let mut items: Vec<(Option<usize>, ServerId)> = Vec::new();
        if self.cfg.mode == ProtectionMode::SharedProtection {
            items.extend(
                drafts
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.0 == ty)
                    .map(|(b, d)| (Some(b), d.1)),
            );
        }
        items.extend(self.servers.iter().map(|&h| (None, h)));
        let mut subsets = vec![Vec::new()];
        let m = self.per_vnf();
        let mut frontier = vec![(Vec::<usize>::new(), 0usize)];
        for _ in 0..m {
            let mut next = Vec::new();
            for (set, from) in &frontier {
                for i in *from..items.len() {
                    let mut grown = set.clone();
                    grown.push(i);
                    subsets.push(grown.clone());
                    next.push((grown, i + 1));
                }
            }
            frontier = next;
        }
        let have = drafts.iter().filter(|d| d.0 == ty).count();
        for subset in subsets {
            let fresh = subset.iter().filter(|&&i| items[i].0.is_none()).count();
            if self
                .cfg
                .max_backups_per_type
                .is_some_and(|cap| have + fresh > cap)
            {
                continue;
            }
            let mark = drafts.len();
            for &i in &subset {
                match items[i] {
                    (Some(b), _) => drafts[b].2.push((s, j)),
                    (None, h) => drafts.push((ty, h, vec![(s, j)])),
                }
            }
            self.collections(k + 1, hosts, drafts)?;
            drafts.truncate(mark);
            for &i in &subset {
                if let (Some(b), _) = items[i] {
                    drafts[b].2.pop();
                }
            }
        }
        Ok(())
    }

    fn layout(&mut self, hosts: &[Vec<ServerId>], drafts: &[Draft]) -> Result<(), OracleError> {
        let backups: Vec<BackupVnf> = drafts
            .iter()
            .enumerate()
            .map(|(b, d)| BackupVnf {
                id: b as u32,
                vnf_type: d.0,
                host: d.1,
                cpu_reservation: 0.0,
            })
            .collect();
        let assigned = drafts
            .iter()
            .enumerate()
            .flat_map(|(b, d)| d.2.iter().map(move |&(s, j)| (s, j, b)));
        let layout = ProtectionLayout::from_parts(hosts.to_vec(), backups, assigned);
        if layout_violation(&layout, self.net, self.reqs, &self.cfg.eval_options()).is_some() {
            return Ok(());
        }

        // one choice list per primary segment, then one per detour
        let mut choices: Vec<Vec<Path>> = Vec::new();
        for (s, req) in self.reqs.iter().enumerate() {
            let mut at = req.source;
            for &h in hosts[s].iter().chain(std::iter::once(&req.destination)) {
                choices.push(self.catalog.paths(at, h).to_vec());
                at = h;
            }
        }
        let mut detour_keys = Vec::new();
        for (s, req) in self.reqs.iter().enumerate() {
            for j in 0..req.len() {
                for &b in &layout.protection[s][j] {
                    let (prev, next) = detour_endpoints(&hosts[s], req, j);
                    let via = layout.backups[b].host;
                    let mut list = Vec::new();
                    for a in self.catalog.paths(prev, via) {
                        for c in self.catalog.paths(via, next) {
                            if a.links.is_empty() && c.links.is_empty() {
                                continue;
                            }
                            let mut links = a.links.clone();
                            links.extend_from_slice(&c.links);
                            list.push(Path {
                                links,
                                delay: a.delay + c.delay,
                            });
                        }
                    }
                    choices.push(list);
                    detour_keys.push((s, j, b));
                }
            }
        }
        let total = choices
            .iter()
            .try_fold(1u64, |acc, c| acc.checked_mul(c.len() as u64))
            .unwrap_or(u64::MAX);
        if total == 0 {
            return Ok(());
        }
        if self.budget.saturating_add(total) > ORACLE_GUARD {
            return Err(OracleError::TooLarge(ORACLE_GUARD));
        }
        self.budget += total;

        let primary_choices = choices.len() - detour_keys.len();
        let mut pick = vec![0usize; choices.len()];
        loop {
            let mut sol = Solution {
                backups: layout.backups.clone(),
                ..Solution::default()
            };
            let mut c = 0;
            for (s, req) in self.reqs.iter().enumerate() {
                let mut links: Vec<LinkId> = Vec::new();
                for _ in 0..=req.len() {
                    links.extend_from_slice(&choices[c][pick[c]].links);
                    c += 1;
                }
                sol.primary_paths.push(PrimaryPath {
                    service: req.id,
                    links,
                });
                for (j, &h) in hosts[s].iter().enumerate() {
                    sol.placements.push(Placement {
                        service: req.id,
                        position: j,
                        server: h,
                    });
                }
            }
            for (d, &(s, j, b)) in detour_keys.iter().enumerate() {
                let c = primary_choices + d;
                let service = self.reqs[s].id;
                sol.assignments.push(Assignment {
                    service,
                    position: j,
                    backup: b as u32,
                });
                sol.backup_paths.push(BackupPath {
                    service,
                    position: j,
                    backup: b as u32,
                    links: choices[c][pick[c]].links.clone(),
                });
            }
            sol.canonicalize();
            let ev = evaluate(&sol, self.net, self.reqs, &self.cfg.eval_options())?;
            if ev.report.feasible {
                let obj = ev.metrics.objective;
                if self
                    .best
                    .as_ref()
                    .is_none_or(|(best, _, _)| obj < best - OBJECTIVE_TOLERANCE)
                {
                    self.best = Some((obj, sol, ev));
                }
            }

            // odometer
            let mut i = 0;
            loop {
                if i == pick.len() {
                    return Ok(());
                }
                pick[i] += 1;
                if pick[i] < choices[i].len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
        }
    }
}
