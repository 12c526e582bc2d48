//! Exact optimization by depth-first branch and bound.
//!
//! Services are processed in request order. For each service the search
//! places every VNF together with the path segment leading to it, closes the
//! walk at the destination, and then decides, VNF by VNF, which backups
//! protect it and which detour each backup uses. Every partial decision is
//! checked against the constraints it can already violate; the leaf is
//! re-evaluated by [`crate::constraints::evaluate`], which is authoritative.

mod oracle;

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    detour_endpoints, evaluate, segment_delays, EvalError, EvalOptions, Evaluation, Family,
};
use crate::model::{
    segment_cuts, walk_nodes, Assignment, BackupPath, BackupVnf, LinkId, Placement, PrimaryPath,
    ServerId, ServiceRequest, Solution, SubstrateNetwork, TypeId,
};
use crate::paths::{Path, PathCatalog};
use crate::reliability::{phi, ReliabilityModel};

pub use oracle::{enumerate_all, layout_bound, OracleError, OracleResult, ORACLE_GUARD};

/// Slack below `min_reliability` tolerated by bound-based pruning, so that
/// rounding in the bound never removes a feasible leaf.
const RELIABILITY_PRUNE_TOLERANCE: f64 = 1e-12;
/// A node is pruned when its lower bound is not below the incumbent by more
/// than this.
pub const OBJECTIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectionMode {
    SharedProtection,
    DedicatedProtection,
    NoProtection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub alpha: f64,
    pub mode: ProtectionMode,
    /// Cap on the number of backups of any single VNF type.
    pub max_backups_per_type: Option<usize>,
    pub max_backups_per_vnf: usize,
    /// Candidate paths per server pair; `None` uses every simple path.
    pub k_paths: Option<usize>,
    pub node_limit: Option<u64>,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub reliability: ReliabilityModel,
    pub capacity_slack: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mode: ProtectionMode::SharedProtection,
            max_backups_per_type: None,
            max_backups_per_vnf: 1,
            k_paths: Some(8),
            node_limit: None,
            time_limit: None,
            reliability: ReliabilityModel::OneShot,
            capacity_slack: 0.0,
        }
    }
}

impl SearchConfig {
    pub fn with_mode(mode: ProtectionMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            alpha: self.alpha,
            reliability: self.reliability,
            enforce_reliability: self.mode != ProtectionMode::NoProtection,
            capacity_slack: self.capacity_slack,
        }
    }

    fn backups_per_vnf(&self) -> usize {
        match self.mode {
            ProtectionMode::NoProtection => 0,
            _ => self.max_backups_per_vnf,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.k_paths == Some(0) {
            return bad("k_paths must be positive");
        }
        if self.node_limit == Some(0) {
            return bad("node_limit must be positive");
        }
        if self.time_limit.is_some_and(|t| !(t > 0.0)) {
            return bad("time_limit must be positive");
        }
        if self.max_backups_per_type == Some(0) {
            return bad("max_backups_per_type must be positive");
        }
        if self.max_backups_per_vnf == 0 && self.mode != ProtectionMode::NoProtection {
            return bad("max_backups_per_vnf must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub incumbents: u64,
    pub leaf_evaluations: u64,
    pub proven_optimal: bool,
    pub wall_time: f64,
    /// Branches cut per constraint family, including rejected leaves.
    pub eliminated: BTreeMap<Family, u64>,
}

impl SearchStats {
    /// The family that cut the most branches.
    pub fn dominant_family(&self) -> Option<Family> {
        self.eliminated
            .iter()
            .max_by_key(|&(f, &n)| (n, std::cmp::Reverse(*f)))
            .map(|(&f, _)| f)
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub solution: Solution,
    pub evaluation: Evaluation,
    pub stats: SearchStats,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("no feasible solution; most candidates were eliminated by {}", fam(.family))]
    Infeasible {
        family: Option<Family>,
        stats: SearchStats,
    },
    #[error("search budget exhausted before a feasible solution was found")]
    BudgetExhausted { stats: SearchStats },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn fam(f: &Option<Family>) -> String {
    f.map_or_else(|| "none".to_string(), |f| format!("{f} constraints"))
}

impl SearchError {
    pub fn stats(&self) -> Option<&SearchStats> {
        match self {
            SearchError::Infeasible { stats, .. } | SearchError::BudgetExhausted { stats } => {
                Some(stats)
            }
            _ => None,
        }
    }
}

pub fn solve_exact(
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    cfg: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    if reqs.iter().any(|r| r.is_empty()) || reqs.is_empty() {
        return Err(SearchError::Eval(EvalError::NoVnfs));
    }
    let start = Instant::now();
    let catalog = PathCatalog::new(net, cfg.k_paths);
    let mut search = Search::new(net, reqs, cfg, &catalog, start);
    warm_start(&mut search);
    if !search.aborted {
        search.service(0);
    }
    let mut stats = std::mem::take(&mut search.stats);
    stats.proven_optimal = !search.aborted;
    stats.wall_time = start.elapsed().as_secs_f64();
    match search.best.take() {
        Some((_, solution, evaluation)) => Ok(SearchResult {
            solution,
            evaluation,
            stats,
        }),
        None if search.aborted => Err(SearchError::BudgetExhausted { stats }),
        None => Err(SearchError::Infeasible {
            family: stats.dominant_family(),
            stats,
        }),
    }
}

/// Greedy dives that never revisit a service once a later one has been
/// reached. When a dive gets stuck, the service it got stuck on moves to the
/// front of the processing order and the dive is repeated. A dive's solution
/// becomes the incumbent of the exhaustive search.
fn warm_start(main: &mut Search) {
    let n = main.reqs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut tried = std::collections::HashSet::new();
    while tried.insert(order.clone()) {
        let reqs: Vec<ServiceRequest> = order.iter().map(|&i| main.reqs[i].clone()).collect();
        let mut dive = Search::new(main.net, &reqs, main.cfg, main.catalog, main.start);
        dive.dive = true;
        dive.stats.nodes_expanded = main.stats.nodes_expanded;
        dive.service(0);
        main.stats.nodes_expanded = dive.stats.nodes_expanded;
        main.stats.leaf_evaluations += dive.stats.leaf_evaluations;
        if let Some((_, sol, _)) = dive.best.take() {
            let ev = evaluate(&sol, main.net, main.reqs, &main.opts)
                .expect("dive builds well-formed solutions");
            main.stats.incumbents += 1;
            main.best = Some((ev.metrics.objective, sol, ev));
            return;
        }
        if dive.aborted {
            main.aborted = true;
            return;
        }
        if dive.reached >= n {
            return;
        }
        let stuck = order.remove(dive.reached);
        order.insert(0, stuck);
    }
}

struct BackupState {
    vnf_type: TypeId,
    host: ServerId,
    users: Vec<(usize, usize)>,
    /// Largest member demand.
    reserve: f64,
    /// Per-link reservation toward this backup.
    links: HashMap<LinkId, f64>,
}

/// One protection choice for a VNF: existing backups to join and hosts of
/// new backups.
#[derive(Debug, Clone)]
struct Option_ {
    joins: Vec<usize>,
    new_hosts: Vec<ServerId>,
}

struct Search<'a> {
    net: &'a SubstrateNetwork,
    reqs: &'a [ServiceRequest],
    cfg: &'a SearchConfig,
    catalog: &'a PathCatalog,
    opts: EvalOptions,
    start: Instant,
    theta_max: f64,
    enforce_reliability: bool,
    total_primaries: usize,
    total_capacity: f64,
    /// Suffix sums of `b * hops(source, destination)` over services.
    future_primary_bw: Vec<f64>,
    detour_cache: HashMap<(ServerId, ServerId, ServerId), Rc<Vec<Path>>>,

    cpu: Vec<f64>,
    load: Vec<f64>,
    total_load: f64,
    hosts: Vec<Vec<ServerId>>,
    segs: Vec<Vec<Vec<LinkId>>>,
    seg_delay: Vec<Vec<f64>>,
    /// Segment delays as the evaluator splits the closed walk.
    eval_seg: Vec<Vec<f64>>,
    used: Vec<Vec<LinkId>>,
    delay: Vec<f64>,
    backups: Vec<BackupState>,
    prot: Vec<Vec<Vec<usize>>>,
    dets: Vec<Vec<Vec<Vec<LinkId>>>>,
    type_count: HashMap<TypeId, usize>,

    best: Option<(f64, Solution, Evaluation)>,
    stats: SearchStats,
    aborted: bool,
    dive: bool,
    /// Deepest service index entered so far.
    reached: usize,
}

impl<'a> Search<'a> {
    fn new(
        net: &'a SubstrateNetwork,
        reqs: &'a [ServiceRequest],
        cfg: &'a SearchConfig,
        catalog: &'a PathCatalog,
        start: Instant,
    ) -> Self {
        let n = reqs.len();
        let mut future_primary_bw = vec![0.0; n + 1];
        for s in (0..n).rev() {
            let hops = catalog
                .hops(reqs[s].source, reqs[s].destination)
                .unwrap_or(0);
            future_primary_bw[s] = future_primary_bw[s + 1] + reqs[s].bandwidth * hops as f64;
        }
        Self {
            net,
            reqs,
            cfg,
            catalog,
            opts: cfg.eval_options(),
            start,
            theta_max: net
                .servers()
                .iter()
                .map(|s| s.reliability)
                .fold(0.0, f64::max),
            enforce_reliability: cfg.mode != ProtectionMode::NoProtection,
            total_primaries: reqs.iter().map(|r| r.len()).sum(),
            total_capacity: net.total_link_capacity(),
            future_primary_bw,
            detour_cache: HashMap::new(),
            cpu: vec![0.0; net.servers().len()],
            load: vec![0.0; net.links().len()],
            total_load: 0.0,
            hosts: vec![Vec::new(); n],
            segs: vec![Vec::new(); n],
            seg_delay: vec![Vec::new(); n],
            eval_seg: vec![Vec::new(); n],
            used: vec![Vec::new(); n],
            delay: vec![0.0; n],
            backups: Vec::new(),
            prot: vec![Vec::new(); n],
            dets: vec![Vec::new(); n],
            type_count: HashMap::new(),
            best: None,
            stats: SearchStats::default(),
            aborted: false,
            dive: false,
            reached: 0,
        }
    }

    /// True when alternatives at service `s` should no longer be explored.
    fn halted(&self, s: usize) -> bool {
        self.aborted || (self.dive && (self.reached > s || self.best.is_some()))
    }

    fn cut(&mut self, family: Family) {
        *self.stats.eliminated.entry(family).or_insert(0) += 1;
    }

    /// Counts a node; returns false once the budget is spent.
    fn expand(&mut self) -> bool {
        if self.aborted {
            return false;
        }
        self.stats.nodes_expanded += 1;
        if let Some(limit) = self.cfg.node_limit {
            if self.stats.nodes_expanded > limit {
                self.aborted = true;
                return false;
            }
        }
        if self.stats.nodes_expanded.is_multiple_of(1024) {
            if let Some(t) = self.cfg.time_limit {
                if self.start.elapsed().as_secs_f64() > t {
                    self.aborted = true;
                    return false;
                }
            }
        }
        true
    }

    fn server(&self, id: ServerId) -> &crate::model::Server {
        self.net.server(id).expect("known server")
    }

    fn slot(&self, id: ServerId) -> usize {
        self.net.slot(id).expect("known server")
    }

    fn fits_cpu(&self, host: ServerId, extra: f64) -> bool {
        let s = self.slot(host);
        self.cpu[s] + extra < self.server(host).capacity + self.cfg.capacity_slack
    }

    // ----- reliability bounds -------------------------------------------

    fn protected_ub(&self, theta: f64) -> f64 {
        let m = self.cfg.backups_per_vnf() as i32;
        1.0 - (1.0 - theta) * (1.0 - self.theta_max).powi(m)
    }

    /// Current reliability of a VNF whose protection is decided. Under the
    /// fixed-point model the dedicated value is used, which bounds it.
    fn decided_r(&self, s: usize, j: usize) -> f64 {
        let host = self.server(self.hosts[s][j]);
        let mut r = host.reliability;
        for &b in &self.prot[s][j] {
            let backup = &self.backups[b];
            let f = match self.cfg.reliability {
                ReliabilityModel::OneShot => phi(
                    host.mttr,
                    backup
                        .users
                        .iter()
                        .filter(|&&u| u != (s, j))
                        .map(|&(t, k)| {
                            let o = self.server(self.hosts[t][k]);
                            (o.mttr, o.reliability)
                        }),
                ),
                _ => 1.0,
            };
            r += (1.0 - r) * self.server(backup.host).reliability * f;
        }
        r
    }

    /// Factors of a service: decided VNFs at their current value, then
    /// `(unprotected, best protected)` pairs for the undecided ones.
    fn factors(&self, s: usize) -> (f64, Vec<(f64, f64)>) {
        let decided = self.prot[s].len();
        let base: f64 = (0..decided).map(|j| self.decided_r(s, j)).product();
        let rest = (decided..self.reqs[s].len())
            .map(|j| {
                let theta = self.hosts[s]
                    .get(j)
                    .map_or(self.theta_max, |&h| self.server(h).reliability);
                (theta, self.protected_ub(theta))
            })
            .collect();
        (base, rest)
    }

    fn reliability_hopeless(&self, s: usize) -> bool {
        if !self.enforce_reliability {
            return false;
        }
        let (base, rest) = self.factors(s);
        let ub = base * rest.iter().map(|p| p.1).product::<f64>();
        ub < self.reqs[s].min_reliability - RELIABILITY_PRUNE_TOLERANCE
    }

    /// Fewest undecided VNFs of `s` that must still be protected, or `None`
    /// when even full protection is insufficient.
    fn needed_protection(&self, s: usize) -> Option<usize> {
        if !self.enforce_reliability {
            return Some(0);
        }
        let (base, mut rest) = self.factors(s);
        let target = self.reqs[s].min_reliability - RELIABILITY_PRUNE_TOLERANCE;
        // protecting the least reliable first gives the largest gain
        rest.sort_by(|a, b| a.0.total_cmp(&b.0));
        for c in 0..=rest.len() {
            let v = base
                * rest[..c].iter().map(|p| p.1).product::<f64>()
                * rest[c..].iter().map(|p| p.0).product::<f64>();
            if v >= target {
                return Some(c);
            }
        }
        None
    }

    // ----- lower bound ---------------------------------------------------

    fn min_detour_hops(&self, prev: ServerId, host: ServerId, next: ServerId) -> usize {
        self.net
            .servers()
            .iter()
            .filter(|b| b.id != host)
            .filter_map(|b| Some(self.catalog.hops(prev, b.id)? + self.catalog.hops(b.id, next)?))
            .min()
            .unwrap_or(0)
            .max(1)
    }

    /// Lower bound on the objective of any completion, or `None` when some
    /// service can no longer reach its reliability target.
    fn lower_bound(&self, current: usize) -> Option<f64> {
        let mut bw = self.total_load + self.future_primary_bw[current + 1];
        let s = current;
        let tail = match self.hosts[s].len() == self.reqs[s].len()
            && self.segs[s].len() > self.reqs[s].len()
        {
            true => 0,
            false => {
                let at = self.walk_end(s);
                self.catalog.hops(at, self.reqs[s].destination).unwrap_or(0)
            }
        };
        bw += self.reqs[s].bandwidth * tail as f64;

        let mut new_backups = 0usize;
        let mut detour_bw = 0.0;
        if self.cfg.mode != ProtectionMode::NoProtection {
            let mut forced: BTreeMap<TypeId, f64> = BTreeMap::new();
            for t in current..self.reqs.len() {
                let need = self.needed_protection(t)?;
                if need == 0 {
                    continue;
                }
                let req = &self.reqs[t];
                let decided = self.prot[t].len();
                let routed = t == current && self.segs[t].len() > req.len();
                let costs: Vec<f64> = (decided..req.len())
                    .map(|j| {
                        let hops = if routed {
                            let (p, n) = detour_endpoints(&self.hosts[t], req, j);
                            self.min_detour_hops(p, self.hosts[t][j], n)
                        } else {
                            1
                        };
                        req.bandwidth * hops as f64
                    })
                    .collect();
                match self.cfg.mode {
                    ProtectionMode::DedicatedProtection => {
                        new_backups += need;
                        let mut c = costs.clone();
                        c.sort_by(f64::total_cmp);
                        detour_bw += c[..need].iter().sum::<f64>();
                    }
                    _ => {
                        if need == req.len() - decided {
                            for (k, j) in (decided..req.len()).enumerate() {
                                let ty = req.chain[j].vnf_type;
                                if self.type_count.get(&ty).copied().unwrap_or(0) == 0 {
                                    let e = forced.entry(ty).or_insert(0.0);
                                    *e = e.max(costs[k]);
                                }
                            }
                        }
                    }
                }
            }
            new_backups += forced.len();
            detour_bw += forced.values().sum::<f64>();
        }
        let nb = self.backups.len() + new_backups;
        let a = self.cfg.alpha;
        Some(
            a * nb as f64 / self.total_primaries as f64
                + (1.0 - a) * (bw + detour_bw) / self.total_capacity,
        )
    }

    /// Returns true when the node survives the bound test.
    fn bound_ok(&mut self, current: usize) -> bool {
        match self.lower_bound(current) {
            None => {
                self.cut(Family::Reliability);
                false
            }
            Some(lb) => {
                !matches!(&self.best, Some((best, _, _)) if lb >= best - OBJECTIVE_TOLERANCE)
            }
        }
    }

    // ----- primary placement and routing ---------------------------------

    fn walk_end(&self, s: usize) -> ServerId {
        match self.segs[s].len() {
            0 => self.reqs[s].source,
            k => self.hosts[s][k - 1],
        }
    }

    fn service(&mut self, s: usize) {
        self.reached = self.reached.max(s);
        if s == self.reqs.len() {
            self.leaf();
            return;
        }
        self.place(s, 0);
    }

    fn place(&mut self, s: usize, j: usize) {
        let req = &self.reqs[s];
        if j == req.len() {
            self.close_walk(s);
            return;
        }
        if !self.expand() {
            return;
        }
        let prev = self.walk_end(s);
        let demand = req.chain[j].cpu_demand;
        let mut order: Vec<(usize, std::cmp::Reverse<u64>, ServerId)> = self
            .net
            .servers()
            .iter()
            .filter_map(|h| {
                let a = self.catalog.hops(prev, h.id)?;
                let b = self.catalog.hops(h.id, req.destination)?;
                Some((
                    a + b,
                    std::cmp::Reverse((h.reliability * 1e12) as u64),
                    h.id,
                ))
            })
            .collect();
        order.sort();
        for (_, _, h) in order {
            if self.halted(s) {
                return;
            }
            if !self.fits_cpu(h, demand) {
                self.cut(Family::Capacity);
                continue;
            }
            let slot = self.slot(h);
            self.cpu[slot] += demand;
            self.hosts[s].push(h);
            if self.reliability_hopeless(s) {
                self.cut(Family::Reliability);
            } else {
                let paths = self.catalog.paths(prev, h);
                for path in paths {
                    if self.halted(s) {
                        break;
                    }
                    if self.push_segment(s, path) {
                        if self.bound_ok(s) {
                            self.place(s, j + 1);
                        }
                        self.pop_segment(s);
                    }
                }
            }
            self.hosts[s].pop();
            self.cpu[slot] -= demand;
        }
    }

    fn close_walk(&mut self, s: usize) {
        if !self.expand() {
            return;
        }
        let prev = self.walk_end(s);
        let paths = self.catalog.paths(prev, self.reqs[s].destination);
        for path in paths {
            if self.halted(s) {
                return;
            }
            if self.push_segment(s, path) {
                if self.bound_ok(s) {
                    self.eval_seg[s] = self.evaluator_segments(s);
                    self.protect(s, 0);
                }
                self.pop_segment(s);
            }
        }
    }

    /// Appends a segment if it keeps the walk loop-free and within link
    /// capacity and the delay bound.
    fn push_segment(&mut self, s: usize, path: &Path) -> bool {
        let req = &self.reqs[s];
        for &l in &path.links {
            if self.used[s].contains(&l) || self.used[s].contains(&(l ^ 1)) {
                self.cut(Family::Routing);
                return false;
            }
        }
        let end = match path.links.last() {
            Some(&l) => self.net.links()[l].head,
            None => self.walk_end(s),
        };
        let rest = self.catalog.min_delay(end, req.destination).unwrap_or(0.0);
        if self.delay[s] + path.delay + rest > req.max_delay {
            self.cut(Family::Delay);
            return false;
        }
        for &l in &path.links {
            if !(self.load[l] + req.bandwidth
                < self.net.links()[l].bandwidth + self.cfg.capacity_slack)
            {
                self.cut(Family::Capacity);
                return false;
            }
        }
        for &l in &path.links {
            self.load[l] += req.bandwidth;
            self.total_load += req.bandwidth;
            self.used[s].push(l);
        }
        self.delay[s] += path.delay;
        self.segs[s].push(path.links.clone());
        self.seg_delay[s].push(path.delay);
        true
    }

    fn pop_segment(&mut self, s: usize) {
        let links = self.segs[s].pop().expect("segment to pop");
        let d = self.seg_delay[s].pop().expect("segment delay to pop");
        self.delay[s] -= d;
        let b = self.reqs[s].bandwidth;
        for &l in &links {
            self.load[l] -= b;
            self.total_load -= b;
            self.used[s].pop();
        }
    }

    fn evaluator_segments(&self, s: usize) -> Vec<f64> {
        let walk = self.segs[s].concat();
        walk_nodes(self.net, self.reqs[s].source, &walk)
            .and_then(|nodes| segment_cuts(&nodes, &self.hosts[s]))
            .map_or_else(
                || self.seg_delay[s].clone(),
                |cuts| segment_delays(self.net, &walk, &cuts),
            )
    }

    // ----- protection ------------------------------------------------------

    fn options(&self, s: usize, j: usize) -> Vec<Option_> {
        let m = self.cfg.backups_per_vnf();
        let mut out = vec![Option_ {
            joins: Vec::new(),
            new_hosts: Vec::new(),
        }];
        if m == 0 {
            return out;
        }
        let req = &self.reqs[s];
        let ty = req.chain[j].vnf_type;
        let host = self.hosts[s][j];
        let joinable: Vec<usize> = if self.cfg.mode == ProtectionMode::SharedProtection {
            (0..self.backups.len())
                .filter(|&b| {
                    let bk = &self.backups[b];
                    bk.vnf_type == ty
                        && bk.host != host
                        && bk.users.iter().all(|&(t, k)| self.hosts[t][k] != host)
                })
                .collect()
        } else {
            Vec::new()
        };
        let (prev, next) = detour_endpoints(&self.hosts[s], req, j);
        let mut fresh: Vec<(usize, std::cmp::Reverse<u64>, ServerId)> = self
            .net
            .servers()
            .iter()
            .filter(|h| h.id != host)
            .filter_map(|h| {
                let a = self.catalog.hops(prev, h.id)?;
                let b = self.catalog.hops(h.id, next)?;
                Some((
                    a + b,
                    std::cmp::Reverse((h.reliability * 1e12) as u64),
                    h.id,
                ))
            })
            .collect();
        fresh.sort();
        let items: Vec<(Option<usize>, ServerId)> = joinable
            .iter()
            .map(|&b| (Some(b), self.backups[b].host))
            .chain(fresh.iter().map(|&(_, _, h)| (None, h)))
            .collect();

        // subsets of `items` of size 1..=m with pairwise distinct hosts
        let mut stack: Vec<usize> = Vec::new();
        fn rec(
            items: &[(Option<usize>, ServerId)],
            from: usize,
            left: usize,
            stack: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if !stack.is_empty() {
                out.push(stack.clone());
            }
            if left == 0 {
                return;
            }
            for i in from..items.len() {
                if stack.iter().any(|&k| items[k].1 == items[i].1) {
                    continue;
                }
                stack.push(i);
                rec(items, i + 1, left - 1, stack, out);
                stack.pop();
            }
        }
        let mut subsets = Vec::new();
        rec(&items, 0, m, &mut stack, &mut subsets);
        subsets.sort_by_key(|v| v.len());
        for subset in subsets {
            let mut opt = Option_ {
                joins: Vec::new(),
                new_hosts: Vec::new(),
            };
            for k in subset {
                match items[k].0 {
                    Some(b) => opt.joins.push(b),
                    None => opt.new_hosts.push(items[k].1),
                }
            }
            out.push(opt);
        }
        out
    }

    fn protect(&mut self, s: usize, j: usize) {
        let req = &self.reqs[s];
        if j == req.len() {
            self.service(s + 1);
            return;
        }
        if !self.expand() {
            return;
        }
        let ty = req.chain[j].vnf_type;
        let demand = req.chain[j].cpu_demand;
        for opt in self.options(s, j) {
            if self.halted(s) {
                return;
            }
            if let Some(cap) = self.cfg.max_backups_per_type {
                let have = self.type_count.get(&ty).copied().unwrap_or(0);
                if have + opt.new_hosts.len() > cap {
                    continue;
                }
            }
            // capacity for new backups and for raised reservations
            let mut extra: HashMap<ServerId, f64> = HashMap::new();
            for &b in &opt.joins {
                let bk = &self.backups[b];
                if demand > bk.reserve {
                    *extra.entry(bk.host).or_insert(0.0) += demand - bk.reserve;
                }
            }
            for &h in &opt.new_hosts {
                *extra.entry(h).or_insert(0.0) += demand;
            }
            if extra.iter().any(|(&h, &x)| !self.fits_cpu(h, x)) {
                self.cut(Family::Capacity);
                continue;
            }
            let applied = self.apply_option(s, j, &opt, &extra);
            let touched: Vec<usize> = {
                let mut t: Vec<usize> = opt
                    .joins
                    .iter()
                    .flat_map(|&b| self.backups[b].users.iter().map(|u| u.0))
                    .chain(std::iter::once(s))
                    .collect();
                t.sort_unstable();
                t.dedup();
                t
            };
            if touched.iter().any(|&t| self.reliability_hopeless(t)) {
                self.cut(Family::Reliability);
            } else if self.bound_ok(s) {
                self.detour(s, j, 0);
            }
            self.undo_option(s, j, &opt, &extra, applied);
        }
    }

    /// Returns the previous reservations of joined backups.
    fn apply_option(
        &mut self,
        s: usize,
        j: usize,
        opt: &Option_,
        extra: &HashMap<ServerId, f64>,
    ) -> Vec<f64> {
        let req = &self.reqs[s];
        let demand = req.chain[j].cpu_demand;
        for (&h, &x) in extra {
            let slot = self.slot(h);
            self.cpu[slot] += x;
        }
        let mut previous = Vec::with_capacity(opt.joins.len());
        let mut list = Vec::new();
        for &b in &opt.joins {
            let bk = &mut self.backups[b];
            previous.push(bk.reserve);
            bk.reserve = bk.reserve.max(demand);
            bk.users.push((s, j));
            list.push(b);
        }
        for &h in &opt.new_hosts {
            list.push(self.backups.len());
            self.backups.push(BackupState {
                vnf_type: req.chain[j].vnf_type,
                host: h,
                users: vec![(s, j)],
                reserve: demand,
                links: HashMap::new(),
            });
        }
        if !opt.new_hosts.is_empty() {
            *self.type_count.entry(req.chain[j].vnf_type).or_insert(0) += opt.new_hosts.len();
        }
        list.sort_unstable();
        self.prot[s].push(list);
        self.dets[s].push(Vec::new());
        previous
    }

    fn undo_option(
        &mut self,
        s: usize,
        j: usize,
        opt: &Option_,
        extra: &HashMap<ServerId, f64>,
        previous: Vec<f64>,
    ) {
        self.prot[s].pop();
        self.dets[s].pop();
        for _ in &opt.new_hosts {
            self.backups.pop();
        }
        if !opt.new_hosts.is_empty() {
            let ty = self.reqs[s].chain[j].vnf_type;
            *self.type_count.get_mut(&ty).expect("type counted") -= opt.new_hosts.len();
        }
        for (&b, r) in opt.joins.iter().zip(previous) {
            let bk = &mut self.backups[b];
            bk.reserve = r;
            bk.users.pop();
        }
        for (&h, &x) in extra {
            let slot = self.slot(h);
            self.cpu[slot] -= x;
        }
    }

    fn detours_for(&mut self, prev: ServerId, via: ServerId, next: ServerId) -> Rc<Vec<Path>> {
        let catalog = self.catalog;
        self.detour_cache
            .entry((prev, via, next))
            .or_insert_with(|| Rc::new(catalog.detours(prev, via, next)))
            .clone()
    }

    fn detour(&mut self, s: usize, j: usize, k: usize) {
        let list = self.prot[s][j].clone();
        if k == list.len() {
            self.protect(s, j + 1);
            return;
        }
        if !self.expand() {
            return;
        }
        let req = &self.reqs[s];
        let b = list[k];
        let (prev, next) = detour_endpoints(&self.hosts[s], req, j);
        let cands = self.detours_for(prev, self.backups[b].host, next);
        let base = self.delay[s] - self.eval_seg[s][j] - self.eval_seg[s][j + 1];
        if cands.is_empty() {
            self.cut(Family::Routing);
        }
        for cand in cands.iter() {
            if self.halted(s) {
                return;
            }
            if base + cand.delay > req.max_delay {
                // candidates are sorted by delay
                self.cut(Family::Delay);
                break;
            }
            let mut deltas = Vec::with_capacity(cand.links.len());
            let mut fits = true;
            for &l in &cand.links {
                let cur = self.backups[b].links.get(&l).copied().unwrap_or(0.0);
                let delta = (req.bandwidth - cur).max(0.0);
                if delta > 0.0
                    && !(self.load[l] + delta
                        < self.net.links()[l].bandwidth + self.cfg.capacity_slack)
                {
                    fits = false;
                    break;
                }
                deltas.push((l, cur, delta));
            }
            if !fits {
                self.cut(Family::Capacity);
                continue;
            }
            for &(l, _, delta) in &deltas {
                if delta > 0.0 {
                    self.backups[b].links.insert(l, req.bandwidth);
                    self.load[l] += delta;
                    self.total_load += delta;
                }
            }
            self.dets[s][j].push(cand.links.clone());
            if self.bound_ok(s) {
                self.detour(s, j, k + 1);
            }
            self.dets[s][j].pop();
            for &(l, cur, delta) in deltas.iter().rev() {
                if delta > 0.0 {
                    if cur == 0.0 {
                        self.backups[b].links.remove(&l);
                    } else {
                        self.backups[b].links.insert(l, cur);
                    }
                    self.load[l] -= delta;
                    self.total_load -= delta;
                }
            }
        }
    }

    // ----- leaves ----------------------------------------------------------

    fn build_solution(&self) -> Solution {
        let mut sol = Solution::default();
        for (s, req) in self.reqs.iter().enumerate() {
            for (j, &h) in self.hosts[s].iter().enumerate() {
                sol.placements.push(Placement {
                    service: req.id,
                    position: j,
                    server: h,
                });
            }
            sol.primary_paths.push(PrimaryPath {
                service: req.id,
                links: self.segs[s].concat(),
            });
            for (j, list) in self.prot[s].iter().enumerate() {
                for (k, &b) in list.iter().enumerate() {
                    sol.assignments.push(Assignment {
                        service: req.id,
                        position: j,
                        backup: b as u32,
                    });
                    sol.backup_paths.push(BackupPath {
                        service: req.id,
                        position: j,
                        backup: b as u32,
                        links: self.dets[s][j][k].clone(),
                    });
                }
            }
        }
        for (b, bk) in self.backups.iter().enumerate() {
            sol.backups.push(BackupVnf {
                id: b as u32,
                vnf_type: bk.vnf_type,
                host: bk.host,
                cpu_reservation: bk.reserve,
            });
        }
        sol.canonicalize();
        sol
    }

    fn leaf(&mut self) {
        let sol = self.build_solution();
        self.stats.leaf_evaluations += 1;
        let ev = evaluate(&sol, self.net, self.reqs, &self.opts)
            .expect("search builds well-formed solutions");
        if !ev.report.feasible {
            for f in ev.report.failed_families() {
                self.cut(f);
            }
            return;
        }
        let obj = ev.metrics.objective;
        let better = match &self.best {
            None => true,
            Some((best, _, _)) => obj < best - OBJECTIVE_TOLERANCE,
        };
        if better {
            self.stats.incumbents += 1;
            self.best = Some((obj, sol, ev));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::worked_example;
    use crate::model::{Server, UndirectedLink, VnfSpec};

    fn line3() -> SubstrateNetwork {
        let servers = [0.95, 0.93, 0.94]
            .iter()
            .enumerate()
            .map(|(i, &r)| Server {
                id: i as u32,
                capacity: 5.0,
                reliability: r,
                mttr: 2.0,
                mtbf: 30.0,
            })
            .collect();
        let edges = [(0, 0, 1), (1, 1, 2)].map(|(id, a, b)| UndirectedLink {
            id,
            a,
            b,
            bandwidth: 20.0,
            delay: 10.0,
        });
        SubstrateNetwork::from_undirected(servers, &edges).unwrap()
    }

    fn two_vnf(min_reliability: f64) -> Vec<ServiceRequest> {
        vec![ServiceRequest {
            id: 1,
            source: 0,
            destination: 2,
            chain: vec![
                VnfSpec {
                    vnf_type: 1,
                    cpu_demand: 1.0,
                },
                VnfSpec {
                    vnf_type: 2,
                    cpu_demand: 1.0,
                },
            ],
            bandwidth: 2.0,
            max_delay: 100.0,
            min_reliability,
        }]
    }

    #[test]
    fn inactive_reliability_gives_bare_shortest_path() {
        let net = line3();
        let reqs = two_vnf(0.5);
        let r = solve_exact(&net, &reqs, &SearchConfig::default()).unwrap();
        assert!(r.stats.proven_optimal);
        assert_eq!(r.evaluation.metrics.backup_count, 0);
        assert_eq!(r.evaluation.metrics.total_bandwidth, 4.0);
        assert_eq!(r.solution.primary_paths[0].links.len(), 2);
    }

    #[test]
    fn binding_reliability_adds_backups() {
        let net = line3();
        let reqs = two_vnf(0.95);
        for mode in [
            ProtectionMode::SharedProtection,
            ProtectionMode::DedicatedProtection,
        ] {
            let r = solve_exact(&net, &reqs, &SearchConfig::with_mode(mode)).unwrap();
            assert!(r.evaluation.report.feasible);
            assert!(r.evaluation.metrics.backup_count >= 1);
            assert!(r.evaluation.reliability.per_service[0] >= 0.95);
        }
    }

    #[test]
    fn infeasible_capacity_is_diagnosed() {
        let net = line3();
        let mut reqs = two_vnf(0.5);
        for v in &mut reqs[0].chain {
            v.cpu_demand = 6.0;
        }
        match solve_exact(&net, &reqs, &SearchConfig::default()) {
            Err(SearchError::Infeasible { family, .. }) => {
                assert_eq!(family, Some(Family::Capacity))
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unreachable_reliability_is_diagnosed() {
        let net = line3();
        let reqs = two_vnf(0.9999);
        match solve_exact(&net, &reqs, &SearchConfig::default()) {
            Err(SearchError::Infeasible { family, .. }) => {
                assert_eq!(family, Some(Family::Reliability))
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn node_budget_is_respected() {
        let ex = worked_example();
        let cfg = SearchConfig {
            node_limit: Some(3),
            ..SearchConfig::default()
        };
        let err = solve_exact(&ex.scenario.network, &ex.scenario.services, &cfg).unwrap_err();
        assert!(matches!(err, SearchError::BudgetExhausted { .. }));
    }

    #[test]
    fn deterministic_output() {
        let ex = worked_example();
        let cfg = SearchConfig::default();
        let a = solve_exact(&ex.scenario.network, &ex.scenario.services, &cfg).unwrap();
        let b = solve_exact(&ex.scenario.network, &ex.scenario.services, &cfg).unwrap();
        assert_eq!(a.solution.to_json(), b.solution.to_json());
        assert!(a.evaluation.report.feasible);
    }

    #[test]
    fn config_validation() {
        let bad = SearchConfig {
            alpha: 2.0,
            ..SearchConfig::default()
        };
        assert!(matches!(bad.validate(), Err(SearchError::InvalidConfig(_))));
        let bad = SearchConfig {
            k_paths: Some(0),
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
