//! Feasibility checks, resource accounting and the scalarized objective.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    segment_cuts, BackupId, LinkId, ProtectionLayout, ServerId, ServiceId, ServiceRequest,
    ShapeViolation, Solution, SolutionIndex, SubstrateNetwork,
};
use crate::paths::is_loop_free;
use crate::reliability::{layout_reliability, ReliabilityModel, ReliabilityResult};

/// Normalized magnitude assigned to a failed check whose raw excess is zero
/// (for example a link loaded exactly to capacity).
pub const MIN_VIOLATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    TypeMatch,
    PathEndpoints,
    FlowConservation,
    BackupPathTouchesBackup,
    BackupDetourEndpoints,
    LoopFree,
    PathConnected,
    UniquePlacement,
    AntiAffinityBackup,
    AntiAffinityCoSharers,
    LinkBandwidth,
    ServerCapacity,
    Delay,
    Reliability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Type,
    Routing,
    AntiAffinity,
    Capacity,
    Delay,
    Reliability,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Type,
        Family::Routing,
        Family::AntiAffinity,
        Family::Capacity,
        Family::Delay,
        Family::Reliability,
    ];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Family::Type => "type",
            Family::Routing => "routing",
            Family::AntiAffinity => "anti-affinity",
            Family::Capacity => "capacity",
            Family::Delay => "delay",
            Family::Reliability => "reliability",
        };
        f.write_str(name)
    }
}

impl ConstraintId {
    pub fn family(self) -> Family {
        use ConstraintId::*;
        match self {
            TypeMatch => Family::Type,
            PathEndpoints
            | FlowConservation
            | BackupPathTouchesBackup
            | BackupDetourEndpoints
            | LoopFree
            | PathConnected
            | UniquePlacement => Family::Routing,
            AntiAffinityBackup | AntiAffinityCoSharers => Family::AntiAffinity,
            LinkBandwidth | ServerCapacity => Family::Capacity,
            Delay => Family::Delay,
            Reliability => Family::Reliability,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backup: Option<BackupId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server: Option<ServerId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkId>,
}

impl Subject {
    fn service(id: ServiceId) -> Self {
        Self {
            service: Some(id),
            ..Self::default()
        }
    }

    fn vnf(id: ServiceId, position: usize, backup: Option<BackupId>) -> Self {
        Self {
            service: Some(id),
            position: Some(position),
            backup,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub constraint: ConstraintId,
    pub subject: Subject,
    pub passed: bool,
    /// Violation amount in the constraint's own units; 0 when passed.
    pub magnitude: f64,
    /// Scale used to normalize `magnitude`.
    pub limit: f64,
}

impl Check {
    fn structural(constraint: ConstraintId, subject: Subject, violations: usize) -> Self {
        Self {
            constraint,
            subject,
            passed: violations == 0,
            magnitude: violations as f64,
            limit: 1.0,
        }
    }

    /// `magnitude / limit`, floored at [`MIN_VIOLATION`] for failed checks.
    pub fn normalized(&self) -> f64 {
        if self.passed {
            0.0
        } else {
            let scaled = if self.limit > 0.0 {
                self.magnitude / self.limit
            } else {
                self.magnitude
            };
            scaled.max(MIN_VIOLATION)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub reliability: f64,
    pub capacity: f64,
    pub delay: f64,
    pub routing: f64,
    pub anti_affinity: f64,
    pub type_match: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            reliability: 10.0,
            capacity: 5.0,
            delay: 5.0,
            routing: 20.0,
            anti_affinity: 20.0,
            type_match: 20.0,
        }
    }
}

impl PenaltyWeights {
    pub fn weight(&self, family: Family) -> f64 {
        match family {
            Family::Reliability => self.reliability,
            Family::Capacity => self.capacity,
            Family::Delay => self.delay,
            Family::Routing => self.routing,
            Family::AntiAffinity => self.anti_affinity,
            Family::Type => self.type_match,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub checks: Vec<Check>,
    pub feasible: bool,
}

impl ConstraintReport {
    fn new(checks: Vec<Check>) -> Self {
        let feasible = checks.iter().all(|c| c.passed);
        Self { checks, feasible }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed_families(&self) -> Vec<Family> {
        let mut f: Vec<Family> = self.failures().map(|c| c.constraint.family()).collect();
        f.sort();
        f.dedup();
        f
    }

    pub fn feasible_ignoring(&self, ignored: &[Family]) -> bool {
        self.failures()
            .all(|c| ignored.contains(&c.constraint.family()))
    }

    pub fn penalty(&self, weights: &PenaltyWeights) -> f64 {
        self.failures()
            .map(|c| weights.weight(c.constraint.family()) * c.normalized())
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub total_bandwidth: f64,
    /// Non-zero loads only.
    pub per_link_load: BTreeMap<LinkId, f64>,
    pub per_server_cpu: BTreeMap<ServerId, f64>,
    pub cpu_utilization: f64,
    pub bandwidth_utilization: f64,
    pub objective: f64,
    pub backup_count: usize,
    pub primary_count: usize,
    /// Achieved reliability per service, request order.
    pub service_reliability: Vec<f64>,
}

impl MetricsRecord {
    pub fn mean_reliability(&self) -> f64 {
        if self.service_reliability.is_empty() {
            return 0.0;
        }
        self.service_reliability.iter().sum::<f64>() / self.service_reliability.len() as f64
    }

    pub fn min_reliability(&self) -> f64 {
        self.service_reliability
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub alpha: f64,
    pub reliability: ReliabilityModel,
    /// When false the reliability checks are omitted entirely.
    pub enforce_reliability: bool,
    /// Added to link and server capacities before the strict comparison.
    pub capacity_slack: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            reliability: ReliabilityModel::OneShot,
            enforce_reliability: true,
            capacity_slack: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("solution is malformed: {}", join(.0))]
    Shape(Vec<ShapeViolation>),
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
    #[error("no VNFs requested")]
    NoVnfs,
}

fn join(v: &[ShapeViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: ConstraintReport,
    pub metrics: MetricsRecord,
    pub reliability: ReliabilityResult,
}

pub fn check_type_match(layout: &ProtectionLayout, reqs: &[ServiceRequest]) -> Vec<Check> {
    let mut out = Vec::new();
    for (s, slots) in layout.protection.iter().enumerate() {
        for (j, list) in slots.iter().enumerate() {
            for &b in list {
                let backup = &layout.backups[b];
                let ok = backup.vnf_type == reqs[s].chain[j].vnf_type;
                out.push(Check::structural(
                    ConstraintId::TypeMatch,
                    Subject::vnf(reqs[s].id, j, Some(backup.id)),
                    usize::from(!ok),
                ));
            }
        }
    }
    out
}

pub fn check_anti_affinity(layout: &ProtectionLayout, reqs: &[ServiceRequest]) -> Vec<Check> {
    let mut out = Vec::new();
    for (s, slots) in layout.protection.iter().enumerate() {
        for (j, list) in slots.iter().enumerate() {
            for &b in list {
                let backup = &layout.backups[b];
                let clash = layout.hosts[s][j] == backup.host;
                out.push(Check::structural(
                    ConstraintId::AntiAffinityBackup,
                    Subject::vnf(reqs[s].id, j, Some(backup.id)),
                    usize::from(clash),
                ));
            }
        }
    }
    for (s, slots) in layout.protection.iter().enumerate() {
        for (j, list) in slots.iter().enumerate() {
            let mut hosts: Vec<ServerId> = list.iter().map(|&b| layout.backups[b].host).collect();
            hosts.sort_unstable();
            let before = hosts.len();
            hosts.dedup();
            if before > 1 {
                out.push(Check::structural(
                    ConstraintId::AntiAffinityBackup,
                    Subject::vnf(reqs[s].id, j, None),
                    before - hosts.len(),
                ));
            }
        }
    }
    for (b, users) in layout.users.iter().enumerate() {
        if users.len() < 2 {
            continue;
        }
        let mut clashes = 0;
        for (x, &(s, j)) in users.iter().enumerate() {
            for &(t, k) in &users[x + 1..] {
                if layout.hosts[s][j] == layout.hosts[t][k] {
                    clashes += 1;
                }
            }
        }
        out.push(Check::structural(
            ConstraintId::AntiAffinityCoSharers,
            Subject {
                backup: Some(layout.backups[b].id),
                ..Subject::default()
            },
            clashes,
        ));
    }
    out
}

/// Primary demand hosted plus, per hosted backup, the largest member
/// demand (the declared reservation when the backup has no members).
pub fn server_loads(layout: &ProtectionLayout, reqs: &[ServiceRequest]) -> BTreeMap<ServerId, f64> {
    let mut load = BTreeMap::new();
    for (s, chain) in layout.hosts.iter().enumerate() {
        for (j, &h) in chain.iter().enumerate() {
            *load.entry(h).or_insert(0.0) += reqs[s].chain[j].cpu_demand;
        }
    }
    for (b, backup) in layout.backups.iter().enumerate() {
        let users = &layout.users[b];
        let reserve = if users.is_empty() {
            backup.cpu_reservation
        } else {
            users
                .iter()
                .map(|&(s, j)| reqs[s].chain[j].cpu_demand)
                .fold(0.0, f64::max)
        };
        *load.entry(backup.host).or_insert(0.0) += reserve;
    }
    load
}

pub fn check_server_capacity(
    layout: &ProtectionLayout,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    slack: f64,
) -> Vec<Check> {
    server_loads(layout, reqs)
        .into_iter()
        .map(|(server, load)| {
            let cap = net.server(server).expect("hosts exist").capacity;
            let passed = load < cap + slack;
            Check {
                constraint: ConstraintId::ServerCapacity,
                subject: Subject {
                    server: Some(server),
                    ..Subject::default()
                },
                passed,
                magnitude: if passed { 0.0 } else { load - cap },
                limit: cap,
            }
        })
        .collect()
}

/// Per-link load: primary walks carry their bandwidth on every traversal,
/// and each backup reserves on a link the largest bandwidth among the
/// detours toward it that use the link.
pub fn link_loads(index: &SolutionIndex, reqs: &[ServiceRequest]) -> BTreeMap<LinkId, f64> {
    let mut load = BTreeMap::new();
    for (s, walk) in index.walks.iter().enumerate() {
        for &l in walk {
            *load.entry(l).or_insert(0.0) += reqs[s].bandwidth;
        }
    }
    let mut reserve: HashMap<(usize, LinkId), f64> = HashMap::new();
    for (s, slots) in index.layout.protection.iter().enumerate() {
        for (j, list) in slots.iter().enumerate() {
            for (k, &b) in list.iter().enumerate() {
                for &l in &index.detours[s][j][k] {
                    let e = reserve.entry((b, l)).or_insert(0.0);
                    *e = e.max(reqs[s].bandwidth);
                }
            }
        }
    }
    for ((_, l), bw) in reserve {
        *load.entry(l).or_insert(0.0) += bw;
    }
    load
}

pub fn total_bandwidth(index: &SolutionIndex, reqs: &[ServiceRequest]) -> f64 {
    link_loads(index, reqs).values().sum()
}

pub fn check_link_bandwidth(
    loads: &BTreeMap<LinkId, f64>,
    net: &SubstrateNetwork,
    slack: f64,
) -> Vec<Check> {
    loads
        .iter()
        .map(|(&link, &load)| {
            let cap = net.links()[link].bandwidth;
            let passed = load < cap + slack;
            Check {
                constraint: ConstraintId::LinkBandwidth,
                subject: Subject {
                    link: Some(link),
                    ..Subject::default()
                },
                passed,
                magnitude: if passed { 0.0 } else { load - cap },
                limit: cap,
            }
        })
        .collect()
}

fn excess_links(links: &[LinkId]) -> usize {
    if is_loop_free(links) {
        return 0;
    }
    let mut seen = std::collections::HashSet::new();
    let mut bad = 0;
    for &l in links {
        if !seen.insert(l) || seen.contains(&(l ^ 1)) {
            bad += 1;
        }
    }
    bad.max(1)
}

fn flow_imbalance(
    net: &SubstrateNetwork,
    walk: &[LinkId],
    source: ServerId,
    dest: ServerId,
) -> usize {
    if walk.is_empty() {
        return 0;
    }
    let mut balance: HashMap<ServerId, i64> = HashMap::new();
    for &l in walk {
        let link = &net.links()[l];
        *balance.entry(link.tail).or_insert(0) += 1;
        *balance.entry(link.head).or_insert(0) -= 1;
    }
    balance
        .into_iter()
        .filter(|&(n, b)| {
            let expected = match (n == source, n == dest) {
                (true, false) => 1,
                (false, true) => -1,
                _ => 0,
            };
            b != expected
        })
        .count()
}

pub fn check_routing(
    index: &SolutionIndex,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
) -> Vec<Check> {
    let mut out = Vec::new();
    for (s, req) in reqs.iter().enumerate() {
        let nodes = &index.walk_nodes[s];
        let walk = &index.walks[s];
        let wrong_ends = usize::from(nodes[0] != req.source)
            + usize::from(*nodes.last().unwrap() != req.destination);
        out.push(Check::structural(
            ConstraintId::PathEndpoints,
            Subject::service(req.id),
            wrong_ends,
        ));
        let in_order = segment_cuts(nodes, &index.layout.hosts[s]).is_some();
        out.push(Check::structural(
            ConstraintId::PathConnected,
            Subject::service(req.id),
            usize::from(!in_order),
        ));
        out.push(Check::structural(
            ConstraintId::FlowConservation,
            Subject::service(req.id),
            flow_imbalance(net, walk, req.source, req.destination),
        ));
        out.push(Check::structural(
            ConstraintId::LoopFree,
            Subject::service(req.id),
            excess_links(walk),
        ));
        out.push(Check::structural(
            ConstraintId::UniquePlacement,
            Subject::service(req.id),
            0,
        ));
    }
    out
}

/// Endpoints of the detour protecting position `j`: the previous host (or
/// the source) and the next host (or the destination).
pub fn detour_endpoints(
    hosts: &[ServerId],
    req: &ServiceRequest,
    j: usize,
) -> (ServerId, ServerId) {
    let prev = if j == 0 { req.source } else { hosts[j - 1] };
    let next = if j + 1 == hosts.len() {
        req.destination
    } else {
        hosts[j + 1]
    };
    (prev, next)
}

pub fn check_backup_paths(
    index: &SolutionIndex,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
) -> Vec<Check> {
    let mut out = Vec::new();
    let layout = &index.layout;
    for (s, req) in reqs.iter().enumerate() {
        for (j, list) in layout.protection[s].iter().enumerate() {
            let (prev, next) = detour_endpoints(&layout.hosts[s], req, j);
            for (k, &b) in list.iter().enumerate() {
                let backup = &layout.backups[b];
                let d = &index.detours[s][j][k];
                let subject = Subject::vnf(req.id, j, Some(backup.id));
                let nodes = crate::model::walk_nodes(net, prev, d).expect("shape-valid detour");
                let wrong_ends = if d.is_empty() {
                    2
                } else {
                    usize::from(nodes[0] != prev) + usize::from(*nodes.last().unwrap() != next)
                };
                out.push(Check::structural(
                    ConstraintId::BackupDetourEndpoints,
                    subject.clone(),
                    wrong_ends,
                ));
                let touches = !d.is_empty() && nodes.contains(&backup.host);
                out.push(Check::structural(
                    ConstraintId::BackupPathTouchesBackup,
                    subject.clone(),
                    usize::from(!touches),
                ));
                out.push(Check::structural(
                    ConstraintId::LoopFree,
                    subject,
                    excess_links(d),
                ));
            }
        }
    }
    out
}

/// Delay of each segment of a walk split at `cuts` (one more than the chain length).
pub fn segment_delays(net: &SubstrateNetwork, walk: &[LinkId], cuts: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for &c in cuts.iter().chain(std::iter::once(&walk.len())) {
        out.push(net.path_delay(&walk[start..c]));
        start = c;
    }
    out
}

pub fn check_delay(
    index: &SolutionIndex,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
) -> Vec<Check> {
    let mut out = Vec::new();
    let bound = |req: &ServiceRequest, delay: f64, subject: Subject| Check {
        constraint: ConstraintId::Delay,
        subject,
        passed: delay <= req.max_delay,
        magnitude: (delay - req.max_delay).max(0.0),
        limit: req.max_delay,
    };
    for (s, req) in reqs.iter().enumerate() {
        let walk = &index.walks[s];
        let primary = net.path_delay(walk);
        out.push(bound(req, primary, Subject::service(req.id)));
        let Some(cuts) = segment_cuts(&index.walk_nodes[s], &index.layout.hosts[s]) else {
            continue;
        };
        let seg = segment_delays(net, walk, &cuts);
        for (j, list) in index.layout.protection[s].iter().enumerate() {
            for (k, &b) in list.iter().enumerate() {
                let failover =
                    primary - seg[j] - seg[j + 1] + net.path_delay(&index.detours[s][j][k]);
                out.push(bound(
                    req,
                    failover,
                    Subject::vnf(req.id, j, Some(index.layout.backups[b].id)),
                ));
            }
        }
    }
    out
}

pub fn check_reliability(reqs: &[ServiceRequest], rel: &ReliabilityResult) -> Vec<Check> {
    reqs.iter()
        .enumerate()
        .map(|(s, req)| {
            let achieved = rel.per_service[s];
            let passed = rel.converged && achieved >= req.min_reliability;
            Check {
                constraint: ConstraintId::Reliability,
                subject: Subject::service(req.id),
                passed,
                magnitude: if passed {
                    0.0
                } else {
                    (req.min_reliability - achieved).max(0.0)
                },
                limit: req.min_reliability,
            }
        })
        .collect()
}

pub fn objective_value(
    alpha: f64,
    backups: usize,
    primaries: usize,
    bandwidth: f64,
    total_capacity: f64,
) -> f64 {
    alpha * backups as f64 / primaries as f64 + (1.0 - alpha) * bandwidth / total_capacity
}

fn check_alpha(alpha: f64) -> Result<(), EvalError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(EvalError::Alpha(alpha))
    }
}

pub fn objective(
    sol: &Solution,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    alpha: f64,
) -> Result<f64, EvalError> {
    check_alpha(alpha)?;
    let primaries: usize = reqs.iter().map(|r| r.len()).sum();
    if primaries == 0 {
        return Err(EvalError::NoVnfs);
    }
    let index = SolutionIndex::build(sol, net, reqs).map_err(EvalError::Shape)?;
    Ok(objective_value(
        alpha,
        index.layout.backups.len(),
        primaries,
        total_bandwidth(&index, reqs),
        net.total_link_capacity(),
    ))
}

/// The first failing family among the checks that need only the layout:
/// type, anti-affinity, server capacity and reliability.
pub fn layout_violation(
    layout: &ProtectionLayout,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    opts: &EvalOptions,
) -> Option<Family> {
    let fails = |checks: Vec<Check>| checks.iter().any(|c| !c.passed);
    if fails(check_type_match(layout, reqs)) {
        return Some(Family::Type);
    }
    if fails(check_anti_affinity(layout, reqs)) {
        return Some(Family::AntiAffinity);
    }
    if fails(check_server_capacity(
        layout,
        net,
        reqs,
        opts.capacity_slack,
    )) {
        return Some(Family::Capacity);
    }
    if opts.enforce_reliability {
        let rel = layout_reliability(layout, net, reqs, opts.reliability);
        if fails(check_reliability(reqs, &rel)) {
            return Some(Family::Reliability);
        }
    }
    None
}

pub fn evaluate(
    sol: &Solution,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    opts: &EvalOptions,
) -> Result<Evaluation, EvalError> {
    check_alpha(opts.alpha)?;
    let primaries: usize = reqs.iter().map(|r| r.len()).sum();
    if primaries == 0 {
        return Err(EvalError::NoVnfs);
    }
    let index = SolutionIndex::build(sol, net, reqs).map_err(EvalError::Shape)?;
    Ok(evaluate_index(&index, net, reqs, opts))
}

pub fn evaluate_index(
    index: &SolutionIndex,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    opts: &EvalOptions,
) -> Evaluation {
    let layout = &index.layout;
    let rel = layout_reliability(layout, net, reqs, opts.reliability);
    let link = link_loads(index, reqs);
    let cpu = server_loads(layout, reqs);

    let mut checks = check_type_match(layout, reqs);
    checks.extend(check_routing(index, net, reqs));
    checks.extend(check_backup_paths(index, net, reqs));
    checks.extend(check_anti_affinity(layout, reqs));
    checks.extend(check_link_bandwidth(&link, net, opts.capacity_slack));
    checks.extend(check_server_capacity(
        layout,
        net,
        reqs,
        opts.capacity_slack,
    ));
    checks.extend(check_delay(index, net, reqs));
    if opts.enforce_reliability {
        checks.extend(check_reliability(reqs, &rel));
    }

    let primaries: usize = reqs.iter().map(|r| r.len()).sum();
    let total_bw: f64 = link.values().sum();
    let total_cap = net.total_link_capacity();
    let metrics = MetricsRecord {
        total_bandwidth: total_bw,
        cpu_utilization: 100.0 * cpu.values().sum::<f64>() / net.total_server_capacity(),
        bandwidth_utilization: 100.0 * total_bw / total_cap,
        objective: objective_value(
            opts.alpha,
            layout.backups.len(),
            primaries.max(1),
            total_bw,
            total_cap,
        ),
        backup_count: layout.backups.len(),
        primary_count: primaries,
        service_reliability: rel.per_service.clone(),
        per_link_load: link,
        per_server_cpu: cpu,
    };
    Evaluation {
        report: ConstraintReport::new(checks),
        metrics,
        reliability: rel,
    }
}
