use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    service_positions, BackupId, LinkId, ServerId, ServiceId, ServiceRequest, SubstrateNetwork,
    TypeId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub service: ServiceId,
    /// Zero-based index into the service chain.
    pub position: usize,
    pub server: ServerId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupVnf {
    pub id: BackupId,
    pub vnf_type: TypeId,
    pub host: ServerId,
    /// Capacity accounting reserves the largest member demand; this value
    /// is used only for a backup without members.
    pub cpu_reservation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub service: ServiceId,
    pub position: usize,
    pub backup: BackupId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimaryPath {
    pub service: ServiceId,
    pub links: Vec<LinkId>,
}

/// Detour used when the primary at `position` fails and `backup` takes over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackupPath {
    pub service: ServiceId,
    pub position: usize,
    pub backup: BackupId,
    pub links: Vec<LinkId>,
}

/// A candidate placement and routing. Plain data; see [`SolutionIndex`] for
/// the validated view.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub placements: Vec<Placement>,
    pub backups: Vec<BackupVnf>,
    pub assignments: Vec<Assignment>,
    pub primary_paths: Vec<PrimaryPath>,
    pub backup_paths: Vec<BackupPath>,
}

impl Solution {
    pub fn backup_count(&self) -> usize {
        self.backups.len()
    }

    /// Sorts every list by its key so equal solutions serialize identically.
    pub fn canonicalize(&mut self) {
        self.placements.sort();
        self.backups.sort_by_key(|b| b.id);
        self.assignments.sort();
        self.primary_paths.sort_by_key(|p| p.service);
        self.backup_paths
            .sort_by_key(|p| (p.service, p.position, p.backup));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeViolation {
    UnknownService {
        service: ServiceId,
    },
    PositionOutOfRange {
        service: ServiceId,
        position: usize,
    },
    UnknownServer {
        server: ServerId,
    },
    MultiplePlacement {
        service: ServiceId,
        position: usize,
        servers: Vec<ServerId>,
    },
    MissingPlacement {
        service: ServiceId,
        position: usize,
    },
    DuplicateBackup {
        backup: BackupId,
    },
    UnknownBackup {
        service: ServiceId,
        position: usize,
        backup: BackupId,
    },
    DuplicateAssignment {
        service: ServiceId,
        position: usize,
        backup: BackupId,
    },
    MissingPrimaryPath {
        service: ServiceId,
    },
    DuplicatePrimaryPath {
        service: ServiceId,
    },
    UnknownLink {
        link: LinkId,
    },
    DisconnectedPath {
        service: ServiceId,
        backup: Option<BackupId>,
    },
    MissingBackupPath {
        service: ServiceId,
        position: usize,
        backup: BackupId,
    },
    DuplicateBackupPath {
        service: ServiceId,
        position: usize,
        backup: BackupId,
    },
    UnassignedBackupPath {
        service: ServiceId,
        position: usize,
        backup: BackupId,
    },
}

impl fmt::Display for ShapeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ShapeViolation::*;
        match self {
            UnknownService { service } => write!(f, "unknown service {service}"),
            PositionOutOfRange { service, position } => {
                write!(f, "service {service}: position {position} out of range")
            }
            UnknownServer { server } => write!(f, "unknown server {server}"),
            MultiplePlacement {
                service,
                position,
                servers,
            } => write!(
                f,
                "service {service} position {position}: placed on several servers {servers:?}"
            ),
            MissingPlacement { service, position } => {
                write!(f, "service {service} position {position}: not placed")
            }
            DuplicateBackup { backup } => write!(f, "duplicate backup id {backup}"),
            UnknownBackup {
                service,
                position,
                backup,
            } => write!(
                f,
                "service {service} position {position}: assignment to unknown backup {backup}"
            ),
            DuplicateAssignment {
                service,
                position,
                backup,
            } => write!(
                f,
                "service {service} position {position}: backup {backup} assigned twice"
            ),
            MissingPrimaryPath { service } => write!(f, "service {service}: no primary path"),
            DuplicatePrimaryPath { service } => {
                write!(f, "service {service}: several primary paths")
            }
            UnknownLink { link } => write!(f, "unknown link {link}"),
            DisconnectedPath {
                service,
                backup: None,
            } => {
                write!(f, "service {service}: path not a connected walk")
            }
            DisconnectedPath {
                service,
                backup: Some(b),
            } => {
                write!(f, "service {service} backup {b}: path not a connected walk")
            }
            MissingBackupPath {
                service,
                position,
                backup,
            } => write!(
                f,
                "service {service} position {position}: no detour for backup {backup}"
            ),
            DuplicateBackupPath {
                service,
                position,
                backup,
            } => write!(
                f,
                "service {service} position {position}: several detours for backup {backup}"
            ),
            UnassignedBackupPath {
                service,
                position,
                backup,
            } => write!(
                f,
                "service {service} position {position}: detour for unassigned backup {backup}"
            ),
        }
    }
}

/// Hosts and protection without any routing. Indices are dense: services by
/// their order in the request list, backups by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionLayout {
    pub hosts: Vec<Vec<ServerId>>,
    pub backups: Vec<BackupVnf>,
    /// `protection[s][j]` lists backup indices in ascending id order.
    pub protection: Vec<Vec<Vec<usize>>>,
    /// `users[b]` lists the `(service, position)` pairs protected by backup `b`,
    /// sorted.
    pub users: Vec<Vec<(usize, usize)>>,
}

impl ProtectionLayout {
    /// Builds a layout from trusted parts. `assignments` holds
    /// `(service index, position, backup index)` with indices into `hosts`
    /// and into `backups` as given (which must already be sorted by id).
    pub fn from_parts(
        hosts: Vec<Vec<ServerId>>,
        backups: Vec<BackupVnf>,
        assignments: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Self {
        debug_assert!(backups.windows(2).all(|w| w[0].id < w[1].id));
        let mut protection: Vec<Vec<Vec<usize>>> =
            hosts.iter().map(|c| vec![Vec::new(); c.len()]).collect();
        let mut users = vec![Vec::new(); backups.len()];
        for (s, j, b) in assignments {
            protection[s][j].push(b);
            users[b].push((s, j));
        }
        for slots in &mut protection {
            for list in slots {
                list.sort_unstable();
                list.dedup();
            }
        }
        for list in &mut users {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            hosts,
            backups,
            protection,
            users,
        }
    }

    pub fn unprotected(hosts: Vec<Vec<ServerId>>) -> Self {
        Self::from_parts(hosts, Vec::new(), std::iter::empty())
    }

    pub fn services(&self) -> usize {
        self.hosts.len()
    }
}

/// A shape-valid solution with its walks split into per-position segments.
#[derive(Debug, Clone)]
pub struct SolutionIndex {
    pub layout: ProtectionLayout,
    /// Primary walk per service.
    pub walks: Vec<Vec<LinkId>>,
    /// Node sequence of each walk; the service source when the walk is empty.
    pub walk_nodes: Vec<Vec<ServerId>>,
    /// `detours[s][j][k]` is the detour for backup `layout.protection[s][j][k]`.
    pub detours: Vec<Vec<Vec<Vec<LinkId>>>>,
}

impl SolutionIndex {
    pub fn build(
        sol: &Solution,
        net: &SubstrateNetwork,
        reqs: &[ServiceRequest],
    ) -> Result<Self, Vec<ShapeViolation>> {
        let mut v = Vec::new();
        let index = build_index(sol, net, reqs, &mut v);
        if v.is_empty() {
            Ok(index.expect("index exists when no violations"))
        } else {
            Err(v)
        }
    }
}

/// Referential integrity, uniqueness and walk connectivity. Endpoints, host
/// order and detour endpoints are constraint checks, not shape.
pub fn validate_solution_shape(
    sol: &Solution,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
) -> Vec<ShapeViolation> {
    let mut v = Vec::new();
    build_index(sol, net, reqs, &mut v);
    v
}

/// Node sequence of a walk that starts wherever its first link starts.
pub fn walk_nodes(
    net: &SubstrateNetwork,
    start_if_empty: ServerId,
    links: &[LinkId],
) -> Option<Vec<ServerId>> {
    match links.first() {
        None => Some(vec![start_if_empty]),
        Some(&l) => net.node_sequence(net.link(l)?.tail, links),
    }
}

/// Greedy decomposition of a walk's node sequence into chain segments.
/// `cuts[j]` is the index in `nodes` where the VNF at position `j` is
/// visited, taking the earliest occurrence after the previous cut. `None`
/// when the hosts do not appear in order.
pub fn segment_cuts(nodes: &[ServerId], hosts: &[ServerId]) -> Option<Vec<usize>> {
    let mut cuts = Vec::with_capacity(hosts.len());
    let mut at = 0;
    for &h in hosts {
        at += nodes[at..].iter().position(|&n| n == h)?;
        cuts.push(at);
    }
    Some(cuts)
}

fn build_index(
    sol: &Solution,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    v: &mut Vec<ShapeViolation>,
) -> Option<SolutionIndex> {
    let pos = service_positions(reqs);
    let mut chosen: Vec<Vec<Vec<ServerId>>> =
        reqs.iter().map(|r| vec![Vec::new(); r.len()]).collect();

    let resolve = |service: ServiceId, position: usize, v: &mut Vec<ShapeViolation>| {
        let Some(&s) = pos.get(&service) else {
            v.push(ShapeViolation::UnknownService { service });
            return None;
        };
        if position >= reqs[s].len() {
            v.push(ShapeViolation::PositionOutOfRange { service, position });
            return None;
        }
        Some(s)
    };

    for p in &sol.placements {
        if net.server(p.server).is_none() {
            v.push(ShapeViolation::UnknownServer { server: p.server });
            continue;
        }
        if let Some(s) = resolve(p.service, p.position, v) {
            chosen[s][p.position].push(p.server);
        }
    }
    let mut hosts = Vec::with_capacity(reqs.len());
    for (s, slots) in chosen.into_iter().enumerate() {
        let mut chain = Vec::with_capacity(slots.len());
        for (j, servers) in slots.into_iter().enumerate() {
            match servers.len() {
                1 => chain.push(servers[0]),
                0 => v.push(ShapeViolation::MissingPlacement {
                    service: reqs[s].id,
                    position: j,
                }),
                _ => v.push(ShapeViolation::MultiplePlacement {
                    service: reqs[s].id,
                    position: j,
                    servers,
                }),
            }
        }
        hosts.push(chain);
    }

    let mut backups = sol.backups.clone();
    backups.sort_by_key(|b| b.id);
    for w in backups.windows(2) {
        if w[0].id == w[1].id {
            v.push(ShapeViolation::DuplicateBackup { backup: w[0].id });
        }
    }
    backups.dedup_by_key(|b| b.id);
    for b in &backups {
        if net.server(b.host).is_none() {
            v.push(ShapeViolation::UnknownServer { server: b.host });
        }
    }
    let bidx: HashMap<BackupId, usize> =
        backups.iter().enumerate().map(|(i, b)| (b.id, i)).collect();

    let mut seen = HashSet::new();
    let mut links = Vec::new();
    for a in &sol.assignments {
        let Some(s) = resolve(a.service, a.position, v) else {
            continue;
        };
        let Some(&b) = bidx.get(&a.backup) else {
            v.push(ShapeViolation::UnknownBackup {
                service: a.service,
                position: a.position,
                backup: a.backup,
            });
            continue;
        };
        if !seen.insert(*a) {
            v.push(ShapeViolation::DuplicateAssignment {
                service: a.service,
                position: a.position,
                backup: a.backup,
            });
            continue;
        }
        links.push((s, a.position, b));
    }

    let check_links = |ls: &[LinkId], v: &mut Vec<ShapeViolation>| {
        let mut ok = true;
        for &l in ls {
            if net.link(l).is_none() {
                v.push(ShapeViolation::UnknownLink { link: l });
                ok = false;
            }
        }
        ok
    };

    let mut walks: Vec<Option<Vec<LinkId>>> = vec![None; reqs.len()];
    let mut walk_seq = vec![Vec::new(); reqs.len()];
    for p in &sol.primary_paths {
        let Some(&s) = pos.get(&p.service) else {
            v.push(ShapeViolation::UnknownService { service: p.service });
            continue;
        };
        if walks[s].is_some() {
            v.push(ShapeViolation::DuplicatePrimaryPath { service: p.service });
            continue;
        }
        if check_links(&p.links, v) {
            match walk_nodes(net, reqs[s].source, &p.links) {
                Some(nodes) => walk_seq[s] = nodes,
                None => v.push(ShapeViolation::DisconnectedPath {
                    service: p.service,
                    backup: None,
                }),
            }
        }
        walks[s] = Some(p.links.clone());
    }
    for (s, w) in walks.iter().enumerate() {
        if w.is_none() {
            v.push(ShapeViolation::MissingPrimaryPath {
                service: reqs[s].id,
            });
        }
    }

    let mut detour_map: BTreeMap<(usize, usize, usize), Vec<LinkId>> = BTreeMap::new();
    for p in &sol.backup_paths {
        let Some(s) = resolve(p.service, p.position, v) else {
            continue;
        };
        let key = bidx.get(&p.backup).map(|&b| (s, p.position, b));
        let assigned = key.is_some_and(|k| links.contains(&k));
        if !assigned {
            v.push(ShapeViolation::UnassignedBackupPath {
                service: p.service,
                position: p.position,
                backup: p.backup,
            });
            continue;
        }
        let key = key.unwrap();
        if detour_map.contains_key(&key) {
            v.push(ShapeViolation::DuplicateBackupPath {
                service: p.service,
                position: p.position,
                backup: p.backup,
            });
            continue;
        }
        if check_links(&p.links, v) && walk_nodes(net, 0, &p.links).is_none() {
            v.push(ShapeViolation::DisconnectedPath {
                service: p.service,
                backup: Some(p.backup),
            });
        }
        detour_map.insert(key, p.links.clone());
    }

    if !v.is_empty() {
        for &(s, j, b) in &links {
            if !detour_map.contains_key(&(s, j, b)) {
                v.push(ShapeViolation::MissingBackupPath {
                    service: reqs[s].id,
                    position: j,
                    backup: backups[b].id,
                });
            }
        }
        return None;
    }

    let layout = ProtectionLayout::from_parts(hosts, backups, links);
    let mut detours = Vec::with_capacity(reqs.len());
    for (s, slots) in layout.protection.iter().enumerate() {
        let mut per_pos = Vec::with_capacity(slots.len());
        for (j, list) in slots.iter().enumerate() {
            let mut ds = Vec::with_capacity(list.len());
            for &b in list {
                match detour_map.get(&(s, j, b)) {
                    Some(d) => ds.push(d.clone()),
                    None => v.push(ShapeViolation::MissingBackupPath {
                        service: reqs[s].id,
                        position: j,
                        backup: layout.backups[b].id,
                    }),
                }
            }
            per_pos.push(ds);
        }
        detours.push(per_pos);
    }
    if !v.is_empty() {
        return None;
    }
    Some(SolutionIndex {
        layout,
        walks: walks.into_iter().map(Option::unwrap).collect(),
        walk_nodes: walk_seq,
        detours,
    })
}
