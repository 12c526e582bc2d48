//! Domain model: substrate networks, service requests, candidate solutions,
//! and the JSON scenario format.
//!
//! Topologies are undirected in files. Every undirected edge `k` (in file
//! order) expands to two directed links with ids `2k` (a to b) and `2k + 1`
//! (b to a), so `reverse(m) == m ^ 1`.

mod scenario;
mod solution;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scenario::{load_scenario, save_scenario, Scenario};
pub use solution::{
    segment_cuts, validate_solution_shape, walk_nodes, Assignment, BackupPath, BackupVnf,
    Placement, PrimaryPath, ProtectionLayout, ShapeViolation, Solution, SolutionIndex,
};

pub type ServerId = u32;
/// Index of a directed link in [`SubstrateNetwork::links`].
pub type LinkId = usize;
pub type TypeId = u32;
pub type ServiceId = u32;
pub type BackupId = u32;

/// A physical machine able to host VNFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Server {
    pub id: ServerId,
    /// Processing units available for primary and backup VNFs.
    pub capacity: f64,
    /// Probability that the server is up.
    pub reliability: f64,
    /// Mean time to repair, in hours.
    pub mttr: f64,
    /// Mean time between failures, in hours. Carried for reference only.
    pub mtbf: f64,
}

impl Server {
    fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidServer {
            id: self.id,
            reason,
        };
        if !(self.reliability > 0.0 && self.reliability <= 1.0) {
            return Err(bad(format!(
                "reliability {} outside (0, 1]",
                self.reliability
            )));
        }
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(bad(format!("capacity {} must be positive", self.capacity)));
        }
        if !(self.mttr > 0.0 && self.mttr.is_finite()) {
            return Err(bad(format!("mttr {} must be positive", self.mttr)));
        }
        if !(self.mtbf > 0.0) {
            return Err(bad(format!("mtbf {} must be positive", self.mtbf)));
        }
        Ok(())
    }
}

/// An undirected edge as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndirectedLink {
    pub id: u32,
    pub a: ServerId,
    pub b: ServerId,
    pub bandwidth: f64,
    pub delay: f64,
}

/// A directed physical link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    /// Id of the undirected edge this link was expanded from.
    pub edge: u32,
    pub tail: ServerId,
    pub head: ServerId,
    pub bandwidth: f64,
    /// Propagation delay in milliseconds.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfSpec {
    pub vnf_type: TypeId,
    pub cpu_demand: f64,
}

/// A service function chain request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: ServiceId,
    pub source: ServerId,
    pub destination: ServerId,
    pub chain: Vec<VnfSpec>,
    pub bandwidth: f64,
    /// Upper bound on end-to-end delay in milliseconds.
    pub max_delay: f64,
    pub min_reliability: f64,
}

impl ServiceRequest {
    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("server {id}: {reason}")]
    InvalidServer { id: ServerId, reason: String },
    #[error("link {id}: {reason}")]
    InvalidLink { id: u32, reason: String },
    #[error("service {id}: {reason}")]
    InvalidService { id: ServiceId, reason: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
}

/// Directed substrate graph. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstrateNetwork {
    servers: Vec<Server>,
    links: Vec<Link>,
    slots: HashMap<ServerId, usize>,
    out_links: Vec<Vec<LinkId>>,
    in_links: Vec<Vec<LinkId>>,
}

impl SubstrateNetwork {
    /// Builds the directed network from undirected edges. Servers are kept
    /// sorted by id.
    pub fn from_undirected(
        mut servers: Vec<Server>,
        edges: &[UndirectedLink],
    ) -> Result<Self, ModelError> {
        servers.sort_by_key(|s| s.id);
        let mut slots = HashMap::with_capacity(servers.len());
        for (slot, server) in servers.iter().enumerate() {
            server.validate()?;
            if slots.insert(server.id, slot).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "server",
                    id: server.id as u64,
                });
            }
        }

        let mut seen_edges = HashMap::new();
        let mut links = Vec::with_capacity(edges.len() * 2);
        for e in edges {
            let bad = |reason: String| ModelError::InvalidLink { id: e.id, reason };
            if seen_edges.insert(e.id, ()).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "link",
                    id: e.id as u64,
                });
            }
            if e.a == e.b {
                return Err(bad(format!("self-loop on server {}", e.a)));
            }
            for end in [e.a, e.b] {
                if !slots.contains_key(&end) {
                    return Err(bad(format!("unknown endpoint {end}")));
                }
            }
            if !(e.bandwidth > 0.0 && e.bandwidth.is_finite()) {
                return Err(bad(format!("bandwidth {} must be positive", e.bandwidth)));
            }
            if !(e.delay >= 0.0 && e.delay.is_finite()) {
                return Err(bad(format!("delay {} must be non-negative", e.delay)));
            }
            for (tail, head) in [(e.a, e.b), (e.b, e.a)] {
                links.push(Link {
                    id: links.len(),
                    edge: e.id,
                    tail,
                    head,
                    bandwidth: e.bandwidth,
                    delay: e.delay,
                });
            }
        }

        let mut out_links = vec![Vec::new(); servers.len()];
        let mut in_links = vec![Vec::new(); servers.len()];
        for link in &links {
            out_links[slots[&link.tail]].push(link.id);
            in_links[slots[&link.head]].push(link.id);
        }
        Ok(Self {
            servers,
            links,
            slots,
            out_links,
            in_links,
        })
    }

    pub fn servers(&self) -> &[Server] {
        &self.servers
    }

    pub fn server(&self, id: ServerId) -> Option<&Server> {
        self.slots.get(&id).map(|&s| &self.servers[s])
    }

    /// Dense index of a server in `servers()`.
    pub fn slot(&self, id: ServerId) -> Option<usize> {
        self.slots.get(&id).copied()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(id)
    }

    pub fn out_links(&self, server: ServerId) -> &[LinkId] {
        self.slot(server).map_or(&[], |s| &self.out_links[s])
    }

    pub fn in_links(&self, server: ServerId) -> &[LinkId] {
        self.slot(server).map_or(&[], |s| &self.in_links[s])
    }

    /// The opposite direction of the same undirected edge.
    pub fn reverse(&self, link: LinkId) -> LinkId {
        link ^ 1
    }

    pub fn find_link(&self, tail: ServerId, head: ServerId) -> Option<LinkId> {
        self.out_links(tail)
            .iter()
            .copied()
            .find(|&l| self.links[l].head == head)
    }

    /// Σ B_m over directed links.
    pub fn total_link_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.bandwidth).sum()
    }

    pub fn total_server_capacity(&self) -> f64 {
        self.servers.iter().map(|s| s.capacity).sum()
    }

    /// Node sequence of a walk starting at `start`. `None` if a link is
    /// unknown or consecutive links do not chain.
    pub fn node_sequence(&self, start: ServerId, links: &[LinkId]) -> Option<Vec<ServerId>> {
        let mut nodes = Vec::with_capacity(links.len() + 1);
        nodes.push(start);
        let mut at = start;
        for &l in links {
            let link = self.link(l)?;
            if link.tail != at {
                return None;
            }
            at = link.head;
            nodes.push(at);
        }
        Some(nodes)
    }

    pub fn path_delay(&self, links: &[LinkId]) -> f64 {
        links.iter().map(|&l| self.links[l].delay).sum()
    }

    /// Undirected edges, reconstructed from the directed pairs.
    pub fn undirected_links(&self) -> Vec<UndirectedLink> {
        self.links
            .chunks(2)
            .map(|pair| UndirectedLink {
                id: pair[0].edge,
                a: pair[0].tail,
                b: pair[0].head,
                bandwidth: pair[0].bandwidth,
                delay: pair[0].delay,
            })
            .collect()
    }
}

/// Position of a service in the request list, looked up by id.
pub(crate) fn service_positions(reqs: &[ServiceRequest]) -> HashMap<ServiceId, usize> {
    reqs.iter().enumerate().map(|(i, r)| (r.id, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn server(id: ServerId) -> Server {
        Server {
            id,
            capacity: 5.0,
            reliability: 0.95,
            mttr: 2.0,
            mtbf: 38.0,
        }
    }

    fn edge(id: u32, a: ServerId, b: ServerId) -> UndirectedLink {
        UndirectedLink {
            id,
            a,
            b,
            bandwidth: 20.0,
            delay: 10.0,
        }
    }

    #[test]
    fn undirected_edges_expand_to_opposite_pairs() {
        let net = SubstrateNetwork::from_undirected(
            vec![server(3), server(1), server(2)],
            &[edge(7, 1, 2), edge(9, 2, 3)],
        )
        .unwrap();
        assert_eq!(net.links().len(), 4);
        assert_eq!(net.servers()[0].id, 1);
        let l = net.find_link(2, 1).unwrap();
        assert_eq!(net.reverse(l), net.find_link(1, 2).unwrap());
        assert_eq!(net.link(l).unwrap().edge, 7);
        assert_eq!(net.undirected_links(), vec![edge(7, 1, 2), edge(9, 2, 3)]);
    }

    #[test]
    fn node_sequence_rejects_broken_walks() {
        let net = SubstrateNetwork::from_undirected(
            vec![server(1), server(2), server(3)],
            &[edge(0, 1, 2), edge(1, 2, 3)],
        )
        .unwrap();
        let l12 = net.find_link(1, 2).unwrap();
        let l23 = net.find_link(2, 3).unwrap();
        assert_eq!(net.node_sequence(1, &[l12, l23]), Some(vec![1, 2, 3]));
        assert_eq!(net.node_sequence(1, &[l23]), None);
        assert_eq!(net.node_sequence(1, &[99]), None);
        assert_eq!(net.node_sequence(2, &[]), Some(vec![2]));
    }

    #[test]
    fn invalid_entities_are_named() {
        let mut bad = server(4);
        bad.reliability = 0.0;
        let err = SubstrateNetwork::from_undirected(vec![bad], &[]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidServer { id: 4, .. }));

        let err = SubstrateNetwork::from_undirected(vec![server(1)], &[edge(5, 1, 1)]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidLink { id: 5, .. }));

        let err = SubstrateNetwork::from_undirected(vec![server(1), server(1)], &[]).unwrap_err();
        assert!(matches!(
            err,
            ModelError::DuplicateId { kind: "server", .. }
        ));
    }
}
