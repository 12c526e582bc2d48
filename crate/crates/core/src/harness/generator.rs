//! Random scenario generation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::builtin::{LINK_BANDWIDTH, LINK_DELAY, MIN_RELIABILITY, SERVER_CAPACITY, VNF_CPU};
use crate::model::{
    ModelError, Scenario, Server, ServerId, ServiceRequest, SubstrateNetwork, UndirectedLink,
    VnfSpec,
};
use crate::paths::PathCatalog;

pub const VNF_TYPES: [u32; 4] = [1, 2, 3, 4];
pub const CHAIN_LENGTH: usize = 3;
pub const RELIABILITY_RANGE: (f64, f64) = (0.90, 0.96);
pub const MTTR_RANGE: (f64, f64) = (2.0, 6.0);
/// Delay allowance on top of the shortest source-destination hop count,
/// expressed in links.
pub const DELAY_SLACK_HOPS: usize = 4;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("cannot build a connected graph on {nodes} nodes with {links} links")]
    Connectivity { nodes: usize, links: usize },
    #[error("{links} links exceed the {max} possible on {nodes} nodes")]
    TooManyLinks {
        nodes: usize,
        links: usize,
        max: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn server(rng: &mut ChaCha8Rng, id: ServerId, capacity: f64) -> Server {
    let reliability = rng.gen_range(RELIABILITY_RANGE.0..RELIABILITY_RANGE.1);
    let mttr = rng.gen_range(MTTR_RANGE.0..MTTR_RANGE.1);
    Server {
        id,
        capacity,
        reliability,
        mttr,
        mtbf: reliability * mttr / (1.0 - reliability),
    }
}

/// Uniform random spanning tree by random attachment, then distinct extra
/// edges drawn uniformly from the remaining pairs.
fn random_edges(
    rng: &mut ChaCha8Rng,
    nodes: usize,
    links: usize,
    bandwidth: f64,
) -> Vec<UndirectedLink> {
    let mut order: Vec<ServerId> = (1..=nodes as ServerId).collect();
    order.shuffle(rng);
    let mut pairs = Vec::with_capacity(links);
    for i in 1..nodes {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i].min(order[j]), order[i].max(order[j]));
        pairs.push((a, b));
    }
    let mut rest: Vec<(ServerId, ServerId)> = (1..=nodes as ServerId)
        .flat_map(|a| (a + 1..=nodes as ServerId).map(move |b| (a, b)))
        .filter(|p| !pairs.contains(p))
        .collect();
    rest.shuffle(rng);
    pairs.extend(rest.into_iter().take(links + 1 - nodes));
    pairs.sort_unstable();
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| UndirectedLink {
            id: i as u32,
            a,
            b,
            bandwidth,
            delay: LINK_DELAY,
        })
        .collect()
}

/// Connected random substrate with `services` three-VNF chains. Server ids
/// run from 1 to `nodes`.
pub fn generate_scenario(
    nodes: usize,
    undirected_links: usize,
    services: usize,
    seed: u64,
) -> Result<Scenario, GenerateError> {
    if nodes < 2 || undirected_links + 1 < nodes {
        return Err(GenerateError::Connectivity {
            nodes,
            links: undirected_links,
        });
    }
    let max = nodes * (nodes - 1) / 2;
    if undirected_links > max {
        return Err(GenerateError::TooManyLinks {
            nodes,
            links: undirected_links,
            max,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let servers: Vec<Server> = (1..=nodes as ServerId)
        .map(|id| server(&mut rng, id, SERVER_CAPACITY))
        .collect();
    let edges = random_edges(&mut rng, nodes, undirected_links, LINK_BANDWIDTH);
    let net = SubstrateNetwork::from_undirected(servers, &edges)?;
    let catalog = PathCatalog::new(&net, Some(1));

    let mut reqs = Vec::with_capacity(services);
    for i in 0..services {
        let source = rng.gen_range(1..=nodes as ServerId);
        let mut destination = rng.gen_range(1..nodes as ServerId);
        if destination >= source {
            destination += 1;
        }
        let chain = VNF_TYPES
            .choose_multiple(&mut rng, CHAIN_LENGTH)
            .map(|&t| VnfSpec {
                vnf_type: t,
                cpu_demand: VNF_CPU,
            })
            .collect();
        let bandwidth = if rng.gen_bool(0.5) { 2.0 } else { 4.0 };
        let hops = catalog.hops(source, destination).expect("connected graph");
        reqs.push(ServiceRequest {
            id: i as u32 + 1,
            source,
            destination,
            chain,
            bandwidth,
            max_delay: LINK_DELAY * (hops + DELAY_SLACK_HOPS) as f64,
            min_reliability: MIN_RELIABILITY,
        });
    }
    Ok(Scenario::new(net, reqs, VNF_TYPES.to_vec())?)
}

/// Tiny instance for exhaustive comparison: three servers on a line or a
/// triangle, one or two services with chains of one or two VNFs.
pub fn toy_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let servers: Vec<Server> = (0..3)
        .map(|id| {
            let capacity = rng.gen_range(2..=4) as f64;
            server(&mut rng, id, capacity)
        })
        .collect();
    let mut pairs = vec![(0, 1), (1, 2)];
    if rng.gen_bool(0.5) {
        pairs.push((0, 2));
    }
    let edges: Vec<UndirectedLink> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| UndirectedLink {
            id: i as u32,
            a,
            b,
            bandwidth: rng.gen_range(6..=20) as f64,
            delay: rng.gen_range(1..=5) as f64,
        })
        .collect();
    let net = SubstrateNetwork::from_undirected(servers, &edges).expect("toy network is valid");
    let count = rng.gen_range(1..=2);
    let reqs = (0..count)
        .map(|i| {
            let len = rng.gen_range(1..=2);
            ServiceRequest {
                id: i + 1,
                source: rng.gen_range(0..3),
                destination: rng.gen_range(0..3),
                chain: (0..len)
                    .map(|_| VnfSpec {
                        vnf_type: rng.gen_range(1..=2),
                        cpu_demand: 1.0,
                    })
                    .collect(),
                bandwidth: if rng.gen_bool(0.5) { 2.0 } else { 4.0 },
                max_delay: rng.gen_range(10..=30) as f64,
                min_reliability: rng.gen_range(0.80..0.97),
            }
        })
        .collect();
    Scenario::new(net, reqs, vec![1, 2]).expect("toy scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nsf_regime_is_connected_and_sized() {
        let sc = generate_scenario(20, 40, 30, 11).unwrap();
        assert_eq!(sc.network.servers().len(), 20);
        assert_eq!(sc.network.links().len(), 80);
        assert_eq!(sc.services.len(), 30);
        let catalog = PathCatalog::new(&sc.network, Some(1));
        for a in sc.network.servers() {
            assert!(sc
                .network
                .servers()
                .iter()
                .all(|b| catalog.hops(a.id, b.id).is_some()));
            assert!((0.90..0.96).contains(&a.reliability));
        }
        for s in &sc.services {
            assert_eq!(s.len(), 3);
            assert_ne!(s.source, s.destination);
            let mut t: Vec<_> = s.chain.iter().map(|v| v.vnf_type).collect();
            t.sort();
            t.dedup();
            assert_eq!(t.len(), 3);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = generate_scenario(8, 14, 4, 3).unwrap();
        let b = generate_scenario(8, 14, 4, 3).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(
            a.to_json(),
            generate_scenario(8, 14, 4, 4).unwrap().to_json()
        );
    }

    #[test]
    fn impossible_connectivity_is_rejected() {
        assert!(matches!(
            generate_scenario(2, 0, 1, 0),
            Err(GenerateError::Connectivity { .. })
        ));
        assert!(matches!(
            generate_scenario(1, 0, 1, 0),
            Err(GenerateError::Connectivity { .. })
        ));
        assert!(matches!(
            generate_scenario(4, 7, 1, 0),
            Err(GenerateError::TooManyLinks { .. })
        ));
        assert!(generate_scenario(4, 6, 1, 0).is_ok());
    }

    #[test]
    fn toy_instances_are_small() {
        for seed in 0..50 {
            let sc = toy_scenario(seed);
            assert_eq!(sc.network.servers().len(), 3);
            assert!(sc.services.len() <= 2);
            assert!(sc.services.iter().all(|s| (1..=2).contains(&s.len())));
        }
    }
}
