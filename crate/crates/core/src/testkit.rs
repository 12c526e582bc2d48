//! Shared fixtures for unit tests.

use crate::model::{Server, ServerId, ServiceRequest, SubstrateNetwork, VnfSpec};

pub use crate::harness::worked_example;

/// Link-free pool of servers `0..n` with the given reliabilities and MTTRs.
pub fn pool_network(rel: &[f64], mttr: &[f64]) -> (SubstrateNetwork, Vec<ServiceRequest>) {
    let servers = rel
        .iter()
        .zip(mttr)
        .enumerate()
        .map(|(i, (&r, &m))| Server {
            id: i as ServerId,
            capacity: 5.0,
            reliability: r,
            mttr: m,
            mtbf: 1.0,
        })
        .collect();
    (
        SubstrateNetwork::from_undirected(servers, &[]).unwrap(),
        Vec::new(),
    )
}

/// One request per host chain; ids follow the chain order.
pub fn requests_for(hosts: &[Vec<ServerId>]) -> Vec<ServiceRequest> {
    hosts
        .iter()
        .enumerate()
        .map(|(i, c)| ServiceRequest {
            id: i as u32,
            source: 0,
            destination: 0,
            chain: vec![
                VnfSpec {
                    vnf_type: 0,
                    cpu_demand: 1.0
                };
                c.len()
            ],
            bandwidth: 1.0,
            max_delay: 1.0,
            min_reliability: 0.5,
        })
        .collect()
}
