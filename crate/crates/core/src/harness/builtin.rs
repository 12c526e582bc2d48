//! Hand-built instances: the 8-node benchmark network with its four demands,
//! and a small two-chain example used to illustrate the protection schemes.

use crate::model::{
    Assignment, BackupPath, BackupVnf, LinkId, Placement, PrimaryPath, Scenario, Server, ServerId,
    ServiceRequest, Solution, SubstrateNetwork, UndirectedLink, VnfSpec,
};

/// Processing units per server. With unit demands, four VNFs fit under the
/// strict capacity inequality.
pub const SERVER_CAPACITY: f64 = 5.0;
pub const VNF_CPU: f64 = 1.0;
pub const LINK_BANDWIDTH: f64 = 20.0;
pub const LINK_DELAY: f64 = 10.0;
pub const MIN_RELIABILITY: f64 = 0.98;

fn servers(reliability: &[f64], mttr: f64) -> Vec<Server> {
    reliability
        .iter()
        .enumerate()
        .map(|(i, &r)| Server {
            id: i as ServerId + 1,
            capacity: SERVER_CAPACITY,
            reliability: r,
            mttr,
            mtbf: r * mttr / (1.0 - r),
        })
        .collect()
}

fn edges(pairs: &[(ServerId, ServerId)], bandwidth: f64) -> Vec<UndirectedLink> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| UndirectedLink {
            id: i as u32,
            a,
            b,
            bandwidth,
            delay: LINK_DELAY,
        })
        .collect()
}

fn chain(types: &[u32]) -> Vec<VnfSpec> {
    types
        .iter()
        .map(|&t| VnfSpec {
            vnf_type: t,
            cpu_demand: VNF_CPU,
        })
        .collect()
}

/// Reconstructed 8-node, 14-link topology with the four benchmark demands.
pub fn builtin_scenario_8node() -> Scenario {
    let rel = [0.94, 0.96, 0.92, 0.94, 0.93, 0.96, 0.92, 0.94];
    let pairs = [
        (1, 2),
        (1, 5),
        (1, 6),
        (2, 3),
        (2, 4),
        (2, 5),
        (3, 7),
        (3, 8),
        (4, 6),
        (4, 7),
        (5, 6),
        (6, 7),
        (7, 8),
        (4, 5),
    ];
    let net = SubstrateNetwork::from_undirected(servers(&rel, 4.0), &edges(&pairs, LINK_BANDWIDTH))
        .expect("builtin network is valid");
    let demand = |id, types: &[u32], source, destination, bandwidth, max_delay| ServiceRequest {
        id,
        source,
        destination,
        chain: chain(types),
        bandwidth,
        max_delay,
        min_reliability: MIN_RELIABILITY,
    };
    let services = vec![
        demand(1, &[3, 2, 1], 8, 5, 2.0, 50.0),
        demand(2, &[2, 1, 3], 1, 3, 4.0, 50.0),
        demand(3, &[2, 3, 1], 1, 8, 2.0, 60.0),
        demand(4, &[1, 3, 2], 3, 5, 4.0, 60.0),
    ];
    Scenario::new(net, services, vec![1, 2, 3, 4]).expect("builtin scenario is valid")
}

/// Two chains on eight machines together with the unprotected, dedicated
/// and shared layouts.
#[derive(Debug, Clone)]
pub struct WorkedExample {
    pub scenario: Scenario,
    pub np: Solution,
    pub dp: Solution,
    pub sp: Solution,
}

/// The shared layout places the second chain's first VNF on machine 5, whose
/// reliability is 0.94; the unprotected and dedicated layouts keep it on 6.
pub fn worked_example() -> WorkedExample {
    let rel = [0.94, 0.96, 0.92, 0.94, 0.94, 0.96, 0.92, 0.94];
    let pairs = [
        (1, 2),
        (2, 3),
        (6, 7),
        (7, 8),
        (2, 4),
        (4, 3),
        (6, 4),
        (4, 8),
        (6, 8),
        (1, 5),
        (5, 6),
        (5, 7),
        (4, 5),
    ];
    let net = SubstrateNetwork::from_undirected(servers(&rel, 4.0), &edges(&pairs, 100.0))
        .expect("example network is valid");
    let services = vec![
        ServiceRequest {
            id: 1,
            source: 1,
            destination: 3,
            chain: chain(&[4, 2, 3]),
            bandwidth: 20.0,
            max_delay: 100.0,
            min_reliability: 0.89,
        },
        ServiceRequest {
            id: 2,
            source: 6,
            destination: 8,
            chain: chain(&[1, 3]),
            bandwidth: 20.0,
            max_delay: 100.0,
            min_reliability: 0.89,
        },
    ];
    let scenario = Scenario::new(net, services, vec![1, 2, 3, 4]).expect("example is valid");
    let net = &scenario.network;
    let walk = |nodes: &[ServerId]| -> Vec<LinkId> {
        nodes
            .windows(2)
            .map(|w| net.find_link(w[0], w[1]).expect("example link exists"))
            .collect()
    };
    let placements = |s2_first: ServerId| {
        [(1, 0, 1), (1, 1, 2), (1, 2, 3), (2, 0, s2_first), (2, 1, 7)]
            .map(|(service, position, server)| Placement {
                service,
                position,
                server,
            })
            .to_vec()
    };
    let backup = |id, host| BackupVnf {
        id,
        vnf_type: 3,
        host,
        cpu_reservation: VNF_CPU,
    };
    let assign = |service, position, backup| Assignment {
        service,
        position,
        backup,
    };
    let detour = |service, position, backup, nodes: &[ServerId]| BackupPath {
        service,
        position,
        backup,
        links: walk(nodes),
    };

    let np = Solution {
        placements: placements(6),
        primary_paths: vec![
            PrimaryPath {
                service: 1,
                links: walk(&[1, 2, 3]),
            },
            PrimaryPath {
                service: 2,
                links: walk(&[6, 7, 8]),
            },
        ],
        ..Default::default()
    };
    let dp = Solution {
        backups: vec![backup(0, 4), backup(1, 8)],
        assignments: vec![assign(1, 2, 0), assign(2, 1, 1)],
        backup_paths: vec![detour(1, 2, 0, &[2, 4, 3]), detour(2, 1, 1, &[6, 8])],
        ..np.clone()
    };
    let sp = Solution {
        placements: placements(5),
        backups: vec![backup(0, 4)],
        assignments: vec![assign(1, 2, 0), assign(2, 1, 0)],
        primary_paths: vec![
            PrimaryPath {
                service: 1,
                links: walk(&[1, 2, 3]),
            },
            PrimaryPath {
                service: 2,
                links: walk(&[6, 5, 7, 8]),
            },
        ],
        backup_paths: vec![detour(1, 2, 0, &[2, 4, 3]), detour(2, 1, 0, &[5, 4, 8])],
    };
    WorkedExample {
        scenario,
        np,
        dp,
        sp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_node_shape() {
        let sc = builtin_scenario_8node();
        assert_eq!(sc.network.servers().len(), 8);
        assert_eq!(sc.network.links().len(), 28);
        assert_eq!(sc.services.len(), 4);
        assert!(sc
            .services
            .iter()
            .all(|s| s.len() == 3 && s.min_reliability == 0.98));
        let s1 = &sc.services[0];
        let types: Vec<_> = s1.chain.iter().map(|v| v.vnf_type).collect();
        assert_eq!(
            (types, s1.source, s1.destination, s1.bandwidth, s1.max_delay),
            (vec![3, 2, 1], 8, 5, 2.0, 50.0)
        );
        let s4 = &sc.services[3];
        let types: Vec<_> = s4.chain.iter().map(|v| v.vnf_type).collect();
        assert_eq!(
            (types, s4.source, s4.destination, s4.bandwidth, s4.max_delay),
            (vec![1, 3, 2], 3, 5, 4.0, 60.0)
        );
    }

    #[test]
    fn example_layouts_are_well_formed() {
        let ex = worked_example();
        for sol in [&ex.np, &ex.dp, &ex.sp] {
            let v = crate::model::validate_solution_shape(
                sol,
                &ex.scenario.network,
                &ex.scenario.services,
            );
            assert!(v.is_empty(), "{v:?}");
        }
    }
}
