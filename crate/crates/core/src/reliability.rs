//! Analytic reliability of primary VNFs with dedicated or shared backups.
//!
//! A shared backup serves member `m` with probability
//! `phi_m = 1 - sum_{o != m} mttr_o / (mttr_m + mttr_o) * (1 - r_o)`, clamped
//! to `[0, 1]`, and the protected reliability is `r_p + (1 - r_p) * r_b * phi`.
//! Several backups on one VNF are applied one after another in ascending
//! backup id, each stage using the previous stage's output as `r_p`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BackupId, ProtectionLayout, ServiceId, ServiceRequest, ShapeViolation, Solution, SolutionIndex,
    SubstrateNetwork,
};

pub const FIXED_POINT_TOLERANCE: f64 = 1e-9;
pub const FIXED_POINT_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ReliabilityError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("service {service} position {position} is not a member of backup {backup}")]
    NotAMember {
        service: ServiceId,
        position: usize,
        backup: BackupId,
    },
}

/// How co-sharers' reliabilities enter the sharing probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityModel {
    /// Co-sharers contribute their primary reliability.
    #[default]
    OneShot,
    /// Jacobi iteration on the protected reliabilities until successive
    /// sweeps differ by at most [`FIXED_POINT_TOLERANCE`].
    FixedPoint,
    /// Every backup behaves as if owned by each of its members.
    Dedicated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub service: ServiceId,
    pub position: usize,
    pub primary_reliability: f64,
    pub mttr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingGroup {
    pub backup: BackupId,
    pub backup_reliability: f64,
    pub members: Vec<Member>,
}

impl SharingGroup {
    fn member_index(&self, service: ServiceId, position: usize) -> Result<usize, ReliabilityError> {
        self.members
            .iter()
            .position(|m| m.service == service && m.position == position)
            .ok_or(ReliabilityError::NotAMember {
                service,
                position,
                backup: self.backup,
            })
    }
}

fn check_probability(p: f64) -> Result<f64, ReliabilityError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ReliabilityError::Domain(p))
    }
}

/// `1 - (1 - r_primary)(1 - r_backup)`.
pub fn dp_reliability(r_primary: f64, r_backup: f64) -> Result<f64, ReliabilityError> {
    let (p, b) = (check_probability(r_primary)?, check_probability(r_backup)?);
    Ok(1.0 - (1.0 - p) * (1.0 - b))
}

/// Contention term for one member given the others' `(mttr, reliability)`.
pub fn phi(own_mttr: f64, others: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let loss: f64 = others
        .into_iter()
        .map(|(mttr, r)| mttr / (own_mttr + mttr) * (1.0 - r))
        .sum();
    (1.0 - loss).clamp(0.0, 1.0)
}

fn protect(r: f64, r_backup: f64, phi: f64) -> f64 {
    r + (1.0 - r) * r_backup * phi
}

pub fn sharing_probability(
    member: (ServiceId, usize),
    group: &SharingGroup,
) -> Result<f64, ReliabilityError> {
    let me = group.member_index(member.0, member.1)?;
    let own = &group.members[me];
    Ok(phi(
        own.mttr,
        group
            .members
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != me)
            .map(|(_, o)| (o.mttr, o.primary_reliability)),
    ))
}

pub fn sp_vnf_reliability(
    member: (ServiceId, usize),
    group: &SharingGroup,
) -> Result<f64, ReliabilityError> {
    let phi = sharing_probability(member, group)?;
    let me = &group.members[group.member_index(member.0, member.1)?];
    Ok(protect(
        me.primary_reliability,
        group.backup_reliability,
        phi,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub service_ids: Vec<ServiceId>,
    /// `per_vnf[s][j]`, services in request order.
    pub per_vnf: Vec<Vec<f64>>,
    pub per_service: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ReliabilityResult {
    pub fn service(&self, id: ServiceId) -> Option<f64> {
        let s = self.service_ids.iter().position(|&x| x == id)?;
        Some(self.per_service[s])
    }

    pub fn vnf(&self, id: ServiceId, position: usize) -> Option<f64> {
        let s = self.service_ids.iter().position(|&x| x == id)?;
        self.per_vnf[s].get(position).copied()
    }
}

pub fn solve_reliability(
    sol: &Solution,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
) -> Result<ReliabilityResult, Vec<ShapeViolation>> {
    solve_reliability_with(sol, net, reqs, ReliabilityModel::OneShot)
}

pub fn solve_reliability_with(
    sol: &Solution,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    model: ReliabilityModel,
) -> Result<ReliabilityResult, Vec<ShapeViolation>> {
    let index = SolutionIndex::build(sol, net, reqs)?;
    Ok(layout_reliability(&index.layout, net, reqs, model))
}

/// Per-VNF protected reliabilities for a layout. Hosts must exist in `net`.
pub fn layout_reliability(
    layout: &ProtectionLayout,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    model: ReliabilityModel,
) -> ReliabilityResult {
    let server = |id| net.server(id).expect("layout hosts exist");
    let primary: Vec<Vec<f64>> = layout
        .hosts
        .iter()
        .map(|c| c.iter().map(|&h| server(h).reliability).collect())
        .collect();
    let mttr: Vec<Vec<f64>> = layout
        .hosts
        .iter()
        .map(|c| c.iter().map(|&h| server(h).mttr).collect())
        .collect();
    let backup_r: Vec<f64> = layout
        .backups
        .iter()
        .map(|b| server(b.host).reliability)
        .collect();

    let sweep = |co: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = primary.clone();
        for (s, slots) in layout.protection.iter().enumerate() {
            for (j, list) in slots.iter().enumerate() {
                let mut r = primary[s][j];
                for &b in list {
                    let f = match model {
                        ReliabilityModel::Dedicated => 1.0,
                        _ => phi(
                            mttr[s][j],
                            layout.users[b]
                                .iter()
                                .filter(|&&u| u != (s, j))
                                .map(|&(t, k)| (mttr[t][k], co[t][k])),
                        ),
                    };
                    r = protect(r, backup_r[b], f);
                }
                out[s][j] = r;
            }
        }
        out
    };

    let mut per_vnf = sweep(&primary);
    let mut iterations = 1;
    let mut converged = true;
    if model == ReliabilityModel::FixedPoint {
        converged = false;
        while iterations < FIXED_POINT_MAX_SWEEPS {
            let next = sweep(&per_vnf);
            iterations += 1;
            let delta = next
                .iter()
                .flatten()
                .zip(per_vnf.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            per_vnf = next;
            if delta <= FIXED_POINT_TOLERANCE {
                converged = true;
                break;
            }
        }
    }
    let per_service = per_vnf.iter().map(|c| c.iter().product()).collect();
    ReliabilityResult {
        service_ids: reqs.iter().map(|r| r.id).collect(),
        per_vnf,
        per_service,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BackupVnf;
    use crate::testkit;
    use proptest::prelude::*;

    fn member(service: ServiceId, r: f64) -> Member {
        Member {
            service,
            position: 0,
            primary_reliability: r,
            mttr: 1.0,
        }
    }

    #[test]
    fn dedicated_formula() {
        assert!((dp_reliability(0.94, 0.92).unwrap() - 0.9952).abs() < 1e-12);
        assert_eq!(dp_reliability(1.0, 0.5).unwrap(), 1.0);
        assert_eq!(dp_reliability(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(dp_reliability(1.2, 0.5), Err(ReliabilityError::Domain(1.2)));
    }

    #[test]
    fn sharing_probability_cases() {
        let g = |ms: Vec<Member>| SharingGroup {
            backup: 0,
            backup_reliability: 0.94,
            members: ms,
        };
        assert_eq!(
            sharing_probability((1, 0), &g(vec![member(1, 0.9)])).unwrap(),
            1.0
        );
        let two = g(vec![member(1, 0.92), member(2, 0.92)]);
        assert!((sharing_probability((1, 0), &two).unwrap() - 0.96).abs() < 1e-12);
        assert!(
            (sp_vnf_reliability((1, 0), &two).unwrap() - (0.92 + 0.08 * 0.94 * 0.96)).abs() < 1e-12
        );
        let three = g(vec![member(1, 0.9), member(2, 0.9), member(3, 0.9)]);
        assert!((sharing_probability((2, 0), &three).unwrap() - 0.90).abs() < 1e-12);
        assert!(matches!(
            sharing_probability((9, 0), &three),
            Err(ReliabilityError::NotAMember { service: 9, .. })
        ));
    }

    #[test]
    fn single_member_equals_dedicated_and_useless_backup() {
        let solo = SharingGroup {
            backup: 0,
            backup_reliability: 0.94,
            members: vec![member(1, 0.92)],
        };
        assert!(
            (sp_vnf_reliability((1, 0), &solo).unwrap() - dp_reliability(0.92, 0.94).unwrap())
                .abs()
                < 1e-15
        );
        let dead = SharingGroup {
            backup_reliability: 0.0,
            ..solo
        };
        assert_eq!(sp_vnf_reliability((1, 0), &dead).unwrap(), 0.92);
    }

    #[test]
    fn phi_is_clamped() {
        let others = vec![(1.0, 0.1); 5];
        assert_eq!(phi(1.0, others), 0.0);
    }

    #[test]
    fn worked_example_layouts() {
        let ex = testkit::worked_example();
        let rel = |sol: &Solution| {
            solve_reliability(sol, &ex.scenario.network, &ex.scenario.services).unwrap()
        };
        let np = rel(&ex.np);
        assert!((np.per_service[0] - 0.830208).abs() < 1e-12);
        assert!((np.per_service[1] - 0.8832).abs() < 1e-12);
        let dp = rel(&ex.dp);
        assert!((dp.per_service[0] - 0.898).abs() < 1e-3);
        assert!((dp.per_service[1] - 0.955).abs() < 1e-3);
        let sp = rel(&ex.sp);
        assert!((sp.per_service[0] - 0.895).abs() < 1e-3);
        assert!((sp.per_service[1] - 0.932).abs() < 1e-2);
    }

    #[test]
    fn worked_example_with_literal_second_chain() {
        // Same shared layout but with the second chain's first VNF on the
        // 0.96 server it uses without protection.
        let ex = testkit::worked_example();
        let mut sol = ex.sp.clone();
        for p in &mut sol.placements {
            if p.service == 2 && p.position == 0 {
                p.server = 6;
            }
        }
        let r = solve_reliability(&sol, &ex.scenario.network, &ex.scenario.services).unwrap();
        assert!((r.per_service[1] - 0.96 * (0.92 + 0.08 * 0.94 * 0.96)).abs() < 1e-12);
        assert!((r.per_service[1] - 0.932).abs() > 0.01);
    }

    #[test]
    fn fixed_point_converges_and_lies_above_one_shot() {
        let ex = testkit::worked_example();
        let (net, reqs) = (&ex.scenario.network, &ex.scenario.services);
        let one = solve_reliability_with(&ex.sp, net, reqs, ReliabilityModel::OneShot).unwrap();
        let fp = solve_reliability_with(&ex.sp, net, reqs, ReliabilityModel::FixedPoint).unwrap();
        assert!(fp.converged && fp.iterations > 1 && fp.iterations < FIXED_POINT_MAX_SWEEPS);
        for (a, b) in fp
            .per_vnf
            .iter()
            .flatten()
            .zip(one.per_vnf.iter().flatten())
        {
            assert!(*a >= *b - 1e-15);
        }
        let ded = solve_reliability_with(&ex.sp, net, reqs, ReliabilityModel::Dedicated).unwrap();
        for (a, b) in ded
            .per_vnf
            .iter()
            .flatten()
            .zip(fp.per_vnf.iter().flatten())
        {
            assert!(*a >= *b - 1e-15);
        }
    }

    /// Random layouts on a 6-server pool: hosts, backup hosts and sharing.
    fn arb_layout() -> impl Strategy<Value = (ProtectionLayout, Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(0.5f64..1.0, 6),
            proptest::collection::vec(0.5f64..8.0, 6),
            proptest::collection::vec(proptest::collection::vec(0u32..6, 1..4), 1..4),
            proptest::collection::vec(0u32..6, 0..3),
            proptest::collection::vec((0usize..4, 0usize..4, 0usize..3), 0..8),
        )
            .prop_map(|(rel, mttr, hosts, bhosts, picks)| {
                let backups: Vec<BackupVnf> = bhosts
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| BackupVnf {
                        id: i as u32,
                        vnf_type: 0,
                        host: h,
                        cpu_reservation: 1.0,
                    })
                    .collect();
                let assigns: Vec<_> = if backups.is_empty() {
                    Vec::new()
                } else {
                    picks
                        .into_iter()
                        .map(|(s, j, b)| {
                            let s = s % hosts.len();
                            (s, j % hosts[s].len(), b % backups.len())
                        })
                        .collect()
                };
                (
                    ProtectionLayout::from_parts(hosts, backups, assigns),
                    rel,
                    mttr,
                )
            })
    }

    fn pool(rel: &[f64], mttr: &[f64]) -> (SubstrateNetwork, Vec<ServiceRequest>) {
        testkit::pool_network(rel, mttr)
    }

    fn requests(layout: &ProtectionLayout) -> Vec<ServiceRequest> {
        testkit::requests_for(&layout.hosts)
    }

    proptest! {
        #[test]
        fn bounds_hold((layout, rel, mttr) in arb_layout()) {
            let (net, _) = pool(&rel, &mttr);
            let reqs = requests(&layout);
            for model in [ReliabilityModel::OneShot, ReliabilityModel::FixedPoint] {
                let r = layout_reliability(&layout, &net, &reqs, model);
                for (s, slots) in layout.protection.iter().enumerate() {
                    for (j, list) in slots.iter().enumerate() {
                        let rp = rel[layout.hosts[s][j] as usize];
                        let upper = 1.0 - (1.0 - rp) * list
                            .iter()
                            .map(|&b| 1.0 - rel[layout.backups[b].host as usize])
                            .product::<f64>();
                        prop_assert!(r.per_vnf[s][j] >= rp - 1e-12);
                        prop_assert!(r.per_vnf[s][j] <= upper + 1e-12);
                    }
                    let prod: f64 = r.per_vnf[s].iter().product();
                    prop_assert_eq!(prod, r.per_service[s]);
                }
                let again = layout_reliability(&layout, &net, &reqs, model);
                prop_assert_eq!(&again, &r);
            }
        }

        #[test]
        fn new_backup_never_lowers_anything(
            (layout, rel, mttr) in arb_layout(),
            pick in (0usize..4, 0usize..4),
            host in 0u32..6,
        ) {
            let (net, _) = pool(&rel, &mttr);
            let reqs = requests(&layout);
            let before = layout_reliability(&layout, &net, &reqs, ReliabilityModel::OneShot);
            let s = pick.0 % layout.hosts.len();
            let j = pick.1 % layout.hosts[s].len();
            let mut backups = layout.backups.clone();
            let id = backups.len() as u32;
            backups.push(BackupVnf { id, vnf_type: 0, host, cpu_reservation: 1.0 });
            let mut assigns: Vec<_> = layout.users.iter().enumerate()
                .flat_map(|(b, us)| us.iter().map(move |&(s, j)| (s, j, b)))
                .collect();
            assigns.push((s, j, id as usize));
            let grown = ProtectionLayout::from_parts(layout.hosts.clone(), backups, assigns);
            let after = layout_reliability(&grown, &net, &reqs, ReliabilityModel::OneShot);
            for (a, b) in after.per_vnf.iter().flatten().zip(before.per_vnf.iter().flatten()) {
                prop_assert!(*a >= *b - 1e-12);
            }
        }

        #[test]
        fn joining_a_backup_never_lowers_the_joiner(
            (layout, rel, mttr) in arb_layout(),
            pick in (0usize..4, 0usize..4, 0usize..3),
        ) {
            prop_assume!(!layout.backups.is_empty());
            let (net, _) = pool(&rel, &mttr);
            let reqs = requests(&layout);
            let before = layout_reliability(&layout, &net, &reqs, ReliabilityModel::OneShot);
            let s = pick.0 % layout.hosts.len();
            let j = pick.1 % layout.hosts[s].len();
            let b = pick.2 % layout.backups.len();
            let mut assigns: Vec<_> = layout.users.iter().enumerate()
                .flat_map(|(b, us)| us.iter().map(move |&(s, j)| (s, j, b)))
                .collect();
            assigns.push((s, j, b));
            let grown = ProtectionLayout::from_parts(layout.hosts.clone(), layout.backups.clone(), assigns);
            let after = layout_reliability(&grown, &net, &reqs, ReliabilityModel::OneShot);
            prop_assert!(after.per_vnf[s][j] >= before.per_vnf[s][j] - 1e-12);
        }
    }
}
