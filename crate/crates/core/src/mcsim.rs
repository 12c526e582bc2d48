//! Monte Carlo failure injection.
//!
//! Each trial draws every server up independently with probability equal to
//! its reliability. A VNF is served when its host is up, or when one of its
//! backups is up and granted to it. Trials are split into fixed chunks; chunk
//! `c` draws from a ChaCha8 generator seeded with the run seed and switched
//! to stream `c`, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ProtectionLayout, ServiceId, ServiceRequest, ShapeViolation, Solution, SolutionIndex,
    SubstrateNetwork,
};

pub const CHUNK_TRIALS: u64 = 1 << 16;
/// Below this many trials no confidence interval is reported.
pub const MIN_TRIALS_FOR_INTERVAL: u64 = 100;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentionRule {
    /// A backup that several failed sharers want goes to one of them, picked
    /// with probability proportional to the sharer's own repair time.
    #[default]
    MttrWeighted,
    /// Every failed sharer gets the backup as if it were dedicated.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trials: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub contention_rule: ContentionRule,
}

#[derive(Debug, Error)]
pub enum McError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error("solution is not well formed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Shape(Vec<ShapeViolation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub probability: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub half_width: Option<f64>,
}

impl Estimate {
    fn new(successes: u64, trials: u64) -> Self {
        let p = successes as f64 / trials as f64;
        Self {
            probability: p,
            half_width: (trials >= MIN_TRIALS_FOR_INTERVAL)
                .then(|| Z95 * (p * (1.0 - p) / trials as f64).sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trials: u64,
    pub service_ids: Vec<ServiceId>,
    pub per_service: Vec<Estimate>,
    pub per_vnf: Vec<Vec<Estimate>>,
}

impl McReport {
    pub fn service(&self, id: ServiceId) -> Option<Estimate> {
        let s = self.service_ids.iter().position(|&x| x == id)?;
        Some(self.per_service[s])
    }
}

pub fn estimate_reliability(
    sol: &Solution,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    cfg: &TrialConfig,
) -> Result<McReport, McError> {
    let index = SolutionIndex::build(sol, net, reqs).map_err(McError::Shape)?;
    estimate_layout(&index.layout, net, reqs, cfg)
}

/// Like [`estimate_reliability`] but for a bare layout; routing plays no role
/// in failure injection.
pub fn estimate_layout(
    layout: &ProtectionLayout,
    net: &SubstrateNetwork,
    reqs: &[ServiceRequest],
    cfg: &TrialConfig,
) -> Result<McReport, McError> {
    if cfg.trials == 0 {
        return Err(McError::NoTrials);
    }
    let sim = Sim::new(layout, net);
    let chunks = cfg.trials.div_ceil(CHUNK_TRIALS);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK_TRIALS.min(cfg.trials - c * CHUNK_TRIALS);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(c);
            sim.run(&mut rng, n, cfg.contention_rule)
        })
        .reduce(|| sim.zero(), Counts::merge);
    Ok(McReport {
        trials: cfg.trials,
        service_ids: reqs.iter().map(|r| r.id).collect(),
        per_service: counts
            .service
            .iter()
            .map(|&k| Estimate::new(k, cfg.trials))
            .collect(),
        per_vnf: counts
            .vnf
            .iter()
            .map(|v| v.iter().map(|&k| Estimate::new(k, cfg.trials)).collect())
            .collect(),
    })
}

#[derive(Clone)]
struct Counts {
    service: Vec<u64>,
    vnf: Vec<Vec<u64>>,
}

impl Counts {
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.service.iter_mut().zip(&other.service) {
            *a += b;
        }
        for (va, vb) in self.vnf.iter_mut().zip(&other.vnf) {
            for (a, b) in va.iter_mut().zip(vb) {
                *a += b;
            }
        }
        self
    }
}

struct Sim<'a> {
    layout: &'a ProtectionLayout,
    theta: Vec<f64>,
    /// Server slot of every primary and of every backup.
    primary_slot: Vec<Vec<usize>>,
    backup_slot: Vec<usize>,
    /// Repair time of each primary's host.
    mttr: Vec<Vec<f64>>,
}

impl<'a> Sim<'a> {
    fn new(layout: &'a ProtectionLayout, net: &SubstrateNetwork) -> Self {
        let slot = |h| net.slot(h).expect("validated host");
        Self {
            layout,
            theta: net.servers().iter().map(|s| s.reliability).collect(),
            primary_slot: layout
                .hosts
                .iter()
                .map(|c| c.iter().map(|&h| slot(h)).collect())
                .collect(),
            backup_slot: layout.backups.iter().map(|b| slot(b.host)).collect(),
            mttr: layout
                .hosts
                .iter()
                .map(|c| c.iter().map(|&h| net.servers()[slot(h)].mttr).collect())
                .collect(),
        }
    }

    fn zero(&self) -> Counts {
        Counts {
            service: vec![0; self.layout.hosts.len()],
            vnf: self.layout.hosts.iter().map(|c| vec![0; c.len()]).collect(),
        }
    }

    fn run(&self, rng: &mut ChaCha8Rng, trials: u64, rule: ContentionRule) -> Counts {
        let mut counts = self.zero();
        let mut up = vec![false; self.theta.len()];
        let mut served: Vec<Vec<bool>> = self
            .layout
            .hosts
            .iter()
            .map(|c| vec![false; c.len()])
            .collect();
        let mut waiting: Vec<(usize, usize)> = Vec::new();
        for _ in 0..trials {
            for (u, &t) in up.iter_mut().zip(&self.theta) {
                *u = rng.gen::<f64>() < t;
            }
            for (s, row) in served.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = up[self.primary_slot[s][j]];
                }
            }
            // backups are handed out in ascending index order
            for (b, users) in self.layout.users.iter().enumerate() {
                if !up[self.backup_slot[b]] {
                    continue;
                }
                waiting.clear();
                waiting.extend(users.iter().copied().filter(|&(s, j)| !served[s][j]));
                match (rule, waiting.len()) {
                    (_, 0) => {}
                    (ContentionRule::Disabled, _) => {
                        for &(s, j) in &waiting {
                            served[s][j] = true;
                        }
                    }
                    (ContentionRule::MttrWeighted, 1) => served[waiting[0].0][waiting[0].1] = true,
                    (ContentionRule::MttrWeighted, _) => {
                        let total: f64 = waiting.iter().map(|&(s, j)| self.mttr[s][j]).sum();
                        let mut x = rng.gen::<f64>() * total;
                        let mut pick = *waiting.last().unwrap();
                        for &(s, j) in &waiting {
                            x -= self.mttr[s][j];
                            if x < 0.0 {
                                pick = (s, j);
                                break;
                            }
                        }
                        served[pick.0][pick.1] = true;
                    }
                }
            }
            for (s, row) in served.iter().enumerate() {
                let mut all = true;
                for (j, &v) in row.iter().enumerate() {
                    counts.vnf[s][j] += v as u64;
                    all &= v;
                }
                counts.service[s] += all as u64;
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BackupVnf;
    use crate::reliability::{layout_reliability, ReliabilityModel};
    use crate::testkit::{pool_network, requests_for};

    fn cfg(trials: u64, rule: ContentionRule) -> TrialConfig {
        TrialConfig {
            trials,
            rng_seed: 5,
            contention_rule: rule,
        }
    }

    fn backup(id: u32, host: u32) -> BackupVnf {
        BackupVnf {
            id,
            vnf_type: 0,
            host,
            cpu_reservation: 1.0,
        }
    }

    #[test]
    fn bare_vnf_is_bernoulli() {
        let (net, _) = pool_network(&[0.92], &[1.0]);
        let hosts = vec![vec![0]];
        let reqs = requests_for(&hosts);
        let layout = ProtectionLayout::unprotected(hosts);
        let r = estimate_layout(
            &layout,
            &net,
            &reqs,
            &cfg(1_000_000, ContentionRule::MttrWeighted),
        )
        .unwrap();
        let e = r.per_service[0];
        assert!((e.probability - 0.92).abs() < 0.002);
        assert!((e.half_width.unwrap() - 0.00053).abs() < 0.00002);
    }

    #[test]
    fn two_sharers_match_the_analytic_value() {
        let (net, _) = pool_network(&[0.92, 0.92, 0.94], &[3.0; 3]);
        let hosts = vec![vec![0], vec![1]];
        let reqs = requests_for(&hosts);
        let layout =
            ProtectionLayout::from_parts(hosts, vec![backup(0, 2)], [(0, 0, 0), (1, 0, 0)]);
        let analytic = layout_reliability(&layout, &net, &reqs, ReliabilityModel::OneShot);
        assert!((analytic.per_vnf[0][0] - 0.992192).abs() < 1e-6);
        let mc = estimate_layout(
            &layout,
            &net,
            &reqs,
            &cfg(1_000_000, ContentionRule::MttrWeighted),
        )
        .unwrap();
        for s in 0..2 {
            assert!((mc.per_vnf[s][0].probability - analytic.per_vnf[s][0]).abs() < 0.005);
        }
        let free = estimate_layout(
            &layout,
            &net,
            &reqs,
            &cfg(1_000_000, ContentionRule::Disabled),
        )
        .unwrap();
        assert!((free.per_vnf[0][0].probability - 0.9952).abs() < 0.001);
    }

    #[test]
    fn seeded_and_small_runs() {
        let (net, _) = pool_network(&[0.9, 0.95], &[2.0; 2]);
        let hosts = vec![vec![0]];
        let reqs = requests_for(&hosts);
        let layout = ProtectionLayout::from_parts(hosts, vec![backup(0, 1)], [(0, 0, 0)]);
        let c = cfg(200_000, ContentionRule::MttrWeighted);
        let a = estimate_layout(&layout, &net, &reqs, &c).unwrap();
        let b = estimate_layout(&layout, &net, &reqs, &c).unwrap();
        assert_eq!(a, b);
        let tiny =
            estimate_layout(&layout, &net, &reqs, &cfg(99, ContentionRule::MttrWeighted)).unwrap();
        assert!(tiny.per_service[0].half_width.is_none());
        assert!(matches!(
            estimate_layout(&layout, &net, &reqs, &cfg(0, ContentionRule::MttrWeighted)),
            Err(McError::NoTrials)
        ));
    }
}
