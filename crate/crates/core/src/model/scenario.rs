use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ModelError, Server, ServerId, ServiceId, ServiceRequest, SubstrateNetwork, TypeId,
    UndirectedLink, VnfSpec,
};

/// A validated problem instance: the substrate plus the batch of requests.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: SubstrateNetwork,
    pub services: Vec<ServiceRequest>,
    pub vnf_types: Vec<TypeId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    servers: Vec<Server>,
    links: Vec<UndirectedLink>,
    services: Vec<ServiceRecord>,
    vnf_types: Vec<TypeId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceRecord {
    id: ServiceId,
    source: ServerId,
    destination: ServerId,
    chain: Vec<ChainRecord>,
    bandwidth: f64,
    max_delay: f64,
    min_reliability: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainRecord {
    #[serde(rename = "type")]
    vnf_type: TypeId,
    cpu: f64,
}

impl Scenario {
    pub fn new(
        network: SubstrateNetwork,
        services: Vec<ServiceRequest>,
        vnf_types: Vec<TypeId>,
    ) -> Result<Self, ModelError> {
        let types: HashSet<TypeId> = vnf_types.iter().copied().collect();
        let mut ids = HashSet::new();
        for s in &services {
            if !ids.insert(s.id) {
                return Err(ModelError::DuplicateId {
                    kind: "service",
                    id: s.id as u64,
                });
            }
            validate_service(s, &network, &types)?;
        }
        Ok(Self {
            network,
            services,
            vnf_types,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let network = SubstrateNetwork::from_undirected(file.servers, &file.links)?;
        let services = file
            .services
            .into_iter()
            .map(|r| ServiceRequest {
                id: r.id,
                source: r.source,
                destination: r.destination,
                chain: r
                    .chain
                    .into_iter()
                    .map(|c| VnfSpec {
                        vnf_type: c.vnf_type,
                        cpu_demand: c.cpu,
                    })
                    .collect(),
                bandwidth: r.bandwidth,
                max_delay: r.max_delay,
                min_reliability: r.min_reliability,
            })
            .collect();
        Self::new(network, services, file.vnf_types)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            servers: self.network.servers().to_vec(),
            links: self.network.undirected_links(),
            services: self
                .services
                .iter()
                .map(|s| ServiceRecord {
                    id: s.id,
                    source: s.source,
                    destination: s.destination,
                    chain: s
                        .chain
                        .iter()
                        .map(|v| ChainRecord {
                            vnf_type: v.vnf_type,
                            cpu: v.cpu_demand,
                        })
                        .collect(),
                    bandwidth: s.bandwidth,
                    max_delay: s.max_delay,
                    min_reliability: s.min_reliability,
                })
                .collect(),
            vnf_types: self.vnf_types.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    /// The same substrate with only the first `n` services.
    pub fn with_service_count(&self, n: usize) -> Self {
        Self {
            network: self.network.clone(),
            services: self.services.iter().take(n).cloned().collect(),
            vnf_types: self.vnf_types.clone(),
        }
    }

    pub fn primary_count(&self) -> usize {
        self.services.iter().map(|s| s.len()).sum()
    }
}

fn validate_service(
    s: &ServiceRequest,
    net: &SubstrateNetwork,
    types: &HashSet<TypeId>,
) -> Result<(), ModelError> {
    let bad = |reason: String| ModelError::InvalidService { id: s.id, reason };
    if s.chain.is_empty() {
        return Err(bad("empty chain".into()));
    }
    if !(s.min_reliability > 0.0 && s.min_reliability < 1.0) {
        return Err(bad(format!(
            "min_reliability {} outside (0, 1)",
            s.min_reliability
        )));
    }
    if !(s.max_delay > 0.0) {
        return Err(bad(format!("max_delay {} must be positive", s.max_delay)));
    }
    if !(s.bandwidth > 0.0 && s.bandwidth.is_finite()) {
        return Err(bad(format!("bandwidth {} must be positive", s.bandwidth)));
    }
    for end in [s.source, s.destination] {
        if net.server(end).is_none() {
            return Err(bad(format!("unknown server {end}")));
        }
    }
    for (j, vnf) in s.chain.iter().enumerate() {
        if !types.contains(&vnf.vnf_type) {
            return Err(bad(format!(
                "position {j}: type {} not in vnf_types",
                vnf.vnf_type
            )));
        }
        if !(vnf.cpu_demand > 0.0 && vnf.cpu_demand.is_finite()) {
            return Err(bad(format!(
                "position {j}: cpu demand {} must be positive",
                vnf.cpu_demand
            )));
        }
    }
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, scenario.to_json()).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}
