use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{check_version, from_json, render, resolve, DomainField, Item, ParseError, SCHEMA_VERSION};
use crate::model::DomainKind;
use crate::topology::{FirewallNode, Topology, TopologyIssue, Zone};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyLoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    /// The document parsed but describes an unusable network.
    #[error("invalid topology: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<TopologyIssue>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawZone {
    name: String,
    addresses: Vec<Item>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFirewall {
    name: String,
    adjacent_zones: Vec<String>,
    #[serde(default)]
    links: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    version: u32,
    #[serde(default)]
    domain: DomainField,
    zones: Vec<RawZone>,
    firewalls: Vec<RawFirewall>,
}

/// Parses and validates a topology document.
pub fn parse_topology(bytes: &[u8]) -> Result<Topology, TopologyLoadError> {
    let raw: RawTopology = from_json(bytes)?;
    check_version(raw.version)?;
    let domain = raw.domain.0;
    let address = domain.domain(DomainKind::Address);
    let mut zones = Vec::with_capacity(raw.zones.len());
    for (i, z) in raw.zones.into_iter().enumerate() {
        let addresses = resolve(&z.addresses, address, &format!("zones[{i}].addresses"))?;
        zones.push(Zone { name: z.name, addresses });
    }
    let firewalls = raw
        .firewalls
        .into_iter()
        .map(|f| FirewallNode {
            name: f.name,
            adjacent_zones: f.adjacent_zones.into_iter().collect(),
            links: f.links.into_iter().collect(),
        })
        .collect();
    let topology = Topology { domain, zones, firewalls };
    let issues = topology.validate();
    if !issues.is_empty() {
        return Err(TopologyLoadError::Invalid(issues));
    }
    Ok(topology)
}

pub fn serialize_topology(t: &Topology) -> Vec<u8> {
    let production = t.domain.is_production();
    let list = |set: &BTreeSet<String>| set.iter().cloned().collect::<Vec<_>>();
    let zones: Vec<String> = t
        .zones
        .iter()
        .map(|z| {
            serde_json::to_string(&RawZone {
                name: z.name.clone(),
                addresses: render(&z.addresses, production),
            })
            .expect("zone serializes")
        })
        .collect();
    let firewalls: Vec<String> = t
        .firewalls
        .iter()
        .map(|f| {
            serde_json::to_string(&RawFirewall {
                name: f.name.clone(),
                adjacent_zones: list(&f.adjacent_zones),
                links: list(&f.links),
            })
            .expect("firewall serializes")
        })
        .collect();
    let block = |items: &[String]| {
        if items.is_empty() {
            "[]".to_string()
        } else {
            format!("[\n    {}\n  ]", items.join(",\n    "))
        }
    };
    format!(
        "{{\n  \"version\": {SCHEMA_VERSION},\n  \"domain\": {},\n  \"zones\": {},\n  \"firewalls\": {}\n}}\n",
        serde_json::to_string(&DomainField(t.domain)).expect("domain serializes"),
        block(&zones),
        block(&firewalls),
    )
    .into_bytes()
}
