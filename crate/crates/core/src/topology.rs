//! Zones, firewalls and the routes between zones.
//!
//! A path is a sequence of distinct, linked firewalls. A route from `z1` to
//! `z2` is a path whose first firewall borders `z1` and whose last firewall
//! borders `z2`. A route is minimal when no other route is both shorter and
//! made only of firewalls it already crosses.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::model::{AttributeSet, DomainConfig, DomainKind, FilteringRule};

/// A named block of addresses behind one or more firewalls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Zone {
    pub name: String,
    pub addresses: AttributeSet,
}

/// A firewall as a node of the topology graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FirewallNode {
    pub name: String,
    pub adjacent_zones: BTreeSet<String>,
    pub links: BTreeSet<String>,
}

/// A firewall's configuration: its name and its first-match rule list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firewall {
    pub name: String,
    pub rules: Vec<FilteringRule>,
}

impl Firewall {
    pub fn new(name: impl Into<String>, rules: Vec<FilteringRule>) -> Self {
        Firewall {
            name: name.into(),
            rules,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub domain: DomainConfig,
    pub zones: Vec<Zone>,
    pub firewalls: Vec<FirewallNode>,
}

/// An ordered sequence of distinct firewall names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Path(Vec<String>);

impl Path {
    /// Panics on an empty sequence.
    pub fn new(firewalls: Vec<String>) -> Self {
        assert!(!firewalls.is_empty(), "a path crosses at least one firewall");
        Path(firewalls)
    }

    pub fn firewalls(&self) -> &[String] {
        &self.0
    }

    pub fn first(&self) -> &str {
        &self.0[0]
    }

    pub fn last(&self) -> &str {
        &self.0[self.0.len() - 1]
    }

    /// Firewalls after `fw`; empty when `fw` is last or not on the path.
    pub fn tail(&self, fw: &str) -> &[String] {
        match self.position(fw) {
            Some(i) => &self.0[i + 1..],
            None => &[],
        }
    }

    pub fn position(&self, fw: &str) -> Option<usize> {
        self.0.iter().position(|f| f == fw)
    }

    pub fn contains(&self, fw: &str) -> bool {
        self.position(fw).is_some()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The path order: strictly shorter, and every firewall also on `other`.
    pub fn is_smaller_than(&self, other: &Path) -> bool {
        self.len() < other.len() && self.0.iter().all(|f| other.contains(f))
    }

    pub fn reversed(&self) -> Path {
        Path(self.0.iter().rev().cloned().collect())
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyIssue {
    #[error("zone {zone} is declared more than once")]
    DuplicateZone { zone: String },
    #[error("firewall {firewall} is declared more than once")]
    DuplicateFirewall { firewall: String },
    #[error("zone {zone} has no addresses")]
    EmptyZone { zone: String },
    #[error("zone {zone} uses a different address domain than the topology")]
    ZoneDomain { zone: String },
    #[error("zones {first} and {second} overlap on {overlap}")]
    ZoneOverlap {
        first: String,
        second: String,
        overlap: String,
    },
    #[error("firewall {firewall} is adjacent to unknown zone {zone}")]
    UnknownZone { firewall: String, zone: String },
    #[error("firewall {firewall} links to unknown firewall {link}")]
    UnknownLink { firewall: String, link: String },
    #[error("firewall {firewall} links to itself")]
    SelfLink { firewall: String },
    #[error("firewall {from} links to {to} but {to} does not link back")]
    AsymmetricLink { from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("no route from zone {from} to zone {to}")]
    NoRoute { from: String, to: String },
    #[error("zones {from} and {to} have {} incomparable minimal routes", routes.len())]
    AmbiguousRoute {
        from: String,
        to: String,
        routes: Vec<Path>,
    },
}

impl Topology {
    pub fn zone(&self, name: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.name == name)
    }

    pub fn zone_index(&self, name: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.name == name)
    }

    pub fn firewall(&self, name: &str) -> Option<&FirewallNode> {
        self.firewalls.iter().find(|f| f.name == name)
    }

    pub fn firewall_index(&self, name: &str) -> Option<usize> {
        self.firewalls.iter().position(|f| f.name == name)
    }

    /// Lists every structural problem. An empty result means the topology
    /// is usable.
    pub fn validate(&self) -> Vec<TopologyIssue> {
        let mut issues = Vec::new();
        let address_domain = self.domain.domain(DomainKind::Address);

        let mut seen = BTreeSet::new();
        for z in &self.zones {
            if !seen.insert(z.name.as_str()) {
                issues.push(TopologyIssue::DuplicateZone { zone: z.name.clone() });
            }
            if z.addresses.domain() != address_domain {
                issues.push(TopologyIssue::ZoneDomain { zone: z.name.clone() });
            } else if z.addresses.is_empty() {
                issues.push(TopologyIssue::EmptyZone { zone: z.name.clone() });
            }
        }
        for (i, a) in self.zones.iter().enumerate() {
            for b in &self.zones[i + 1..] {
                if let Ok(overlap) = a.addresses.intersect(&b.addresses) {
                    if !overlap.is_empty() {
                        issues.push(TopologyIssue::ZoneOverlap {
                            first: a.name.clone(),
                            second: b.name.clone(),
                            overlap: overlap.to_string(),
                        });
                    }
                }
            }
        }

        let mut seen = BTreeSet::new();
        for f in &self.firewalls {
            if !seen.insert(f.name.as_str()) {
                issues.push(TopologyIssue::DuplicateFirewall {
                    firewall: f.name.clone(),
                });
            }
            for z in &f.adjacent_zones {
                if self.zone(z).is_none() {
                    issues.push(TopologyIssue::UnknownZone {
                        firewall: f.name.clone(),
                        zone: z.clone(),
                    });
                }
            }
            for l in &f.links {
                if *l == f.name {
                    issues.push(TopologyIssue::SelfLink {
                        firewall: f.name.clone(),
                    });
                    continue;
                }
                match self.firewall(l) {
                    None => issues.push(TopologyIssue::UnknownLink {
                        firewall: f.name.clone(),
                        link: l.clone(),
                    }),
                    Some(other) if !other.links.contains(&f.name) => {
                        issues.push(TopologyIssue::AsymmetricLink {
                            from: f.name.clone(),
                            to: l.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        issues
    }

    fn neighbours(&self) -> Vec<Vec<usize>> {
        self.firewalls
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut n: Vec<usize> = f
                    .links
                    .iter()
                    .filter_map(|l| self.firewall_index(l))
                    .filter(|&j| j != i)
                    .collect();
                n.sort_unstable();
                n
            })
            .collect()
    }

    /// Every route from `z1` to `z2`, shortest first.
    ///
    /// Enumerates simple paths depth-first from each firewall bordering
    /// `z1`; exponential in the worst case, which is fine for the handful of
    /// firewalls a real site puts between two zones.
    pub fn routes(&self, z1: &str, z2: &str) -> Vec<Path> {
        let adjacent = |i: usize, z: &str| self.firewalls[i].adjacent_zones.contains(z);
        let next = self.neighbours();
        let mut found: Vec<Vec<usize>> = Vec::new();
        let mut stack = Vec::new();
        let mut on_path = vec![false; self.firewalls.len()];

        fn walk(
            at: usize,
            stack: &mut Vec<usize>,
            on_path: &mut [bool],
            next: &[Vec<usize>],
            ends: &dyn Fn(usize) -> bool,
            found: &mut Vec<Vec<usize>>,
        ) {
            stack.push(at);
            on_path[at] = true;
            if ends(at) {
                found.push(stack.clone());
            }
            for &n in &next[at] {
                if !on_path[n] {
                    walk(n, stack, on_path, next, ends, found);
                }
            }
            on_path[at] = false;
            stack.pop();
        }

        let ends = |i: usize| adjacent(i, z2);
        for start in (0..self.firewalls.len()).filter(|&i| adjacent(i, z1)) {
            walk(start, &mut stack, &mut on_path, &next, &ends, &mut found);
        }
        found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        found
            .into_iter()
            .map(|p| Path(p.into_iter().map(|i| self.firewalls[i].name.clone()).collect()))
            .collect()
    }

    /// Routes from `z1` to `z2` with no strictly smaller route.
    pub fn minimal_routes(&self, z1: &str, z2: &str) -> Vec<Path> {
        let all = self.routes(z1, z2);
        all.iter()
            .filter(|p| !all.iter().any(|q| q.is_smaller_than(p)))
            .cloned()
            .collect()
    }

    /// The minimal route from `z1` to `z2`, which must be unique.
    pub fn unique_minimal_route(&self, z1: &str, z2: &str) -> Result<Path, RouteError> {
        let mut minimal = self.minimal_routes(z1, z2);
        match minimal.len() {
            0 => Err(RouteError::NoRoute {
                from: z1.to_owned(),
                to: z2.to_owned(),
            }),
            1 => Ok(minimal.remove(0)),
            _ => Err(RouteError::AmbiguousRoute {
                from: z1.to_owned(),
                to: z2.to_owned(),
                routes: minimal,
            }),
        }
    }

    /// Indices of the zones sharing at least one address with `set`.
    pub fn zones_intersecting(&self, set: &AttributeSet) -> Vec<usize> {
        self.zones
            .iter()
            .enumerate()
            .filter(|(_, z)| z.addresses.intersects(set).unwrap_or(false))
            .map(|(i, _)| i)
            .collect()
    }

    /// The part of `set` that lies in no zone.
    pub fn uncovered(&self, set: &AttributeSet) -> AttributeSet {
        self.zones.iter().fold(set.clone(), |rest, z| {
            rest.difference(&z.addresses).unwrap_or(rest)
        })
    }

    pub fn zone_of(&self, address: u32) -> Option<usize> {
        self.zones.iter().position(|z| z.addresses.contains(address))
    }
}

/// Memoized unique minimal routes, keyed by zone indices.
#[derive(Debug)]
pub struct RouteTable<'t> {
    topology: &'t Topology,
    cache: HashMap<(usize, usize), Result<Path, RouteError>>,
}

impl<'t> RouteTable<'t> {
    pub fn new(topology: &'t Topology) -> Self {
        RouteTable {
            topology,
            cache: HashMap::new(),
        }
    }

    /// Computes every ordered pair of distinct zones up front.
    pub fn precomputed(topology: &'t Topology) -> Self {
        let mut table = Self::new(topology);
        let n = topology.zones.len();
        for a in 0..n {
            for b in (0..n).filter(|&b| b != a) {
                let _ = table.get(a, b);
            }
        }
        table
    }

    pub fn get(&mut self, z1: usize, z2: usize) -> Result<&Path, RouteError> {
        let topo = self.topology;
        self.cache
            .entry((z1, z2))
            .or_insert_with(|| {
                topo.unique_minimal_route(&topo.zones[z1].name, &topo.zones[z2].name)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Lookup without computing; `None` when the pair was never requested.
    pub fn cached(&self, z1: usize, z2: usize) -> Option<Result<&Path, &RouteError>> {
        self.cache.get(&(z1, z2)).map(Result::as_ref)
    }
}
