//! Brute-force packet semantics.
//!
//! Nothing here shares logic with the rewriting or aggregation code beyond
//! single-packet matching, so it can be used to check them. Every decision
//! defaults to deny when no rule matches.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{Decision, DomainConfig, FilteringRule, Packet};
use crate::topology::{Firewall, RouteError, Topology};

/// Decision of the first matching rule, `None` when nothing matches.
pub fn eval_first_match(rules: &[FilteringRule], pkt: &Packet) -> Option<Decision> {
    rules.iter().find(|r| r.matches(pkt)).map(|r| r.decision)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnyMatch {
    Decision(Decision),
    NoMatch,
    /// Two matching rules disagree.
    Conflict,
}

/// Order-free evaluation, meant for rule sets whose rules are disjoint.
pub fn eval_any_match(rules: &[FilteringRule], pkt: &Packet) -> AnyMatch {
    let mut seen = None;
    for r in rules.iter().filter(|r| r.matches(pkt)) {
        match seen {
            None => seen = Some(r.decision),
            Some(d) if d != r.decision => return AnyMatch::Conflict,
            Some(_) => {}
        }
    }
    seen.map_or(AnyMatch::NoMatch, AnyMatch::Decision)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndToEnd {
    Accept,
    Deny,
    /// Source or destination is outside every zone, or both share a zone.
    NotApplicable,
}

impl fmt::Display for EndToEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndToEnd::Accept => "accept",
            EndToEnd::Deny => "deny",
            EndToEnd::NotApplicable => "not_applicable",
        })
    }
}

/// What the network does with `pkt`: accepted only if every firewall on the
/// minimal route between the packet's zones accepts it.
pub fn eval_end_to_end(firewalls: &[Firewall], topology: &Topology, pkt: &Packet) -> Result<EndToEnd, RouteError> {
    let (Some(z1), Some(z2)) = (topology.zone_of(pkt.src_addr), topology.zone_of(pkt.dst_addr)) else {
        return Ok(EndToEnd::NotApplicable);
    };
    if z1 == z2 {
        return Ok(EndToEnd::NotApplicable);
    }
    let route = topology.unique_minimal_route(&topology.zones[z1].name, &topology.zones[z2].name)?;
    let accepted = route.firewalls().iter().all(|name| {
        firewalls
            .iter()
            .find(|f| &f.name == name)
            .and_then(|f| eval_first_match(&f.rules, pkt))
            == Some(Decision::Accept)
    });
    Ok(if accepted { EndToEnd::Accept } else { EndToEnd::Deny })
}

/// Rule lists of the firewalls on one route, in order.
type Hops<'a> = Result<Vec<&'a [FilteringRule]>, RouteError>;

/// [`eval_end_to_end`] with every zone pair's route resolved up front.
pub struct EndToEndEvaluator<'a> {
    topology: &'a Topology,
    routes: HashMap<(usize, usize), Hops<'a>>,
}

impl<'a> EndToEndEvaluator<'a> {
    pub fn new(firewalls: &'a [Firewall], topology: &'a Topology) -> Self {
        let rules_of = |name: &str| -> &'a [FilteringRule] {
            firewalls
                .iter()
                .find(|f| f.name == name)
                .map_or(&[][..], |f| f.rules.as_slice())
        };
        let n = topology.zones.len();
        let mut routes = HashMap::new();
        for a in 0..n {
            for b in (0..n).filter(|&b| b != a) {
                let route = topology
                    .unique_minimal_route(&topology.zones[a].name, &topology.zones[b].name)
                    .map(|p| p.firewalls().iter().map(|f| rules_of(f)).collect());
                routes.insert((a, b), route);
            }
        }
        EndToEndEvaluator { topology, routes }
    }

    pub fn eval(&self, pkt: &Packet) -> Result<EndToEnd, RouteError> {
        let t = self.topology;
        let (Some(z1), Some(z2)) = (t.zone_of(pkt.src_addr), t.zone_of(pkt.dst_addr)) else {
            return Ok(EndToEnd::NotApplicable);
        };
        if z1 == z2 {
            return Ok(EndToEnd::NotApplicable);
        }
        let hops = self.routes[&(z1, z2)].as_ref().map_err(Clone::clone)?;
        let accepted = hops
            .iter()
            .all(|rules| eval_first_match(rules, pkt) == Some(Decision::Accept));
        Ok(if accepted { EndToEnd::Accept } else { EndToEnd::Deny })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matching rules disagree on {0:?}")]
pub struct Conflict(pub Packet);

/// A global policy read the same way as [`eval_end_to_end`]: any-match with
/// default deny, restricted to packets crossing between two distinct zones.
pub fn eval_global(rules: &[FilteringRule], topology: &Topology, pkt: &Packet) -> Result<EndToEnd, Conflict> {
    let (Some(z1), Some(z2)) = (topology.zone_of(pkt.src_addr), topology.zone_of(pkt.dst_addr)) else {
        return Ok(EndToEnd::NotApplicable);
    };
    if z1 == z2 {
        return Ok(EndToEnd::NotApplicable);
    }
    match eval_any_match(rules, pkt) {
        AnyMatch::Decision(Decision::Accept) => Ok(EndToEnd::Accept),
        AnyMatch::Decision(Decision::Deny) | AnyMatch::NoMatch => Ok(EndToEnd::Deny),
        AnyMatch::Conflict => Err(Conflict(*pkt)),
    }
}

/// Bounds of an enumerable packet space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaledDomainConfig {
    pub protocol_max: u32,
    pub address_max: u32,
    pub port_max: u32,
    /// Largest packet space [`check_equivalence`] agrees to enumerate.
    pub cap: u64,
}

impl Default for ScaledDomainConfig {
    fn default() -> Self {
        ScaledDomainConfig {
            protocol_max: 2,
            address_max: 31,
            port_max: 15,
            cap: 1_000_000,
        }
    }
}

impl ScaledDomainConfig {
    pub fn new(protocol_max: u32, address_max: u32, port_max: u32) -> Self {
        ScaledDomainConfig {
            protocol_max,
            address_max,
            port_max,
            ..Default::default()
        }
    }

    pub fn domain(&self) -> DomainConfig {
        DomainConfig::scaled(self.protocol_max, self.address_max, self.port_max)
    }

    pub fn packet_count(&self) -> u128 {
        self.domain().packet_space()
    }

    /// The `index`-th packet in lexicographic (protocol, src, sport, dst,
    /// dport) order.
    pub fn packet(&self, index: u64) -> Packet {
        let a = self.address_max as u64 + 1;
        let p = self.port_max as u64 + 1;
        let mut i = index;
        let dst_port = (i % p) as u32;
        i /= p;
        let dst_addr = (i % a) as u32;
        i /= a;
        let src_port = (i % p) as u32;
        i /= p;
        let src_addr = (i % a) as u32;
        i /= a;
        Packet::new(i as u32, src_addr, src_port, dst_addr, dst_port)
    }

    /// Every packet of the space, in lexicographic order.
    pub fn packets(&self) -> Result<impl Iterator<Item = Packet> + '_, SpaceTooLarge> {
        let n = self.checked_count()?;
        Ok((0..n).map(move |i| self.packet(i)))
    }

    fn checked_count(&self) -> Result<u64, SpaceTooLarge> {
        let n = self.packet_count();
        if n > self.cap as u128 {
            return Err(SpaceTooLarge { size: n, cap: self.cap });
        }
        Ok(n as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("packet space of {size} exceeds the enumeration cap of {cap}")]
pub struct SpaceTooLarge {
    pub size: u128,
    pub cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    /// The lexicographically smallest packet on which the two sides differ.
    Counterexample(Packet),
}

impl Equivalence {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Equivalence::Equivalent)
    }
}

/// Compares two evaluators on every packet of `cfg`.
///
/// The space is split across threads; the reported counterexample is always
/// the smallest one, so the answer does not depend on scheduling.
pub fn check_equivalence<T, L, R>(lhs: L, rhs: R, cfg: &ScaledDomainConfig) -> Result<Equivalence, SpaceTooLarge>
where
    T: PartialEq,
    L: Fn(&Packet) -> T + Sync,
    R: Fn(&Packet) -> T + Sync,
{
    let n = cfg.checked_count()?;
    let found = (0..n).into_par_iter().find_first(|&i| {
        let p = cfg.packet(i);
        lhs(&p) != rhs(&p)
    });
    Ok(match found {
        Some(i) => Equivalence::Counterexample(cfg.packet(i)),
        None => Equivalence::Equivalent,
    })
}
