//! Folding several firewall configurations into one global policy.
//!
//! Every firewall is first rewritten on its own. Then each remaining rule is
//! expanded into the zone pairs its addresses touch, and for each pair it is
//! checked against the other firewalls on the pair's minimal route:
//!
//! * a permission collects every correlated permission along the route into
//!   the global policy, unless some firewall on the route denies part of the
//!   same traffic;
//! * a prohibition is kept only on the first firewall of the route, and only
//!   if nothing further down the route touches the same traffic.
//!
//! Anything else is an inter-firewall anomaly and aborts the fold. The
//! collected rules are rewritten once more so the global policy is disjoint.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::error::InputError;
use crate::model::{Attribute, Decision, FilteringRule, RuleId};
use crate::rewrite::{policy_rewriting, test_redundancy, RewriteReport};
use crate::topology::{Firewall, RouteError, RouteTable, Topology};

/// Scope used for the ids of global policy rules.
pub const GLOBAL_SCOPE: &str = "global";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Irrelevance,
    Misconnection,
    Shadowing,
    Redundancy,
    UnzonedAddress,
    NoRoute,
    AmbiguousRoute,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::Irrelevance => "irrelevance",
            AnomalyKind::Misconnection => "misconnection",
            AnomalyKind::Shadowing => "shadowing",
            AnomalyKind::Redundancy => "redundancy",
            AnomalyKind::UnzonedAddress => "unzoned_address",
            AnomalyKind::NoRoute => "no_route",
            AnomalyKind::AmbiguousRoute => "ambiguous_route",
        })
    }
}

/// One inter-firewall finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct AggregationError {
    pub kind: AnomalyKind,
    pub firewall: String,
    pub rule: RuleId,
    /// `(source zone, destination zone)`; absent for unzoned addresses.
    pub zone_pair: Option<(String, String)>,
    /// Rules on other firewalls that conflict with `rule`.
    pub witnesses: Vec<RuleId>,
    /// For a misconnection with no explicit deny: the firewall on the route
    /// whose accept rules leave part of `rule`'s traffic to the default deny.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_by: Option<String>,
}

impl fmt::Display for AggregationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: rule {} on {}", self.kind, self.rule, self.firewall)?;
        if let Some((a, b)) = &self.zone_pair {
            write!(f, " ({a} -> {b})")?;
        }
        if !self.witnesses.is_empty() {
            let w: Vec<_> = self.witnesses.iter().map(ToString::to_string).collect();
            write!(f, " conflicts with {}", w.join(", "))?;
        }
        if let Some(fw) = &self.dropped_by {
            write!(f, " but {fw} drops part of it by default")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("aggregation failed: {0}")]
    Anomaly(AggregationError),
}

/// A global rule together with the zone pair it was folded for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalRule {
    pub rule: FilteringRule,
    pub zone_pair: (String, String),
    /// The firewall rule this one was folded from.
    pub origin: RuleId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalPolicy {
    pub rules: Vec<GlobalRule>,
}

impl GlobalPolicy {
    pub fn filtering_rules(&self) -> Vec<FilteringRule> {
        self.rules.iter().map(|g| g.rule.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregation {
    pub policy: GlobalPolicy,
    /// Per-firewall intra-firewall rewriting, in input order.
    pub local_reports: Vec<(String, RewriteReport)>,
    /// The rewriting applied to the folded rules.
    pub final_report: RewriteReport,
}

/// Folds `firewalls` into a global policy, or reports the first anomaly.
///
/// Firewalls, rules and zone pairs are scanned in input order, so the
/// reported anomaly is deterministic. Firewalls of the topology without a
/// configuration behave as if they had no rules.
#[allow(clippy::result_large_err)]
pub fn aggregate(firewalls: &[Firewall], topology: &Topology) -> Result<Aggregation, AggregateError> {
    let mut scan = Scan::new(firewalls, topology, false)?;
    scan.run();
    if let Some(first) = scan.findings.into_iter().next() {
        return Err(AggregateError::Anomaly(first));
    }
    let folded = scan.folded;
    let rules: Vec<FilteringRule> = folded.iter().map(|g| g.rule.clone()).collect();
    let (rewritten, final_report) = policy_rewriting(&rules);
    let by_id: HashMap<&RuleId, &GlobalRule> = folded.iter().map(|g| (&g.rule.id, g)).collect();
    let policy = GlobalPolicy {
        rules: rewritten
            .into_iter()
            .map(|rule| {
                let source = by_id[&rule.id];
                GlobalRule {
                    zone_pair: source.zone_pair.clone(),
                    origin: source.origin.clone(),
                    rule,
                }
            })
            .collect(),
    };
    Ok(Aggregation {
        policy,
        local_reports: scan.local_reports,
        final_report,
    })
}

/// Reports inter-firewall anomalies without building a policy.
///
/// With `exhaustive` false this stops at the first finding, exactly where
/// [`aggregate`] would fail. With `exhaustive` true it keeps scanning and
/// returns every finding it can see; rules already folded into the policy by
/// an earlier rule are not driven again, so anomalies only visible from them
/// can be missed.
pub fn verify(
    firewalls: &[Firewall],
    topology: &Topology,
    exhaustive: bool,
) -> Result<Vec<AggregationError>, InputError> {
    let mut scan = Scan::new(firewalls, topology, exhaustive)?;
    scan.run();
    Ok(scan.findings)
}

pub(crate) fn check_inputs(topology: &Topology, rules: &[&FilteringRule]) -> Result<(), InputError> {
    let issues = topology.validate();
    if !issues.is_empty() {
        return Err(InputError::InvalidTopology(issues));
    }
    for r in rules {
        if r.cnd.iter().any(|c| c.config() != topology.domain) {
            return Err(InputError::DomainMismatch(r.id.clone()));
        }
    }
    Ok(())
}

struct LocalConfig<'a> {
    name: &'a str,
    rules: Vec<FilteringRule>,
}

/// Rules of one firewall with their positions.
type Indexed<'r> = Vec<(usize, &'r FilteringRule)>;

/// (firewall slot, rule index, source zone, destination zone)
type Use = (usize, usize, usize, usize);

struct Scan<'a> {
    topology: &'a Topology,
    routes: RouteTable<'a>,
    configs: Vec<LocalConfig<'a>>,
    slot_of: HashMap<&'a str, usize>,
    local_reports: Vec<(String, RewriteReport)>,
    consumed: HashSet<Use>,
    folded: Vec<GlobalRule>,
    findings: Vec<AggregationError>,
    exhaustive: bool,
}

impl<'a> Scan<'a> {
    fn new(firewalls: &'a [Firewall], topology: &'a Topology, exhaustive: bool) -> Result<Self, InputError> {
        let all: Vec<&FilteringRule> = firewalls.iter().flat_map(|f| &f.rules).collect();
        check_inputs(topology, &all)?;
        let mut slot_of = HashMap::new();
        let mut configs = Vec::new();
        let mut local_reports = Vec::new();
        for fw in firewalls {
            if topology.firewall(&fw.name).is_none() {
                return Err(InputError::UnknownFirewall(fw.name.clone()));
            }
            if slot_of.insert(fw.name.as_str(), configs.len()).is_some() {
                return Err(InputError::DuplicateFirewall(fw.name.clone()));
            }
            let (rules, report) = policy_rewriting(&fw.rules);
            configs.push(LocalConfig { name: &fw.name, rules });
            local_reports.push((fw.name.clone(), report));
        }
        Ok(Scan {
            topology,
            routes: RouteTable::new(topology),
            configs,
            slot_of,
            local_reports,
            consumed: HashSet::new(),
            folded: Vec::new(),
            findings: Vec::new(),
            exhaustive,
        })
    }

    fn stop(&self) -> bool {
        !self.exhaustive && !self.findings.is_empty()
    }

    fn report(&mut self, kind: AnomalyKind, slot: usize, rule: usize, pair: Option<(usize, usize)>, witnesses: Vec<RuleId>) {
        let zones = &self.topology.zones;
        self.findings.push(AggregationError {
            kind,
            firewall: self.configs[slot].name.to_owned(),
            rule: self.configs[slot].rules[rule].id.clone(),
            zone_pair: pair.map(|(a, b)| (zones[a].name.clone(), zones[b].name.clone())),
            witnesses,
            dropped_by: None,
        });
    }

    fn run(&mut self) {
        for slot in 0..self.configs.len() {
            for rule in 0..self.configs[slot].rules.len() {
                self.drive(slot, rule);
                if self.stop() {
                    return;
                }
            }
        }
    }

    /// Rules on `firewall` correlated with `probe`, split by decision.
    fn correlated(&self, firewall: &str, probe: &FilteringRule) -> (Indexed<'_>, Indexed<'_>) {
        let Some(&slot) = self.slot_of.get(firewall) else {
            return (Vec::new(), Vec::new());
        };
        self.configs[slot]
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.correlated(probe))
            .partition(|(_, r)| r.decision == Decision::Accept)
    }

    /// Whether the accept rules of `firewall` cover all of `probe`.
    fn covered(&self, firewall: &str, probe: &FilteringRule) -> bool {
        let (accepts, _) = self.correlated(firewall, probe);
        test_redundancy(accepts.iter().map(|(_, r)| *r), probe)
    }

    /// Whether every hop accepts all of `probe` and denies none of it.
    /// Local rules are disjoint after rewriting, so order plays no part.
    fn delivered(&self, hops: &[String], probe: &FilteringRule) -> bool {
        hops.iter().all(|f| self.correlated(f, probe).1.is_empty() && self.covered(f, probe))
    }

    fn drive(&mut self, slot: usize, index: usize) {
        let topo = self.topology;
        let r1 = self.configs[slot].rules[index].clone();
        let fw_name = self.configs[slot].name;
        let (Some(src), Some(dst)) = (r1.attribute_union(Attribute::SrcAddr), r1.attribute_union(Attribute::DstAddr)) else {
            return;
        };
        if !topo.uncovered(&src).is_empty() || !topo.uncovered(&dst).is_empty() {
            self.report(AnomalyKind::UnzonedAddress, slot, index, None, Vec::new());
            return;
        }

        let mut pending: Vec<Use> = Vec::new();
        for z1 in topo.zones_intersecting(&src) {
            for z2 in topo.zones_intersecting(&dst) {
                if self.stop() {
                    return;
                }
                if self.consumed.contains(&(slot, index, z1, z2)) {
                    continue;
                }
                let restricted = r1.restrict(&topo.zones[z1].addresses, &topo.zones[z2].addresses);
                if restricted.is_empty() {
                    continue;
                }
                let pair = Some((z1, z2));
                if z1 == z2 {
                    self.report(AnomalyKind::Irrelevance, slot, index, pair, Vec::new());
                    continue;
                }
                let route = match self.routes.get(z1, z2) {
                    Ok(p) => p.clone(),
                    Err(e) => {
                        let kind = match e {
                            RouteError::NoRoute { .. } => AnomalyKind::NoRoute,
                            RouteError::AmbiguousRoute { .. } => AnomalyKind::AmbiguousRoute,
                        };
                        self.report(kind, slot, index, pair, Vec::new());
                        continue;
                    }
                };
                let Some(position) = route.position(fw_name) else {
                    self.report(AnomalyKind::Irrelevance, slot, index, pair, Vec::new());
                    continue;
                };

                match r1.decision {
                    Decision::Accept => {
                        let mut upstream = Vec::new();
                        let mut downstream = Vec::new();
                        for (k, f2) in route.firewalls().iter().enumerate() {
                            let (_, denies) = self.correlated(f2, &restricted);
                            let ids = denies.into_iter().map(|(_, r)| r.id.clone());
                            if k < position {
                                upstream.extend(ids);
                            } else {
                                downstream.extend(ids);
                            }
                        }
                        let found = !upstream.is_empty() || !downstream.is_empty();
                        if !upstream.is_empty() {
                            self.report(AnomalyKind::Shadowing, slot, index, pair, upstream);
                        }
                        if !downstream.is_empty() && !self.stop() {
                            self.report(AnomalyKind::Misconnection, slot, index, pair, downstream);
                        }
                        if found {
                            continue;
                        }
                        // Under default deny, a hop without a matching accept denies too.
                        let gap = route.firewalls().iter().find(|f2| !self.covered(f2, &restricted));
                        if let Some(gap) = gap.cloned() {
                            self.report(AnomalyKind::Misconnection, slot, index, pair, Vec::new());
                            if let Some(last) = self.findings.last_mut() {
                                last.dropped_by = Some(gap);
                            }
                            continue;
                        }
                        let mut fold = Vec::new();
                        for f2 in route.firewalls() {
                            let Some(&s2) = self.slot_of.get(f2.as_str()) else { continue };
                            let (accepts, _) = self.correlated(f2, &restricted);
                            for (j, r2) in accepts {
                                if self.consumed.contains(&(s2, j, z1, z2)) {
                                    continue;
                                }
                                let piece = r2.restrict(&topo.zones[z1].addresses, &topo.zones[z2].addresses);
                                // A wider accept is left to be driven, and reported, on its own.
                                if !self.delivered(route.firewalls(), &piece) {
                                    continue;
                                }
                                if !piece.is_empty() {
                                    fold.push((piece, r2.id.clone()));
                                }
                                pending.push((s2, j, z1, z2));
                            }
                        }
                        for (piece, origin) in fold {
                            self.push_global(piece, origin, z1, z2);
                        }
                    }
                    Decision::Deny if position == 0 => {
                        let mut accepts = Vec::new();
                        let mut denies = Vec::new();
                        for f3 in route.tail(fw_name) {
                            let (a, d) = self.correlated(f3, &restricted);
                            accepts.extend(a.into_iter().map(|(_, r)| r.id.clone()));
                            denies.extend(d.into_iter().map(|(_, r)| r.id.clone()));
                        }
                        let found = !accepts.is_empty() || !denies.is_empty();
                        if !accepts.is_empty() {
                            self.report(AnomalyKind::Shadowing, slot, index, pair, accepts);
                        }
                        if !denies.is_empty() && !self.stop() {
                            self.report(AnomalyKind::Redundancy, slot, index, pair, denies);
                        }
                        if !found {
                            self.push_global(restricted, r1.id.clone(), z1, z2);
                            pending.push((slot, index, z1, z2));
                        }
                    }
                    Decision::Deny => {
                        // A prohibition away from the route's entry point.
                        let mut accepts = Vec::new();
                        let mut denies = Vec::new();
                        for f0 in &route.firewalls()[..position] {
                            let (a, d) = self.correlated(f0, &restricted);
                            accepts.extend(a.into_iter().map(|(_, r)| r.id.clone()));
                            denies.extend(d.into_iter().map(|(_, r)| r.id.clone()));
                        }
                        if accepts.is_empty() {
                            self.report(AnomalyKind::Redundancy, slot, index, pair, denies);
                        } else {
                            self.report(AnomalyKind::Misconnection, slot, index, pair, accepts);
                        }
                    }
                }
            }
        }
        self.consumed.extend(pending);
    }

    fn push_global(&mut self, mut rule: FilteringRule, origin: RuleId, z1: usize, z2: usize) {
        rule.id = RuleId::new(GLOBAL_SCOPE, self.folded.len() as u32 + 1);
        rule.shadowing = false;
        rule.redundancy = false;
        let zones = &self.topology.zones;
        self.folded.push(GlobalRule {
            rule,
            zone_pair: (zones[z1].name.clone(), zones[z2].name.clone()),
            origin,
        });
    }
}
