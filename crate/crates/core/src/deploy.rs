//! Placing a global policy onto the firewalls of a topology.
//!
//! The policy is rewritten first, then every rule is split per zone pair.
//! A permission goes to every firewall on the pair's minimal route, a
//! prohibition only to the first one. Because the rewritten rules are
//! disjoint, the resulting firewall configurations carry neither intra- nor
//! inter-firewall anomalies.

use std::fmt;

use serde::Serialize;

use crate::aggregate::{check_inputs, GlobalPolicy};
use crate::error::InputError;
use crate::model::{Attribute, Decision, FilteringRule, RuleId};
use crate::rewrite::{policy_rewriting, RewriteReport};
use crate::topology::{Firewall, Path, RouteError, RouteTable, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningReason {
    /// Source and destination fall in the same zone; no firewall sees it.
    SameZone,
    /// The same rule instance was already placed on this firewall.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeploymentWarning {
    pub rule: RuleId,
    pub zone_pair: (String, String),
    pub firewall: Option<String>,
    pub reason: WarningReason,
}

impl fmt::Display for DeploymentWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = &self.zone_pair;
        match self.reason {
            WarningReason::SameZone => write!(f, "rule {} skipped for same-zone pair ({a} -> {b})", self.rule),
            WarningReason::Duplicate => write!(
                f,
                "rule {} ({a} -> {b}) already placed on {}",
                self.rule,
                self.firewall.as_deref().unwrap_or("?")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeployedRule {
    pub rule: FilteringRule,
    pub zone_pair: (String, String),
    /// The global rule this instance came from.
    pub origin: RuleId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirewallPlan {
    pub name: String,
    pub rules: Vec<DeployedRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentPlan {
    /// One entry per topology firewall, in topology order.
    pub firewalls: Vec<FirewallPlan>,
    pub warnings: Vec<DeploymentWarning>,
    /// The rewriting applied to the input before placement.
    pub report: RewriteReport,
}

impl DeploymentPlan {
    pub fn firewall(&self, name: &str) -> Option<&FirewallPlan> {
        self.firewalls.iter().find(|f| f.name == name)
    }

    /// The plan as firewall configurations, ready for [`crate::aggregate::aggregate`].
    pub fn firewall_configs(&self) -> Vec<Firewall> {
        self.firewalls
            .iter()
            .map(|f| Firewall::new(f.name.clone(), f.rules.iter().map(|d| d.rule.clone()).collect()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentErrorKind {
    NoRoute,
    AmbiguousRoute,
    UnzonedAddress,
}

impl fmt::Display for DeploymentErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeploymentErrorKind::NoRoute => "no_route",
            DeploymentErrorKind::AmbiguousRoute => "ambiguous_route",
            DeploymentErrorKind::UnzonedAddress => "unzoned_address",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct DeploymentError {
    pub kind: DeploymentErrorKind,
    pub rule: RuleId,
    pub zone_pair: Option<(String, String)>,
    /// Competing minimal routes, for `AmbiguousRoute`.
    pub routes: Vec<Path>,
}

impl fmt::Display for DeploymentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: rule {}", self.kind, self.rule)?;
        if let Some((a, b)) = &self.zone_pair {
            write!(f, " ({a} -> {b})")?;
        }
        if !self.routes.is_empty() {
            let r: Vec<_> = self.routes.iter().map(ToString::to_string).collect();
            write!(f, " via {}", r.join(" or "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeployError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("deployment failed: {0}")]
    Deployment(DeploymentError),
}

pub fn deploy_global(policy: &GlobalPolicy, topology: &Topology) -> Result<DeploymentPlan, DeployError> {
    deploy(&policy.filtering_rules(), topology)
}

/// Places `rules` (a global policy in first-match order) onto `topology`.
pub fn deploy(rules: &[FilteringRule], topology: &Topology) -> Result<DeploymentPlan, DeployError> {
    check_inputs(topology, &rules.iter().collect::<Vec<_>>())?;
    let (rewritten, report) = policy_rewriting(rules);
    let zones = &topology.zones;
    let mut routes = RouteTable::new(topology);
    let mut warnings = Vec::new();
    // (firewall index, source zone, destination zone, rule)
    let mut placed: Vec<(usize, usize, usize, FilteringRule)> = Vec::new();

    for r in &rewritten {
        let src = r.attribute_union(Attribute::SrcAddr).expect("rewritten rules are non-empty");
        let dst = r.attribute_union(Attribute::DstAddr).expect("rewritten rules are non-empty");
        if !topology.uncovered(&src).is_empty() || !topology.uncovered(&dst).is_empty() {
            return Err(DeployError::Deployment(DeploymentError {
                kind: DeploymentErrorKind::UnzonedAddress,
                rule: r.id.clone(),
                zone_pair: None,
                routes: Vec::new(),
            }));
        }
        for z1 in topology.zones_intersecting(&src) {
            for z2 in topology.zones_intersecting(&dst) {
                let instance = r.restrict(&zones[z1].addresses, &zones[z2].addresses);
                if instance.is_empty() {
                    continue;
                }
                let pair = (zones[z1].name.clone(), zones[z2].name.clone());
                if z1 == z2 {
                    warnings.push(DeploymentWarning {
                        rule: r.id.clone(),
                        zone_pair: pair,
                        firewall: None,
                        reason: WarningReason::SameZone,
                    });
                    continue;
                }
                let route = routes.get(z1, z2).map_err(|e| {
                    let (kind, routes) = match e {
                        RouteError::NoRoute { .. } => (DeploymentErrorKind::NoRoute, Vec::new()),
                        RouteError::AmbiguousRoute { routes, .. } => (DeploymentErrorKind::AmbiguousRoute, routes),
                    };
                    DeployError::Deployment(DeploymentError {
                        kind,
                        rule: r.id.clone(),
                        zone_pair: Some(pair.clone()),
                        routes,
                    })
                })?;
                let hosts: &[String] = match r.decision {
                    Decision::Accept => route.firewalls(),
                    Decision::Deny => &route.firewalls()[..1],
                };
                for fw in hosts {
                    let idx = topology.firewall_index(fw).expect("routes only cross known firewalls");
                    placed.push((idx, z1, z2, instance.clone()));
                }
            }
        }
    }

    placed.sort_by(|a, b| (a.0, a.1, a.2, &a.3.id).cmp(&(b.0, b.1, b.2, &b.3.id)));
    let mut firewalls: Vec<FirewallPlan> = topology
        .firewalls
        .iter()
        .map(|f| FirewallPlan {
            name: f.name.clone(),
            rules: Vec::new(),
        })
        .collect();
    for (idx, z1, z2, rule) in placed {
        let plan = &mut firewalls[idx];
        let pair = (zones[z1].name.clone(), zones[z2].name.clone());
        let duplicate = plan
            .rules
            .iter()
            .any(|d| d.rule.decision == rule.decision && d.rule.cnd == rule.cnd);
        if duplicate {
            warnings.push(DeploymentWarning {
                rule: rule.id.clone(),
                zone_pair: pair,
                firewall: Some(plan.name.clone()),
                reason: WarningReason::Duplicate,
            });
            continue;
        }
        let origin = rule.id.clone();
        let mut rule = rule;
        rule.id = RuleId::new(plan.name.clone(), plan.rules.len() as u32 + 1);
        plan.rules.push(DeployedRule {
            rule,
            zone_pair: pair,
            origin,
        });
    }

    Ok(DeploymentPlan {
        firewalls,
        warnings,
        report,
    })
}
