//! Intra-firewall audit: exclusion, redundancy testing and policy rewriting.
//!
//! [`policy_rewriting`] turns a first-match rule list into an equivalent set
//! of pairwise disjoint rules with no shadowed or redundant members. Removed
//! rules are reported with the reason and the phase that removed them.

use serde::Serialize;

use crate::model::{FilteringRule, RuleId};

/// Rule `b` with every packet of `a` removed.
///
/// The result keeps `b`'s id and decision and has both flags cleared. Each
/// conjunct of `a` is subtracted in turn from every conjunct accumulated so
/// far, so the resulting disjunction covers exactly `packets(b) \ packets(a)`.
pub fn exclusion(b: &FilteringRule, a: &FilteringRule) -> FilteringRule {
    let mut cnd = b.cnd.clone();
    for removed in &a.cnd {
        cnd = cnd.iter().flat_map(|c| c.subtract(removed)).collect();
        if cnd.is_empty() {
            break;
        }
    }
    FilteringRule {
        id: b.id.clone(),
        decision: b.decision,
        cnd,
        shadowing: false,
        redundancy: false,
    }
}

/// True iff the rules in `rs` together cover every packet of `r`.
///
/// Rules of `rs` are excluded from `r` one after the other, stopping as soon
/// as nothing is left.
pub fn test_redundancy<'a, I>(rs: I, r: &FilteringRule) -> bool
where
    I: IntoIterator<Item = &'a FilteringRule>,
{
    let mut temp = r.clone();
    for other in rs {
        temp = exclusion(&temp, other);
        if temp.cnd.is_empty() {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Shadowing,
    Redundancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Phase1,
    Phase2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removal {
    pub id: RuleId,
    pub reason: RemovalReason,
    pub phase: Phase,
    /// The rule as it was given, with the flag matching `reason` set.
    pub rule: FilteringRule,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewriteReport {
    pub removed: Vec<Removal>,
    pub kept: Vec<RuleId>,
    /// Parallel to `kept`: whether the rule's condition was rewritten.
    pub transformed: Vec<bool>,
}

impl RewriteReport {
    pub fn is_clean(&self) -> bool {
        self.removed.is_empty() && !self.transformed.iter().any(|t| *t)
    }

    pub fn count(&self, reason: RemovalReason) -> usize {
        self.removed.iter().filter(|r| r.reason == reason).count()
    }
}

/// Rewrites a first-match rule list into an order-free, anomaly-free set.
///
/// Phase 1 removes from every rule the packets claimed by earlier rules with
/// the other decision; rules left empty are shadowed. Phase 2 walks the rules
/// in order: a rule covered by the later live rules of its own decision is
/// redundant and dropped, otherwise it is excluded from those later rules,
/// and any of them left empty is shadowed.
///
/// The output keeps the surviving rules in their original relative order.
pub fn policy_rewriting(input: &[FilteringRule]) -> (Vec<FilteringRule>, RewriteReport) {
    let n = input.len();
    let mut rules: Vec<FilteringRule> = input.to_vec();
    let mut removed: Vec<Option<(RemovalReason, Phase)>> = vec![None; n];

    for i in 0..n {
        if removed[i].is_some() {
            continue;
        }
        for j in i + 1..n {
            if removed[j].is_some() || rules[i].decision == rules[j].decision {
                continue;
            }
            rules[j] = exclusion(&rules[j], &rules[i]);
            if rules[j].is_empty() {
                rules[j].shadowing = true;
                removed[j] = Some((RemovalReason::Shadowing, Phase::Phase1));
            }
        }
    }

    for i in 0..n {
        if removed[i].is_some() {
            continue;
        }
        let decision = rules[i].decision;
        let later = (i + 1..n).filter(|&k| removed[k].is_none() && rules[k].decision == decision);
        if test_redundancy(later.clone().map(|k| &rules[k]), &rules[i]) {
            rules[i].cnd.clear();
            rules[i].redundancy = true;
            removed[i] = Some((RemovalReason::Redundancy, Phase::Phase2));
            continue;
        }
        for j in later.collect::<Vec<_>>() {
            rules[j] = exclusion(&rules[j], &rules[i]);
            if rules[j].is_empty() {
                rules[j].shadowing = true;
                removed[j] = Some((RemovalReason::Shadowing, Phase::Phase2));
            }
        }
    }

    let mut report = RewriteReport::default();
    let mut out = Vec::new();
    for ((original, rule), verdict) in input.iter().zip(rules).zip(removed) {
        match verdict {
            Some((reason, phase)) => {
                let mut kept = original.clone();
                kept.shadowing = reason == RemovalReason::Shadowing;
                kept.redundancy = reason == RemovalReason::Redundancy;
                report.removed.push(Removal {
                    id: original.id.clone(),
                    reason,
                    phase,
                    rule: kept,
                });
            }
            None => {
                report.kept.push(rule.id.clone());
                report.transformed.push(rule.cnd != original.cnd);
                out.push(rule);
            }
        }
    }
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Attribute, AttributeSet, Condition, Decision, DomainConfig, Packet};

    // protocol 0..=1, addresses 0..=20, ports 0..=3
    const CFG: DomainConfig = DomainConfig::scaled(1, 20, 3);

    fn set(attr: Attribute, lo: u32, hi: u32) -> AttributeSet {
        AttributeSet::interval(CFG.domain(attr.kind()), lo, hi).unwrap()
    }

    fn rule(ord: u32, decision: Decision, attrs: &[(Attribute, u32, u32)]) -> FilteringRule {
        let c = attrs
            .iter()
            .fold(Condition::any(&CFG), |c, &(a, lo, hi)| c.with(a, set(a, lo, hi)));
        FilteringRule::new(RuleId::new("fw", ord), decision, c)
    }

    fn packets() -> Vec<Packet> {
        let mut v = Vec::new();
        for p in 0..=CFG.protocol_max {
            for s in 0..=CFG.address_max {
                for d in 0..=CFG.address_max {
                    for dp in 0..=CFG.port_max {
                        v.push(Packet::new(p, s, 0, d, dp));
                    }
                }
            }
        }
        v
    }

    fn first_match(rules: &[FilteringRule], p: &Packet) -> Option<Decision> {
        rules.iter().find(|r| r.matches(p)).map(|r| r.decision)
    }

    use Attribute::*;
    use Decision::*;

    #[test]
    fn exclusion_of_disjoint_rule_is_identity() {
        let b = rule(0, Accept, &[(Protocol, 0, 0)]);
        let a = rule(1, Deny, &[(Protocol, 1, 1)]);
        let c = exclusion(&b, &a);
        assert_eq!(c.cnd, b.cnd);
        assert_eq!(c.decision, Accept);
    }

    #[test]
    fn exclusion_by_superset_empties() {
        let b = rule(0, Accept, &[(SrcAddr, 3, 5), (DstPort, 1, 1)]);
        let a = rule(1, Deny, &[(SrcAddr, 0, 10)]);
        assert!(exclusion(&b, &a).cnd.is_empty());
    }

    #[test]
    fn exclusion_two_attribute_example() {
        // b = src[0,10] ∧ dst[0,10], a = src[3,5] ∧ dst[0,20]
        let b = rule(0, Accept, &[(SrcAddr, 0, 10), (DstAddr, 0, 10)]);
        let a = rule(1, Deny, &[(SrcAddr, 3, 5), (DstAddr, 0, 20)]);
        let c = exclusion(&b, &a);
        let expected = Condition::any(&CFG)
            .with(
                SrcAddr,
                AttributeSet::from_intervals(CFG.domain(SrcAddr.kind()), [(0, 2), (6, 10)]).unwrap(),
            )
            .with(DstAddr, set(DstAddr, 0, 10));
        assert_eq!(c.cnd, vec![expected]);
        // membership oracle over all (src, dst) in 0..=20
        for s in 0..=20 {
            for d in 0..=20 {
                let p = Packet::new(0, s, 0, d, 0);
                assert_eq!(c.matches(&p), b.matches(&p) && !a.matches(&p), "src={s} dst={d}");
            }
        }
    }

    #[test]
    fn exclusion_of_empty_is_empty() {
        let b = FilteringRule::from_conditions(RuleId::new("fw", 0), Accept, Vec::new());
        let a = rule(1, Deny, &[]);
        assert!(exclusion(&b, &a).is_empty());
    }

    #[test]
    fn redundancy_needs_a_cover() {
        let r = rule(0, Accept, &[(SrcAddr, 0, 10)]);
        assert!(!test_redundancy(&[], &r));
        assert!(test_redundancy(&[rule(1, Accept, &[(SrcAddr, 0, 12)])], &r));

        let low = rule(1, Accept, &[(SrcAddr, 0, 5)]);
        let high = rule(2, Accept, &[(SrcAddr, 4, 10)]);
        assert!(!test_redundancy([&low], &r));
        assert!(!test_redundancy([&high], &r));
        assert!(test_redundancy([&low, &high], &r));
    }

    #[test]
    fn single_rule_is_untouched() {
        let r = rule(0, Accept, &[(DstPort, 1, 1)]);
        let (out, report) = policy_rewriting(std::slice::from_ref(&r));
        assert_eq!(out, vec![r]);
        assert!(report.removed.is_empty());
        assert_eq!(report.transformed, vec![false]);
    }

    #[test]
    fn deny_all_shadows_later_accept() {
        let input = [rule(1, Deny, &[]), rule(2, Accept, &[(DstPort, 1, 1)])];
        let (out, report) = policy_rewriting(&input);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, RuleId::new("fw", 1));
        assert_eq!(report.removed.len(), 1);
        let gone = &report.removed[0];
        assert_eq!(gone.id, RuleId::new("fw", 2));
        assert_eq!((gone.reason, gone.phase), (RemovalReason::Shadowing, Phase::Phase1));
        assert!(gone.rule.shadowing && !gone.rule.redundancy);
        for p in packets() {
            assert_eq!(first_match(&input, &p), first_match(&out, &p));
            assert_eq!(first_match(&input, &p), Some(Deny));
        }
    }

    #[test]
    fn covered_earlier_rule_is_redundant() {
        let input = [rule(1, Accept, &[(SrcAddr, 0, 5)]), rule(2, Accept, &[(SrcAddr, 0, 10)])];
        let (out, report) = policy_rewriting(&input);
        assert_eq!(out, vec![input[1].clone()]);
        assert_eq!(report.removed[0].reason, RemovalReason::Redundancy);
        assert_eq!(report.removed[0].phase, Phase::Phase2);
        assert!(report.removed[0].rule.redundancy);
        for p in packets() {
            assert_eq!(first_match(&input, &p), first_match(&input[1..], &p));
        }
    }

    #[test]
    fn later_subset_with_same_decision_is_shadowed_in_phase_two() {
        let input = [rule(1, Deny, &[(SrcAddr, 0, 10)]), rule(2, Deny, &[(SrcAddr, 2, 4)])];
        let (out, report) = policy_rewriting(&input);
        assert_eq!(out, vec![input[0].clone()]);
        assert_eq!(report.removed[0].id, RuleId::new("fw", 2));
        assert_eq!(
            (report.removed[0].reason, report.removed[0].phase),
            (RemovalReason::Shadowing, Phase::Phase2)
        );
    }

    #[test]
    fn exact_duplicates_keep_the_later_rule() {
        let a = rule(1, Accept, &[(DstPort, 2, 3)]);
        let b = rule(2, Accept, &[(DstPort, 2, 3)]);
        let (out, report) = policy_rewriting(&[a, b.clone()]);
        assert_eq!(out, vec![b]);
        assert_eq!(report.removed[0].id, RuleId::new("fw", 1));
        assert_eq!(report.removed[0].reason, RemovalReason::Redundancy);
    }

    #[test]
    fn partial_overlap_is_rewritten_and_reported() {
        let input = [rule(1, Deny, &[(SrcAddr, 0, 5)]), rule(2, Accept, &[(SrcAddr, 3, 8)])];
        let (out, report) = policy_rewriting(&input);
        assert_eq!(out.len(), 2);
        assert_eq!(report.transformed, vec![false, true]);
        assert!(!report.is_clean());
        let (again, second) = policy_rewriting(&out);
        assert_eq!(again, out);
        assert!(second.is_clean());
    }

    #[test]
    fn report_partitions_input_ids() {
        let input = [
            rule(1, Accept, &[(SrcAddr, 0, 5)]),
            rule(2, Deny, &[(SrcAddr, 0, 3)]),
            rule(3, Accept, &[(SrcAddr, 0, 10)]),
            rule(4, Deny, &[]),
        ];
        let (_, report) = policy_rewriting(&input);
        let mut ids: Vec<_> = report
            .removed
            .iter()
            .map(|r| r.id.clone())
            .chain(report.kept.iter().cloned())
            .collect();
        ids.sort();
        let mut expected: Vec<_> = input.iter().map(|r| r.id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
        for r in &report.removed {
            assert!(r.rule.shadowing != r.rule.redundancy);
        }
    }
}
