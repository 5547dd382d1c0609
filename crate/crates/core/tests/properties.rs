use proptest::prelude::*;

use fwfold::oracle::{eval_any_match, eval_first_match, AnyMatch, ScaledDomainConfig};
use fwfold::rewrite::{exclusion, policy_rewriting, test_redundancy};
use fwfold::{Attribute, AttributeSet, Condition, Decision, DomainConfig, FilteringRule, Packet, RuleId};

/// 2 x 8^2 x 4^2 = 2048 packets: small enough to enumerate per case.
const SPACE: ScaledDomainConfig = ScaledDomainConfig {
    protocol_max: 1,
    address_max: 7,
    port_max: 3,
    cap: 1_000_000,
};

fn cfg() -> DomainConfig {
    SPACE.domain()
}

fn packets() -> Vec<Packet> {
    SPACE.packets().unwrap().collect()
}

fn arb_set(attr: Attribute) -> impl Strategy<Value = AttributeSet> {
    let domain = cfg().domain(attr.kind());
    let max = domain.max();
    prop_oneof![
        1 => Just(AttributeSet::full(domain)),
        3 => prop::collection::vec((0..=max, 0..=max), 1..3).prop_map(move |v| {
            AttributeSet::from_intervals(domain, v.into_iter().map(|(a, b)| (a.min(b), a.max(b)))).unwrap()
        }),
    ]
}

fn arb_condition() -> impl Strategy<Value = Condition> {
    (
        arb_set(Attribute::Protocol),
        arb_set(Attribute::SrcAddr),
        arb_set(Attribute::SrcPort),
        arb_set(Attribute::DstAddr),
        arb_set(Attribute::DstPort),
    )
        .prop_map(|(p, s, sp, d, dp)| Condition::new([p, s, sp, d, dp]).unwrap())
}

fn arb_rules(max: usize) -> impl Strategy<Value = Vec<FilteringRule>> {
    prop::collection::vec((arb_condition(), any::<bool>()), 1..=max).prop_map(|v| {
        v.into_iter()
            .zip(1..)
            .map(|((c, accept), n)| {
                let d = if accept { Decision::Accept } else { Decision::Deny };
                FilteringRule::new(RuleId::new("p", n), d, c)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rewriting_keeps_first_match_meaning(rules in arb_rules(8)) {
        let (tr, _) = policy_rewriting(&rules);
        for p in packets() {
            let expected = eval_first_match(&rules, &p).map_or(AnyMatch::NoMatch, AnyMatch::Decision);
            prop_assert_eq!(eval_any_match(&tr, &p), expected, "packet {:?}", p);
        }
    }

    #[test]
    fn rewritten_rules_are_pairwise_disjoint(rules in arb_rules(8)) {
        let (tr, _) = policy_rewriting(&rules);
        for (i, a) in tr.iter().enumerate() {
            for b in &tr[i + 1..] {
                prop_assert!(!a.correlated(b), "{} and {} overlap", a.id, b.id);
            }
        }
    }

    #[test]
    fn rewriting_is_idempotent(rules in arb_rules(8)) {
        let (tr, _) = policy_rewriting(&rules);
        let (again, report) = policy_rewriting(&tr);
        prop_assert!(report.is_clean());
        prop_assert_eq!(again, tr);
    }

    #[test]
    fn report_partitions_the_input(rules in arb_rules(8)) {
        let (tr, report) = policy_rewriting(&rules);
        let mut ids: Vec<_> = report.removed.iter().map(|r| r.id.clone()).chain(report.kept.clone()).collect();
        ids.sort();
        let mut expected: Vec<_> = rules.iter().map(|r| r.id.clone()).collect();
        expected.sort();
        prop_assert_eq!(ids, expected);
        prop_assert_eq!(tr.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), report.kept);
    }

    #[test]
    fn exclusion_is_set_difference(b in arb_condition(), a in arb_condition(), c in arb_condition()) {
        let rb = exclusion(
            &FilteringRule::new(RuleId::new("b", 1), Decision::Accept, b),
            &FilteringRule::new(RuleId::new("c", 1), Decision::Accept, c),
        );
        let ra = FilteringRule::new(RuleId::new("a", 1), Decision::Deny, a);
        let e = exclusion(&rb, &ra);
        for p in packets() {
            prop_assert_eq!(e.matches(&p), rb.matches(&p) && !ra.matches(&p));
        }
        for (i, x) in e.cnd.iter().enumerate() {
            for y in &e.cnd[i + 1..] {
                prop_assert!(!x.intersects(y));
            }
        }
    }

    #[test]
    fn redundancy_means_coverage(rules in arb_rules(5), r in arb_condition()) {
        let target = FilteringRule::new(RuleId::new("t", 1), Decision::Accept, r);
        let covered = packets().iter().all(|p| !target.matches(p) || rules.iter().any(|x| x.matches(p)));
        prop_assert_eq!(test_redundancy(&rules, &target), covered);
    }
}
