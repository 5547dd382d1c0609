//! Whenever aggregation succeeds, the global policy must describe exactly
//! what the network does. Setups here are random and mostly anomalous, so
//! this also exercises the anomaly checks as a gate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fwfold::aggregate::aggregate;
use fwfold::format::describe_condition;
use fwfold::oracle::{check_equivalence, eval_global, EndToEndEvaluator, Equivalence, ScaledDomainConfig};
use fwfold::topology::{Firewall, FirewallNode, Topology, Zone};
use fwfold::{Attribute, AttributeSet, Condition, Decision, DomainKind, FilteringRule, RuleId};

const SPACE: ScaledDomainConfig = ScaledDomainConfig {
    protocol_max: 1,
    address_max: 7,
    port_max: 3,
    cap: 1_000_000,
};
const SETUPS: usize = 3000;

/// z1 = 0..=2 behind fw1, z2 = 3..=5 behind fw2, z3 = 6..=7 behind fw3,
/// firewalls chained fw1 - fw2 - fw3.
fn chain() -> Topology {
    let cfg = SPACE.domain();
    let addr = |lo, hi| AttributeSet::interval(cfg.domain(DomainKind::Address), lo, hi).unwrap();
    let node = |name: &str, zone: &str, links: &[&str]| FirewallNode {
        name: name.into(),
        adjacent_zones: [zone.to_string()].into(),
        links: links.iter().map(|s| s.to_string()).collect(),
    };
    Topology {
        domain: cfg,
        zones: vec![
            Zone { name: "z1".into(), addresses: addr(0, 2) },
            Zone { name: "z2".into(), addresses: addr(3, 5) },
            Zone { name: "z3".into(), addresses: addr(6, 7) },
        ],
        firewalls: vec![node("fw1", "z1", &["fw2"]), node("fw2", "z2", &["fw1", "fw3"]), node("fw3", "z3", &["fw2"])],
    }
}

fn random_subset(rng: &mut ChaCha8Rng, kind: DomainKind) -> AttributeSet {
    let d = SPACE.domain().domain(kind);
    if rng.gen_bool(0.5) {
        return AttributeSet::full(d);
    }
    let a = rng.gen_range(0..=d.max());
    let b = rng.gen_range(a..=d.max());
    AttributeSet::interval(d, a, b).unwrap()
}

/// A rule from one zone to another, sometimes covering a second zone pair.
fn random_rule(rng: &mut ChaCha8Rng, t: &Topology, id: RuleId) -> FilteringRule {
    let pairs = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
    let &(s, d) = pairs.choose(rng).unwrap();
    let mut dst = t.zones[d].addresses.clone();
    if rng.gen_bool(0.2) {
        let other = (0..3).find(|&z| z != s && z != d).unwrap();
        dst = dst.union(&t.zones[other].addresses).unwrap();
    }
    let c = Condition::any(&t.domain)
        .with(Attribute::Protocol, random_subset(rng, DomainKind::Protocol))
        .with(Attribute::SrcAddr, t.zones[s].addresses.clone())
        .with(Attribute::DstAddr, dst)
        .with(Attribute::DstPort, random_subset(rng, DomainKind::Port));
    let decision = if rng.gen_bool(0.7) { Decision::Accept } else { Decision::Deny };
    FilteringRule::new(id, decision, c)
}

#[test]
fn successful_aggregation_is_equivalent() {
    let t = chain();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut aggregated = 0;
    for n in 0..SETUPS {
        // a small shared pool makes agreeing firewalls likely
        let pool: Vec<FilteringRule> = (0..rng.gen_range(1..=3))
            .map(|i| random_rule(&mut rng, &t, RuleId::new("pool", i)))
            .collect();
        let fws: Vec<Firewall> = ["fw1", "fw2", "fw3"]
            .iter()
            .map(|name| {
                let rules = pool
                    .iter()
                    .filter(|_| rng.gen_bool(0.8))
                    .cloned()
                    .zip(1..)
                    .map(|(mut r, k)| {
                        r.id = RuleId::new(*name, k);
                        r
                    })
                    .collect();
                Firewall::new(*name, rules)
            })
            .collect();
        let Ok(agg) = aggregate(&fws, &t) else { continue };
        aggregated += 1;
        let global = agg.policy.filtering_rules();
        let network = EndToEndEvaluator::new(&fws, &t);
        let eq = check_equivalence(|p| network.eval(p).ok(), |p| eval_global(&global, &t, p).ok(), &SPACE).unwrap();
        let shown: Vec<String> = fws
            .iter()
            .flat_map(|fw| fw.rules.iter().map(|r| format!("{} {:?} {}", r.id, r.decision, describe(r))))
            .collect();
        assert_eq!(eq, Equivalence::Equivalent, "setup {n}:\n{}", shown.join("\n"));
    }
    assert!(aggregated >= SETUPS / 20, "only {aggregated} setups aggregated");
    println!("{aggregated} of {SETUPS} setups aggregated");
}

fn describe(r: &FilteringRule) -> String {
    r.cnd.iter().map(describe_condition).collect::<Vec<_>>().join(" | ")
}
