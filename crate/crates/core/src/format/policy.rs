use serde::{Deserialize, Serialize};

use super::{check_version, from_json, render, resolve, DomainField, Item, ParseError, SCHEMA_VERSION};
use crate::error::InputError;
use crate::model::{Attribute, AttributeSet, Condition, Decision, DomainConfig, FilteringRule, RuleId};

/// A parsed policy file: an ordered list of single-condition rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDocument {
    pub domain: DomainConfig,
    pub rules: Vec<RuleRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleRecord {
    pub decision: Decision,
    pub condition: Condition,
}

impl PolicyDocument {
    /// One record per conjunct, in rule order. Under first-match this keeps
    /// the meaning of multi-conjunct rules.
    pub fn from_rules<'a, I>(domain: DomainConfig, rules: I) -> Result<Self, InputError>
    where
        I: IntoIterator<Item = &'a FilteringRule>,
    {
        let mut records = Vec::new();
        for r in rules {
            for c in &r.cnd {
                if c.config() != domain {
                    return Err(InputError::DomainMismatch(r.id.clone()));
                }
                records.push(RuleRecord {
                    decision: r.decision,
                    condition: c.clone(),
                });
            }
        }
        Ok(PolicyDocument { domain, rules: records })
    }

    /// Rules numbered from 1 in file order under the given scope.
    pub fn to_rules(&self, scope: &str) -> Vec<FilteringRule> {
        self.rules
            .iter()
            .zip(1..)
            .map(|(r, n)| FilteringRule::new(RuleId::new(scope, n), r.decision, r.condition.clone()))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    decision: Decision,
    protocol: Vec<Item>,
    src: Vec<Item>,
    sport: Vec<Item>,
    dst: Vec<Item>,
    dport: Vec<Item>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    version: u32,
    #[serde(default)]
    domain: DomainField,
    rules: Vec<RawRule>,
}

impl RawRule {
    fn lists(&self) -> [&[Item]; 5] {
        [&self.protocol, &self.src, &self.sport, &self.dst, &self.dport]
    }
}

pub fn parse_policy(bytes: &[u8]) -> Result<PolicyDocument, ParseError> {
    let raw: RawPolicy = from_json(bytes)?;
    check_version(raw.version)?;
    let domain = raw.domain.0;
    let mut rules = Vec::with_capacity(raw.rules.len());
    for (i, r) in raw.rules.iter().enumerate() {
        let lists = r.lists();
        let mut sets: Vec<AttributeSet> = Vec::with_capacity(5);
        for a in Attribute::ALL {
            let path = format!("rules[{i}].{}", a.name());
            sets.push(resolve(lists[a.index()], domain.domain(a.kind()), &path)?);
        }
        let attrs: [AttributeSet; 5] = sets.try_into().expect("five attributes");
        rules.push(RuleRecord {
            decision: r.decision,
            condition: Condition::new(attrs).expect("sets were resolved in their own domains"),
        });
    }
    Ok(PolicyDocument { domain, rules })
}

/// Canonical text: one rule per line, trailing newline.
pub fn serialize_policy(doc: &PolicyDocument) -> Vec<u8> {
    let production = doc.domain.is_production();
    let mut out = String::new();
    out.push_str(&format!("{{\n  \"version\": {SCHEMA_VERSION},\n"));
    out.push_str(&format!(
        "  \"domain\": {},\n",
        serde_json::to_string(&DomainField(doc.domain)).expect("domain serializes")
    ));
    out.push_str("  \"rules\": [");
    for (i, r) in doc.rules.iter().enumerate() {
        let c = &r.condition;
        let raw = RawRule {
            decision: r.decision,
            protocol: render(c.get(Attribute::Protocol), production),
            src: render(c.get(Attribute::SrcAddr), production),
            sport: render(c.get(Attribute::SrcPort), production),
            dst: render(c.get(Attribute::DstAddr), production),
            dport: render(c.get(Attribute::DstPort), production),
        };
        out.push_str(if i == 0 { "\n    " } else { ",\n    " });
        out.push_str(&serde_json::to_string(&raw).expect("rule serializes"));
    }
    out.push_str(if doc.rules.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DomainKind;
    use proptest::prelude::*;

    const EXAMPLE: &str = r#"{"version":1,"domain":"production","rules":[
        {"decision":"accept","protocol":["tcp"],"src":["10.0.1.0/24"],"sport":[[0,65535]],"dst":["10.0.2.0/24"],"dport":[[80,80]]}
    ]}"#;

    #[test]
    fn parses_the_reference_rule() {
        let doc = parse_policy(EXAMPLE.as_bytes()).unwrap();
        assert_eq!(doc.rules.len(), 1);
        let r = &doc.rules[0];
        assert_eq!(r.decision, Decision::Accept);
        assert_eq!(r.condition.get(Attribute::Protocol).intervals(), &[(6, 6)]);
        assert_eq!(r.condition.get(Attribute::SrcAddr).intervals(), &[(0x0A00_0100, 0x0A00_01FF)]);
        assert!(r.condition.get(Attribute::SrcPort).is_full());
        assert_eq!(r.condition.get(Attribute::DstPort).intervals(), &[(80, 80)]);
        let rules = doc.to_rules("fw1");
        assert_eq!(rules[0].id, RuleId::new("fw1", 1));
    }

    #[test]
    fn canonical_text() {
        let doc = parse_policy(EXAMPLE.as_bytes()).unwrap();
        let text = String::from_utf8(serialize_policy(&doc)).unwrap();
        assert_eq!(
            text,
            "{\n  \"version\": 1,\n  \"domain\": \"production\",\n  \"rules\": [\n    \
             {\"decision\":\"accept\",\"protocol\":[\"tcp\"],\"src\":[\"10.0.1.0/24\"],\"sport\":[\"any\"],\
             \"dst\":[\"10.0.2.0/24\"],\"dport\":[80]}\n  ]\n}\n"
        );
        assert_eq!(parse_policy(text.as_bytes()).unwrap(), doc);
        let empty = PolicyDocument { domain: DomainConfig::PRODUCTION, rules: vec![] };
        assert_eq!(parse_policy(&serialize_policy(&empty)).unwrap(), empty);
    }

    #[test]
    fn domain_defaults_to_production_and_accepts_bounds() {
        let doc = parse_policy(br#"{"version":1,"rules":[]}"#).unwrap();
        assert!(doc.domain.is_production());
        let doc = parse_policy(
            br#"{"version":1,"domain":{"protocol_max":2,"address_max":31,"port_max":15},
                "rules":[{"decision":"deny","protocol":[1],"src":[[0,7]],"sport":["any"],"dst":[9],"dport":[[1,2],4]}]}"#,
        )
        .unwrap();
        assert_eq!(doc.domain, DomainConfig::scaled(2, 31, 15));
        assert_eq!(doc.rules[0].condition.get(Attribute::DstPort).intervals(), &[(1, 2), (4, 4)]);
        let text = serialize_policy(&doc);
        assert!(String::from_utf8_lossy(&text).contains("\"src\":[[0,7]]"));
    }

    fn err(text: &str) -> ParseError {
        parse_policy(text.as_bytes()).unwrap_err()
    }

    #[test]
    fn rejections() {
        let e = err(r#"{"version":1,"rules":[],"extra":0}"#);
        assert!(e.message.contains("unknown field"), "{e}");
        let e = err(r#"{"version":1,"version":1,"rules":[]}"#);
        assert!(e.message.contains("duplicate field"), "{e}");
        let e = err(r#"{"version":2,"rules":[]}"#);
        assert_eq!(e.path, "version");

        let e = err(
            r#"{"version":1,"rules":[
            {"decision":"accept","protocol":["tcp"],"src":["any"],"sport":["any"],"dst":["any"],"dport":["any"],"dport":[1]}]}"#,
        );
        assert!(e.message.contains("duplicate field"), "{e}");
        assert_eq!(e.line, Some(2));

        let e = err(
            r#"{"version":1,"rules":[{"decision":"allow","protocol":["tcp"],"src":["any"],"sport":["any"],"dst":["any"],"dport":["any"]}]}"#,
        );
        assert_eq!(e.path, "rules[0].decision");

        let e = err(
            r#"{"version":1,"rules":[{"decision":"deny","protocol":["gre"],"src":["any"],"sport":["any"],"dst":["any"],"dport":["any"]}]}"#,
        );
        assert_eq!(e.path, "rules[0].protocol[0]");
        assert!(e.message.contains("unknown protocol"));

        let e = err(
            r#"{"version":1,"rules":[{"decision":"deny","protocol":["tcp"],"src":["any"],"sport":["any"],"dst":["any"]}]}"#,
        );
        assert!(e.message.contains("missing field `dport`"), "{e}");

        let e = err(r#"{"version":1,"rules":[]} trailing"#);
        assert!(e.line.is_some());
        assert!(err("{").line.is_some());
    }

    #[test]
    fn multi_conjunct_rules_split_into_records() {
        let cfg = DomainConfig::scaled(2, 31, 15);
        let port = |lo, hi| AttributeSet::interval(cfg.domain(DomainKind::Port), lo, hi).unwrap();
        let r = FilteringRule::from_conditions(
            RuleId::new("x", 1),
            Decision::Accept,
            [
                Condition::any(&cfg).with(Attribute::DstPort, port(1, 2)),
                Condition::any(&cfg).with(Attribute::DstPort, port(7, 9)),
            ],
        );
        let doc = PolicyDocument::from_rules(cfg, [&r]).unwrap();
        assert_eq!(doc.rules.len(), 2);
        assert!(PolicyDocument::from_rules(DomainConfig::PRODUCTION, [&r]).is_err());
    }

    fn arb_set(max: u32, kind: DomainKind) -> impl Strategy<Value = AttributeSet> {
        prop::collection::vec((0..=max, 0..=max), 1..4).prop_map(move |v| {
            let ivs = v.into_iter().map(|(a, b)| (a.min(b), a.max(b)));
            AttributeSet::from_intervals(crate::model::Domain::new(kind, max), ivs).unwrap()
        })
    }

    fn arb_doc(cfg: DomainConfig) -> impl Strategy<Value = PolicyDocument> {
        let cond = (
            arb_set(cfg.protocol_max, DomainKind::Protocol),
            arb_set(cfg.address_max, DomainKind::Address),
            arb_set(cfg.port_max, DomainKind::Port),
            arb_set(cfg.address_max, DomainKind::Address),
            arb_set(cfg.port_max, DomainKind::Port),
            any::<bool>(),
        )
            .prop_map(|(p, s, sp, d, dp, accept)| RuleRecord {
                decision: if accept { Decision::Accept } else { Decision::Deny },
                condition: Condition::new([p, s, sp, d, dp]).unwrap(),
            });
        prop::collection::vec(cond, 0..5).prop_map(move |rules| PolicyDocument { domain: cfg, rules })
    }

    proptest! {
        #[test]
        fn round_trip_scaled(doc in arb_doc(DomainConfig::scaled(20, 300, 70))) {
            let text = serialize_policy(&doc);
            let back = parse_policy(&text).unwrap();
            prop_assert_eq!(&back, &doc);
            prop_assert_eq!(serialize_policy(&back), text);
        }

        #[test]
        fn round_trip_production(doc in arb_doc(DomainConfig::PRODUCTION)) {
            let text = serialize_policy(&doc);
            let back = parse_policy(&text).unwrap();
            prop_assert_eq!(&back, &doc);
            prop_assert_eq!(serialize_policy(&back), text);
        }
    }
}
