use std::fmt;

use serde::{Deserialize, Serialize};

use super::set::{AttributeSet, DomainConfig, DomainKind};

/// The five condition attributes, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Protocol,
    SrcAddr,
    SrcPort,
    DstAddr,
    DstPort,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Protocol,
        Attribute::SrcAddr,
        Attribute::SrcPort,
        Attribute::DstAddr,
        Attribute::DstPort,
    ];

    pub fn kind(self) -> DomainKind {
        match self {
            Attribute::Protocol => DomainKind::Protocol,
            Attribute::SrcAddr | Attribute::DstAddr => DomainKind::Address,
            Attribute::SrcPort | Attribute::DstPort => DomainKind::Port,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Protocol => "protocol",
            Attribute::SrcAddr => "src",
            Attribute::SrcPort => "sport",
            Attribute::DstAddr => "dst",
            Attribute::DstPort => "dport",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Deny,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accept => "accept",
            Decision::Deny => "deny",
        })
    }
}

/// A concrete 5-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Packet {
    pub protocol: u32,
    pub src_addr: u32,
    pub src_port: u32,
    pub dst_addr: u32,
    pub dst_port: u32,
}

impl Packet {
    pub fn new(protocol: u32, src_addr: u32, src_port: u32, dst_addr: u32, dst_port: u32) -> Self {
        Packet {
            protocol,
            src_addr,
            src_port,
            dst_addr,
            dst_port,
        }
    }

    pub fn field(&self, attr: Attribute) -> u32 {
        match attr {
            Attribute::Protocol => self.protocol,
            Attribute::SrcAddr => self.src_addr,
            Attribute::SrcPort => self.src_port,
            Attribute::DstAddr => self.dst_addr,
            Attribute::DstPort => self.dst_port,
        }
    }

    pub fn within(&self, config: &DomainConfig) -> bool {
        Attribute::ALL
            .iter()
            .all(|&a| self.field(a) <= config.domain(a.kind()).max())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConditionError {
    #[error("attribute {attr} expects a {expected} set, got {found}")]
    WrongKind {
        attr: &'static str,
        expected: DomainKind,
        found: DomainKind,
    },
    #[error("attributes {0} and {1} use different domain bounds")]
    MixedBounds(&'static str, &'static str),
}

/// A conjunction `protocol ∧ src ∧ sport ∧ dst ∧ dport`.
///
/// A packet matches when every field lies in the corresponding set; the
/// condition is empty (matches nothing) when any one set is empty.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    attrs: [AttributeSet; 5],
}

impl Condition {
    pub fn new(attrs: [AttributeSet; 5]) -> Result<Self, ConditionError> {
        for attr in Attribute::ALL {
            let found = attrs[attr.index()].domain().kind();
            if found != attr.kind() {
                return Err(ConditionError::WrongKind {
                    attr: attr.name(),
                    expected: attr.kind(),
                    found,
                });
            }
        }
        let pairs = [
            (Attribute::SrcAddr, Attribute::DstAddr),
            (Attribute::SrcPort, Attribute::DstPort),
        ];
        for (a, b) in pairs {
            if attrs[a.index()].domain() != attrs[b.index()].domain() {
                return Err(ConditionError::MixedBounds(a.name(), b.name()));
            }
        }
        Ok(Condition { attrs })
    }

    /// The condition matching every packet of `config`.
    pub fn any(config: &DomainConfig) -> Self {
        Condition {
            attrs: Attribute::ALL.map(|a| AttributeSet::full(config.domain(a.kind()))),
        }
    }

    pub fn config(&self) -> DomainConfig {
        DomainConfig {
            protocol_max: self.attrs[0].domain().max(),
            address_max: self.attrs[1].domain().max(),
            port_max: self.attrs[2].domain().max(),
        }
    }

    pub fn get(&self, attr: Attribute) -> &AttributeSet {
        &self.attrs[attr.index()]
    }

    pub fn attrs(&self) -> &[AttributeSet; 5] {
        &self.attrs
    }

    /// Replaces one attribute.
    ///
    /// Panics when `set` belongs to a different domain than the slot it
    /// replaces.
    pub fn with(mut self, attr: Attribute, set: AttributeSet) -> Self {
        assert_eq!(
            self.attrs[attr.index()].domain(),
            set.domain(),
            "attribute {} replaced with a set from another domain",
            attr.name()
        );
        self.attrs[attr.index()] = set;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.iter().any(AttributeSet::is_empty)
    }

    pub fn matches(&self, pkt: &Packet) -> bool {
        Attribute::ALL
            .iter()
            .all(|&a| self.attrs[a.index()].contains(pkt.field(a)))
    }

    /// True iff both conditions share a packet.
    pub fn intersects(&self, other: &Condition) -> bool {
        self.attrs
            .iter()
            .zip(&other.attrs)
            .all(|(a, b)| a.intersects(b).expect(MIXED))
    }

    pub fn intersect(&self, other: &Condition) -> Condition {
        let mut attrs = self.attrs.clone();
        for (mine, theirs) in attrs.iter_mut().zip(&other.attrs) {
            *mine = mine.intersect(theirs).expect(MIXED);
        }
        Condition { attrs }
    }

    /// `self \ other` as a list of pairwise disjoint, non-empty conjunctions.
    ///
    /// When the two overlap, term `k` keeps the overlap on every attribute
    /// before `k`, the remainder on attribute `k`, and `self` unchanged after
    /// it. When they do not overlap, `self` comes back unchanged.
    pub fn subtract(&self, other: &Condition) -> Vec<Condition> {
        if !self.intersects(other) {
            return if self.is_empty() {
                Vec::new()
            } else {
                vec![self.clone()]
            };
        }
        let mut out = Vec::new();
        let mut prefix = self.clone();
        for k in 0..5 {
            let rest = self.attrs[k].difference(&other.attrs[k]).expect(MIXED);
            if !rest.is_empty() {
                let mut term = prefix.clone();
                term.attrs[k] = rest;
                out.push(term);
            }
            prefix.attrs[k] = self.attrs[k].intersect(&other.attrs[k]).expect(MIXED);
        }
        out
    }
}

const MIXED: &str = "conditions compared across different domain configurations";

impl fmt::Debug for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, attr) in Attribute::ALL.iter().enumerate() {
            if n > 0 {
                f.write_str(" ∧ ")?;
            }
            write!(f, "{}={}", attr.name(), self.attrs[n])?;
        }
        Ok(())
    }
}

/// Stable rule identifier: where the rule came from plus its position there.
///
/// Serializes as its display form, `scope#ordinal`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId {
    pub scope: String,
    pub ordinal: u32,
}

impl RuleId {
    pub fn new(scope: impl Into<String>, ordinal: u32) -> Self {
        RuleId {
            scope: scope.into(),
            ordinal,
        }
    }
}

impl Serialize for RuleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.scope, self.ordinal)
    }
}

/// `{cnd} -> decision`, where `cnd` is a disjunction of conjunctions.
///
/// Parsed rules carry one conjunction; more appear only through exclusion.
/// Empty conjunctions are never stored, so a rule matches nothing exactly
/// when `cnd` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FilteringRule {
    pub id: RuleId,
    pub decision: Decision,
    pub cnd: Vec<Condition>,
    pub shadowing: bool,
    pub redundancy: bool,
}

impl FilteringRule {
    pub fn new(id: RuleId, decision: Decision, condition: Condition) -> Self {
        Self::from_conditions(id, decision, [condition])
    }

    pub fn from_conditions<I>(id: RuleId, decision: Decision, cnd: I) -> Self
    where
        I: IntoIterator<Item = Condition>,
    {
        FilteringRule {
            id,
            decision,
            cnd: cnd.into_iter().filter(|c| !c.is_empty()).collect(),
            shadowing: false,
            redundancy: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cnd.is_empty()
    }

    pub fn matches(&self, pkt: &Packet) -> bool {
        self.cnd.iter().any(|c| c.matches(pkt))
    }

    /// Some conjunct of each rule overlaps on all five attributes.
    pub fn correlated(&self, other: &FilteringRule) -> bool {
        self.cnd
            .iter()
            .any(|a| other.cnd.iter().any(|b| a.intersects(b)))
    }

    /// Union of one attribute across all conjuncts, `None` for an empty rule.
    pub fn attribute_union(&self, attr: Attribute) -> Option<AttributeSet> {
        let mut sets = self.cnd.iter().map(|c| c.get(attr));
        let first = sets.next()?.clone();
        Some(sets.fold(first, |acc, s| acc.union(s).expect(MIXED)))
    }

    /// The same rule with every conjunct's source and destination addresses
    /// narrowed to `src` and `dst`. Conjuncts that become empty are dropped.
    pub fn restrict(&self, src: &AttributeSet, dst: &AttributeSet) -> FilteringRule {
        let cnd = self.cnd.iter().filter_map(|c| {
            let s = c.get(Attribute::SrcAddr).intersect(src).expect(MIXED);
            let d = c.get(Attribute::DstAddr).intersect(dst).expect(MIXED);
            if s.is_empty() || d.is_empty() {
                None
            } else {
                Some(c.clone().with(Attribute::SrcAddr, s).with(Attribute::DstAddr, d))
            }
        });
        FilteringRule::from_conditions(self.id.clone(), self.decision, cnd.collect::<Vec<_>>())
    }
}

impl fmt::Display for FilteringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.id)?;
        if self.cnd.is_empty() {
            f.write_str("{}")?;
        }
        for (n, c) in self.cnd.iter().enumerate() {
            if n > 0 {
                f.write_str(" ∨ ")?;
            }
            write!(f, "({c})")?;
        }
        write!(f, " -> {}", self.decision)
    }
}

/// True iff some packet is matched by both rules.
pub fn rules_correlated(r1: &FilteringRule, r2: &FilteringRule) -> bool {
    r1.correlated(r2)
}
