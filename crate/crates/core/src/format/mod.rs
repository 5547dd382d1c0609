//! JSON policy and topology documents.
//!
//! Attribute values are lists of items. An item is a bare integer, an
//! inclusive `[lo, hi]` pair, `"any"`, a protocol name (`tcp`, `udp`,
//! `icmp`), or for addresses a dotted quad or CIDR block. Lists are
//! normalized into canonical interval sets, and serialization always emits
//! the canonical spelling, so `serialize(parse(x))` is a fixed point.

use std::fmt;
use std::net::Ipv4Addr;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::model::{Attribute, AttributeSet, Condition, Domain, DomainConfig, DomainKind};

mod policy;
mod topology;

pub use policy::{parse_policy, serialize_policy, PolicyDocument, RuleRecord};
pub use topology::{parse_topology, serialize_topology, TopologyLoadError};

pub const SCHEMA_VERSION: u32 = 1;

/// A document that failed to parse, with the JSON path of the offending
/// value and, for syntax and schema errors, its position in the text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub path: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path != "." && !self.path.is_empty() {
            write!(f, "at {}", self.path)?;
            if let (Some(l), Some(c)) = (self.line, self.column) {
                write!(f, " (line {l}, column {c})")?;
            }
            write!(f, ": ")?;
        } else if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl ParseError {
    pub(crate) fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError {
            path: path.into(),
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

pub(crate) fn from_json<'de, T: Deserialize<'de>>(bytes: &'de [u8]) -> Result<T, ParseError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let pos = |n: usize| (n > 0).then_some(n);
        ParseError {
            path,
            line: pos(inner.line()),
            column: pos(inner.column()),
            message: strip_position(&inner.to_string()),
        }
    })?;
    de.end().map_err(|e| ParseError {
        path: ".".into(),
        line: Some(e.line()),
        column: Some(e.column()),
        message: strip_position(&e.to_string()),
    })?;
    Ok(value)
}

/// serde_json appends " at line L column C" to its messages; the position is
/// reported separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub(crate) fn check_version(version: u32) -> Result<(), ParseError> {
    if version != SCHEMA_VERSION {
        return Err(ParseError::at(
            "version",
            format!("unsupported schema version {version}, expected {SCHEMA_VERSION}"),
        ));
    }
    Ok(())
}

/// The `domain` field: either the string `"production"` or an object with
/// explicit bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct DomainField(pub DomainConfig);

impl Serialize for DomainField {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_production() {
            s.serialize_str("production")
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for DomainField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = DomainField;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"production\" or an object with protocol_max, address_max and port_max")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<DomainField, E> {
                match v {
                    "production" => Ok(DomainField(DomainConfig::PRODUCTION)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
            fn visit_map<A: de::MapAccess<'de>>(self, map: A) -> Result<DomainField, A::Error> {
                DomainConfig::deserialize(de::value::MapAccessDeserializer::new(map)).map(DomainField)
            }
        }
        d.deserialize_any(V)
    }
}

/// One element of an attribute list, before it is checked against a domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Item {
    Int(u64),
    Range(u64, u64),
    Name(String),
}

impl Serialize for Item {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Item::Int(v) => s.serialize_u64(*v),
            Item::Name(n) => s.serialize_str(n),
            Item::Range(lo, hi) => {
                let mut seq = s.serialize_seq(Some(2))?;
                seq.serialize_element(lo)?;
                seq.serialize_element(hi)?;
                seq.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Item {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Item;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer, a [lo, hi] pair or a string")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Item, E> {
                Ok(Item::Int(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Item, E> {
                u64::try_from(v)
                    .map(Item::Int)
                    .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &"a non-negative integer"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Item, E> {
                Ok(Item::Name(v.to_string()))
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Item, A::Error> {
                let lo: u64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &"a [lo, hi] pair"))?;
                let hi: u64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &"a [lo, hi] pair"))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &"a [lo, hi] pair"));
                }
                Ok(Item::Range(lo, hi))
            }
        }
        d.deserialize_any(V)
    }
}

fn protocol_number(name: &str) -> Option<u32> {
    match name {
        "icmp" => Some(1),
        "tcp" => Some(6),
        "udp" => Some(17),
        _ => None,
    }
}

fn protocol_name(n: u32) -> Option<&'static str> {
    match n {
        1 => Some("icmp"),
        6 => Some("tcp"),
        17 => Some("udp"),
        _ => None,
    }
}

fn parse_cidr(s: &str) -> Result<(u32, u32), String> {
    let (addr, len) = s.split_once('/').expect("caller checked for '/'");
    let base: Ipv4Addr = addr.parse().map_err(|_| format!("invalid IPv4 address {addr:?}"))?;
    let len: u32 = len
        .parse()
        .ok()
        .filter(|l| *l <= 32)
        .ok_or_else(|| format!("invalid prefix length in {s:?}"))?;
    let base = u32::from(base);
    let host_bits = 32 - len;
    let span = ((1u64 << host_bits) - 1) as u32;
    if base & span != 0 {
        return Err(format!("{s:?} has host bits set"));
    }
    Ok((base, base | span))
}

fn to_u32(v: u64) -> Result<u32, String> {
    u32::try_from(v).map_err(|_| format!("value {v} is too large"))
}

fn item_interval(item: &Item, domain: Domain) -> Result<(u32, u32), String> {
    match item {
        Item::Int(v) => {
            let v = to_u32(*v)?;
            Ok((v, v))
        }
        Item::Range(lo, hi) => Ok((to_u32(*lo)?, to_u32(*hi)?)),
        Item::Name(n) if n == "any" => Ok((0, domain.max())),
        Item::Name(n) => match domain.kind() {
            DomainKind::Protocol => protocol_number(n)
                .map(|p| (p, p))
                .ok_or_else(|| format!("unknown protocol name {n:?}")),
            DomainKind::Address if n.contains('/') => parse_cidr(n),
            DomainKind::Address => n
                .parse::<Ipv4Addr>()
                .map(|a| (u32::from(a), u32::from(a)))
                .map_err(|_| format!("invalid address {n:?}")),
            DomainKind::Port => Err(format!("unexpected string {n:?} in a port list")),
        },
    }
}

/// Turns an attribute list into a canonical set. `path` names the list in
/// error messages.
pub(crate) fn resolve(items: &[Item], domain: Domain, path: &str) -> Result<AttributeSet, ParseError> {
    if items.is_empty() {
        return Err(ParseError::at(path, "attribute list is empty"));
    }
    let mut intervals = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let iv = item_interval(item, domain).map_err(|m| ParseError::at(format!("{path}[{i}]"), m))?;
        AttributeSet::from_intervals(domain, [iv]).map_err(|e| ParseError::at(format!("{path}[{i}]"), e.to_string()))?;
        intervals.push(iv);
    }
    Ok(AttributeSet::from_intervals(domain, intervals).expect("every interval was validated"))
}

/// Canonical spelling of a set: `"any"` when full, CIDR blocks for
/// production addresses, names for well-known protocols, integers and
/// pairs otherwise.
pub(crate) fn render(set: &AttributeSet, production: bool) -> Vec<Item> {
    if set.is_full() {
        return vec![Item::Name("any".into())];
    }
    let kind = set.domain().kind();
    let mut out = Vec::new();
    for &(lo, hi) in set.intervals() {
        match kind {
            DomainKind::Address if production => out.extend(cidr_blocks(lo, hi).into_iter().map(Item::Name)),
            DomainKind::Protocol if lo == hi && protocol_name(lo).is_some() => {
                out.push(Item::Name(protocol_name(lo).unwrap().into()))
            }
            _ if lo == hi => out.push(Item::Int(lo as u64)),
            _ => out.push(Item::Range(lo as u64, hi as u64)),
        }
    }
    out
}

/// One-line text form such as
/// `protocol=tcp src=10.0.1.0/24 sport=any dst=10.0.2.0/24 dport=80,1024-2047`.
pub fn describe_condition(c: &Condition) -> String {
    let production = c.config().is_production();
    let parts: Vec<String> = Attribute::ALL
        .iter()
        .map(|a| {
            let items: Vec<String> = render(c.get(*a), production)
                .into_iter()
                .map(|i| match i {
                    Item::Int(v) => v.to_string(),
                    Item::Range(lo, hi) => format!("{lo}-{hi}"),
                    Item::Name(n) => n,
                })
                .collect();
            format!("{}={}", a.name(), items.join(","))
        })
        .collect();
    parts.join(" ")
}

/// Smallest list of CIDR blocks covering exactly `[lo, hi]`.
fn cidr_blocks(lo: u32, hi: u32) -> Vec<String> {
    let mut out = Vec::new();
    let (mut lo, hi) = (lo as u64, hi as u64);
    while lo <= hi {
        let align = if lo == 0 { 32 } else { lo.trailing_zeros().min(32) };
        let mut bits = align;
        while lo + (1u64 << bits) - 1 > hi {
            bits -= 1;
        }
        let addr = Ipv4Addr::from(lo as u32);
        out.push(if bits == 0 { addr.to_string() } else { format!("{addr}/{}", 32 - bits) });
        lo += 1u64 << bits;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADDR: Domain = Domain::new(DomainKind::Address, u32::MAX);
    const PROTO: Domain = Domain::new(DomainKind::Protocol, 255);
    const PORT: Domain = Domain::new(DomainKind::Port, 65535);

    fn names(v: &[&str]) -> Vec<Item> {
        v.iter().map(|s| Item::Name(s.to_string())).collect()
    }

    #[test]
    fn cidr_and_quads() {
        let s = resolve(&names(&["10.0.1.0/24"]), ADDR, "src").unwrap();
        assert_eq!(s.intervals(), &[(0x0A00_0100, 0x0A00_01FF)]);
        let s = resolve(&names(&["10.0.0.0/24", "10.0.0.128/25"]), ADDR, "src").unwrap();
        assert_eq!(s.intervals(), &[(0x0A00_0000, 0x0A00_00FF)]);
        let s = resolve(&names(&["0.0.0.0/0"]), ADDR, "src").unwrap();
        assert!(s.is_full());
        let s = resolve(&names(&["192.168.0.7"]), ADDR, "src").unwrap();
        assert_eq!(s.intervals(), &[(0xC0A8_0007, 0xC0A8_0007)]);
    }

    #[test]
    fn bad_items_name_their_position() {
        let e = resolve(&names(&["10.0.0.0/24", "10.0.0.1/24"]), ADDR, "rules[0].src").unwrap_err();
        assert_eq!(e.path, "rules[0].src[1]");
        assert!(e.message.contains("host bits"));
        assert!(resolve(&names(&["10.0.0.0/33"]), ADDR, "x").is_err());
        assert!(resolve(&names(&["10.0.0"]), ADDR, "x").is_err());
        assert!(resolve(&names(&["sctp"]), PROTO, "x").is_err());
        assert!(resolve(&[Item::Int(70000)], PORT, "x").is_err());
        assert!(resolve(&[Item::Range(9, 3)], PORT, "x").is_err());
        assert!(resolve(&[], PORT, "x").is_err());
    }

    #[test]
    fn protocol_aliases() {
        let tcp = resolve(&names(&["tcp"]), PROTO, "p").unwrap();
        assert_eq!(tcp.intervals(), &[(6, 6)]);
        let any = resolve(&names(&["any"]), PROTO, "p").unwrap();
        assert_eq!(any.intervals(), &[(0, 255)]);
        let mixed = resolve(&[Item::Name("udp".into()), Item::Int(1), Item::Range(2, 5)], PROTO, "p").unwrap();
        assert_eq!(mixed.intervals(), &[(1, 5), (17, 17)]);
    }

    #[test]
    fn cidr_decomposition_is_exact_and_minimal() {
        assert_eq!(cidr_blocks(0x0A00_0100, 0x0A00_01FF), vec!["10.0.1.0/24"]);
        assert_eq!(cidr_blocks(0, u32::MAX), vec!["0.0.0.0/0"]);
        assert_eq!(cidr_blocks(5, 5), vec!["0.0.0.5"]);
        assert_eq!(cidr_blocks(1, 6), vec!["0.0.0.1", "0.0.0.2/31", "0.0.0.4/31", "0.0.0.6"]);
        assert_eq!(cidr_blocks(u32::MAX, u32::MAX), vec!["255.255.255.255"]);
    }

    #[test]
    fn describe() {
        let cfg = DomainConfig::PRODUCTION;
        let c = Condition::any(&cfg)
            .with(Attribute::Protocol, AttributeSet::singleton(PROTO, 6).unwrap())
            .with(Attribute::DstPort, AttributeSet::from_intervals(PORT, [(80, 80), (1024, 2047)]).unwrap());
        assert_eq!(
            describe_condition(&c),
            "protocol=tcp src=any sport=any dst=any dport=80,1024-2047"
        );
    }

    #[test]
    fn render_round_trips() {
        let s = AttributeSet::from_intervals(ADDR, [(3, 1000), (0xFFFF_FF00, u32::MAX)]).unwrap();
        assert_eq!(resolve(&render(&s, true), ADDR, "a").unwrap(), s);
        let p = AttributeSet::from_intervals(PROTO, [(6, 6), (17, 17), (40, 50)]).unwrap();
        let r = render(&p, true);
        assert_eq!(r, vec![Item::Name("tcp".into()), Item::Name("udp".into()), Item::Range(40, 50)]);
        assert_eq!(resolve(&r, PROTO, "p").unwrap(), p);
    }
}
