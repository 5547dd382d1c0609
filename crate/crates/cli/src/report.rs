//! Text and JSON renderings shared by the subcommands.

use std::net::Ipv4Addr;

use serde_json::{json, Value};

use fwfold::format::describe_condition;
use fwfold::rewrite::{RemovalReason, RewriteReport};
use fwfold::{DomainConfig, FilteringRule, Packet};

fn tag<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        _ => unreachable!("unit enums serialize as strings"),
    }
}

pub fn rule_text(r: &FilteringRule) -> String {
    let conds: Vec<String> = r.cnd.iter().map(describe_condition).collect();
    format!("{} {} {}", r.id, r.decision, conds.join(" | "))
}

pub fn rule_value(r: &FilteringRule) -> Value {
    json!({
        "id": r.id,
        "decision": r.decision,
        "conditions": r.cnd.iter().map(describe_condition).collect::<Vec<_>>(),
    })
}

pub fn rewrite_value(rep: &RewriteReport) -> Value {
    let transformed: Vec<_> = rep
        .kept
        .iter()
        .zip(&rep.transformed)
        .filter(|(_, t)| **t)
        .map(|(id, _)| id)
        .collect();
    json!({
        "removed": rep.removed.iter().map(|r| json!({
            "id": r.id,
            "reason": r.reason,
            "phase": r.phase,
        })).collect::<Vec<_>>(),
        "kept": rep.kept,
        "transformed": transformed,
        "summary": {
            "removed": rep.removed.len(),
            "shadowing": rep.count(RemovalReason::Shadowing),
            "redundancy": rep.count(RemovalReason::Redundancy),
            "kept": rep.kept.len(),
            "transformed": transformed.len(),
        },
    })
}

pub fn rewrite_text(rep: &RewriteReport) -> String {
    let transformed = rep.transformed.iter().filter(|t| **t).count();
    let mut s = format!(
        "{} removed ({} shadowing, {} redundancy), {} kept, {} transformed\n",
        rep.removed.len(),
        rep.count(RemovalReason::Shadowing),
        rep.count(RemovalReason::Redundancy),
        rep.kept.len(),
        transformed,
    );
    for r in &rep.removed {
        s.push_str(&format!("  removed {}: {} ({})\n", r.id, tag(&r.reason), tag(&r.phase)));
    }
    s
}

pub fn packet_value(p: &Packet) -> Value {
    json!({
        "protocol": p.protocol,
        "src": p.src_addr,
        "sport": p.src_port,
        "dst": p.dst_addr,
        "dport": p.dst_port,
    })
}

/// Parses `PROTOCOL,SRC,SPORT,DST,DPORT`. Protocols may be numbers or
/// `tcp`/`udp`/`icmp`; addresses may be integers or dotted quads.
pub fn parse_packet(s: &str, domain: &DomainConfig) -> Result<Packet, String> {
    let fields: Vec<&str> = s.split(',').map(str::trim).collect();
    let [proto, src, sport, dst, dport] = fields[..] else {
        return Err(format!("packet {s:?} must have five comma-separated fields"));
    };
    let int = |f: &str, what: &str| f.parse::<u32>().map_err(|_| format!("invalid {what} {f:?}"));
    let addr = |f: &str| match f.parse::<Ipv4Addr>() {
        Ok(a) => Ok(u32::from(a)),
        Err(_) => int(f, "address"),
    };
    let protocol = match proto {
        "icmp" => 1,
        "tcp" => 6,
        "udp" => 17,
        _ => int(proto, "protocol")?,
    };
    let pkt = Packet::new(protocol, addr(src)?, int(sport, "port")?, addr(dst)?, int(dport, "port")?);
    if !pkt.within(domain) {
        return Err(format!("packet {s:?} lies outside the topology's domain"));
    }
    Ok(pkt)
}
