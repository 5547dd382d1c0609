use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use fwfold::aggregate::{self, AggregateError};
use fwfold::deploy::{self, DeployError};
use fwfold::format::{self, PolicyDocument, TopologyLoadError};
use fwfold::oracle::eval_end_to_end;
use fwfold::rewrite::policy_rewriting;
use fwfold::topology::{Firewall, Topology};
use fwfold::InputError;

mod report;

const EXIT_STRICT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_AGGREGATION: u8 = 3;
const EXIT_DEPLOYMENT: u8 = 4;
const EXIT_TOPOLOGY: u8 = 5;

#[derive(Parser)]
#[command(name = "fwfold", version, about = "Audit, aggregate and deploy distributed firewall policies")]
struct Cli {
    /// Print reports as JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite one firewall policy and report shadowed and redundant rules.
    Audit {
        policy: PathBuf,
        /// Exit with status 1 when any rule is removed.
        #[arg(long)]
        strict: bool,
        /// Write the rewritten policy to this file.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Look for anomalies between the firewalls of a topology.
    Verify {
        topology: PathBuf,
        /// Firewall configurations as NAME=POLICY.
        #[arg(required = true, value_parser = parse_binding)]
        firewalls: Vec<Binding>,
        /// Keep scanning after the first anomaly.
        #[arg(long)]
        all: bool,
    },
    /// Fold the firewall configurations into one global policy.
    Aggregate {
        topology: PathBuf,
        #[arg(required = true, value_parser = parse_binding)]
        firewalls: Vec<Binding>,
        /// Write the global policy here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Place a global policy onto the firewalls of a topology.
    Deploy {
        topology: PathBuf,
        global: PathBuf,
        /// Directory receiving one policy per firewall and manifest.json.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decide what the network does with one packet.
    Simulate {
        topology: PathBuf,
        #[arg(value_parser = parse_binding)]
        firewalls: Vec<Binding>,
        /// PROTOCOL,SRC,SPORT,DST,DPORT, e.g. tcp,10.0.1.5,1024,10.0.2.9,80
        #[arg(long)]
        packet: String,
    },
}

#[derive(Debug, Clone)]
struct Binding {
    name: String,
    path: PathBuf,
}

fn parse_binding(s: &str) -> Result<Binding, String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok(Binding {
            name: name.to_string(),
            path: PathBuf::from(path),
        }),
        _ => Err(format!("expected NAME=POLICY, got {s:?}")),
    }
}

/// A run that ends with a non-zero status. The message goes to stderr.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        match e {
            InputError::InvalidTopology(_) => Failure::new(EXIT_TOPOLOGY, e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("fwfold: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let out = Output { json: cli.json };
    match &cli.command {
        Command::Audit { policy, strict, output } => audit(&out, policy, *strict, output.as_deref()),
        Command::Verify { topology, firewalls, all } => verify(&out, topology, firewalls, *all),
        Command::Aggregate {
            topology,
            firewalls,
            output,
        } => aggregate_cmd(&out, topology, firewalls, output.as_deref()),
        Command::Deploy {
            topology,
            global,
            output,
        } => deploy_cmd(&out, topology, global, output),
        Command::Simulate {
            topology,
            firewalls,
            packet,
        } => simulate(&out, topology, firewalls, packet),
    }
}

struct Output {
    json: bool,
}

impl Output {
    fn emit(&self, value: Value, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&value).expect("JSON values serialize"));
        } else {
            print!("{}", text());
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn load_policy(path: &Path) -> Result<PolicyDocument, Failure> {
    format::parse_policy(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_topology(path: &Path) -> Result<Topology, Failure> {
    format::parse_topology(&read(path)?).map_err(|e| match e {
        TopologyLoadError::Parse(e) => Failure::usage(format!("{}: {e}", path.display())),
        TopologyLoadError::Invalid(_) => Failure::new(EXIT_TOPOLOGY, format!("{}: {e}", path.display())),
    })
}

fn check_domain(doc: &PolicyDocument, topology: &Topology, path: &Path) -> Result<(), Failure> {
    if doc.domain != topology.domain {
        return Err(Failure::usage(format!(
            "{}: policy domain does not match the topology's",
            path.display()
        )));
    }
    Ok(())
}

fn load_firewalls(bindings: &[Binding], topology: &Topology) -> Result<Vec<Firewall>, Failure> {
    let mut seen = BTreeSet::new();
    let mut firewalls = Vec::with_capacity(bindings.len());
    for b in bindings {
        if topology.firewall(&b.name).is_none() {
            return Err(InputError::UnknownFirewall(b.name.clone()).into());
        }
        if !seen.insert(b.name.as_str()) {
            return Err(InputError::DuplicateFirewall(b.name.clone()).into());
        }
        let doc = load_policy(&b.path)?;
        check_domain(&doc, topology, &b.path)?;
        firewalls.push(Firewall::new(b.name.clone(), doc.to_rules(&b.name)));
    }
    Ok(firewalls)
}

fn audit(out: &Output, path: &Path, strict: bool, output: Option<&Path>) -> Result<(), Failure> {
    let doc = load_policy(path)?;
    let scope = path
        .file_name()
        .map(|s| s.to_string_lossy().split('.').next().unwrap_or_default().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "rule".into());
    let rules = doc.to_rules(&scope);
    let (rewritten, rep) = policy_rewriting(&rules);
    if let Some(o) = output {
        let file = PolicyDocument::from_rules(doc.domain, &rewritten).expect("rewriting keeps the domain");
        write(o, &format::serialize_policy(&file))?;
    }
    out.emit(
        json!({
            "rules": rewritten.iter().map(report::rule_value).collect::<Vec<_>>(),
            "report": report::rewrite_value(&rep),
        }),
        || {
            let mut s = format!("rewritten policy: {} rule(s)\n", rewritten.len());
            for r in &rewritten {
                s.push_str(&format!("  {}\n", report::rule_text(r)));
            }
            s.push_str(&report::rewrite_text(&rep));
            s
        },
    );
    if strict && !rep.removed.is_empty() {
        return Err(Failure::new(
            EXIT_STRICT,
            format!("{} anomalous rule(s) in {}", rep.removed.len(), path.display()),
        ));
    }
    Ok(())
}

fn verify(out: &Output, topology: &Path, bindings: &[Binding], all: bool) -> Result<(), Failure> {
    let t = load_topology(topology)?;
    let fws = load_firewalls(bindings, &t)?;
    let findings = aggregate::verify(&fws, &t, all)?;
    out.emit(json!({ "anomalies": findings }), || {
        if findings.is_empty() {
            return "no anomalies\n".into();
        }
        findings.iter().map(|f| format!("{f}\n")).collect()
    });
    if findings.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_AGGREGATION, format!("{} anomaly(ies) found", findings.len())))
    }
}

fn aggregate_cmd(out: &Output, topology: &Path, bindings: &[Binding], output: Option<&Path>) -> Result<(), Failure> {
    let t = load_topology(topology)?;
    let fws = load_firewalls(bindings, &t)?;
    let agg = match aggregate::aggregate(&fws, &t) {
        Ok(agg) => agg,
        Err(AggregateError::Input(e)) => return Err(e.into()),
        Err(AggregateError::Anomaly(e)) => {
            out.emit(json!({ "error": e }), || format!("anomaly {e}\n"));
            return Err(Failure::new(EXIT_AGGREGATION, format!("aggregation failed: {}", e.kind)));
        }
    };
    let doc = PolicyDocument::from_rules(t.domain, agg.policy.rules.iter().map(|g| &g.rule))?;
    let text = format::serialize_policy(&doc);
    if let Some(o) = output {
        write(o, &text)?;
    }
    let value = json!({
        "policy": serde_json::from_slice::<Value>(&text).expect("serialized policy is JSON"),
        "rules": agg.policy.rules.iter().map(|g| json!({
            "id": g.rule.id,
            "origin": g.origin,
            "zone_pair": g.zone_pair,
        })).collect::<Vec<_>>(),
        "local_reports": agg.local_reports.iter()
            .map(|(name, rep)| (name.clone(), report::rewrite_value(rep)))
            .collect::<serde_json::Map<_, _>>(),
        "final_report": report::rewrite_value(&agg.final_report),
    });
    out.emit(value, || match output {
        Some(o) => format!("wrote {} global rule(s) to {}\n", doc.rules.len(), o.display()),
        None => String::from_utf8(text.clone()).expect("serialized policy is UTF-8"),
    });
    Ok(())
}

/// Firewall names become file names, so they must not escape the directory.
fn policy_file_name(firewall: &str) -> Result<String, Failure> {
    if firewall.is_empty() || firewall.starts_with('.') || firewall.contains(['/', '\\']) {
        return Err(Failure::usage(format!("firewall name {firewall:?} cannot be used as a file name")));
    }
    Ok(format!("{firewall}.policy.json"))
}

fn deploy_cmd(out: &Output, topology: &Path, global: &Path, dir: &Path) -> Result<(), Failure> {
    let t = load_topology(topology)?;
    let doc = load_policy(global)?;
    check_domain(&doc, &t, global)?;
    let plan = match deploy::deploy(&doc.to_rules("global"), &t) {
        Ok(plan) => plan,
        Err(DeployError::Input(e)) => return Err(e.into()),
        Err(DeployError::Deployment(e)) => {
            out.emit(json!({ "error": e }), || format!("deployment error {e}\n"));
            return Err(Failure::new(EXIT_DEPLOYMENT, format!("deployment failed: {}", e.kind)));
        }
    };
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    let mut entries = Vec::new();
    for fw in &plan.firewalls {
        let file = policy_file_name(&fw.name)?;
        let rules = PolicyDocument::from_rules(t.domain, fw.rules.iter().map(|d| &d.rule))?;
        write(&dir.join(&file), &format::serialize_policy(&rules))?;
        entries.push(json!({
            "name": fw.name,
            "file": file,
            "rules": fw.rules.iter().map(|d| json!({
                "id": d.rule.id,
                "origin": d.origin,
                "zone_pair": d.zone_pair,
            })).collect::<Vec<_>>(),
        }));
    }
    let manifest = json!({
        "version": format::SCHEMA_VERSION,
        "firewalls": entries,
        "warnings": plan.warnings,
        "report": report::rewrite_value(&plan.report),
    });
    let bytes = serde_json::to_string_pretty(&manifest).expect("JSON values serialize") + "\n";
    write(&dir.join("manifest.json"), bytes.as_bytes())?;
    out.emit(manifest, || {
        let mut s = String::new();
        for fw in &plan.firewalls {
            s.push_str(&format!("{}: {} rule(s)\n", fw.name, fw.rules.len()));
        }
        for w in &plan.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s.push_str(&format!("wrote {}\n", dir.join("manifest.json").display()));
        s
    });
    Ok(())
}

fn simulate(out: &Output, topology: &Path, bindings: &[Binding], packet: &str) -> Result<(), Failure> {
    let t = load_topology(topology)?;
    let fws = load_firewalls(bindings, &t)?;
    let pkt = report::parse_packet(packet, &t.domain).map_err(Failure::usage)?;
    let decision = eval_end_to_end(&fws, &t, &pkt).map_err(|e| Failure::new(EXIT_TOPOLOGY, e.to_string()))?;
    let route = match (t.zone_of(pkt.src_addr), t.zone_of(pkt.dst_addr)) {
        (Some(a), Some(b)) if a != b => t
            .unique_minimal_route(&t.zones[a].name, &t.zones[b].name)
            .ok()
            .map(|p| p.firewalls().to_vec()),
        _ => None,
    };
    out.emit(
        json!({ "decision": decision, "packet": report::packet_value(&pkt), "route": route }),
        || match &route {
            Some(r) => format!("{decision}\nroute: {}\n", r.join(" -> ")),
            None => format!("{decision}\n"),
        },
    );
    Ok(())
}
