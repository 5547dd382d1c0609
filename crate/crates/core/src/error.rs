use crate::model::RuleId;
use crate::topology::TopologyIssue;

/// Problems with the inputs themselves, found before any analysis runs.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InputError {
    #[error("invalid topology ({} issue(s)): {}", .0.len(), join(.0))]
    InvalidTopology(Vec<TopologyIssue>),
    #[error("firewall {0} is not part of the topology")]
    UnknownFirewall(String),
    #[error("firewall {0} is configured more than once")]
    DuplicateFirewall(String),
    #[error("rule {0} uses a different domain configuration than the topology")]
    DomainMismatch(RuleId),
}

fn join(issues: &[TopologyIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
