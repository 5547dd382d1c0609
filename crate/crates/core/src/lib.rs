//! Firewall policy analysis.
//!
//! The crate audits a single firewall's rule list for shadowed and redundant
//! rules, folds the rule lists of several firewalls into one global policy
//! while checking for inter-firewall anomalies, and places a global policy
//! back onto a topology so that the result is anomaly free.
//!
//! * [`model`]: attribute sets, conditions, rules and packets.
//! * [`rewrite`]: exclusion, redundancy testing and policy rewriting.
//! * [`topology`]: zones, firewalls, routes and minimal routes.
//! * [`aggregate`]: multi-firewall aggregation and anomaly detection.
//! * [`deploy`]: placement of a global policy onto firewalls.
//! * [`oracle`]: brute-force packet evaluation used for verification.
//! * [`format`]: JSON policy and topology documents.

pub mod aggregate;
pub mod deploy;
mod error;
pub mod format;
pub mod model;
pub mod oracle;
pub mod rewrite;
pub mod topology;

pub use error::InputError;
pub use model::{
    rules_correlated, Attribute, AttributeSet, Condition, Decision, DomainConfig, DomainKind,
    FilteringRule, Packet, RuleId,
};
