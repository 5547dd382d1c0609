//! Rules, conditions and the interval algebra they are built on.

mod rule;
mod set;

pub use rule::{
    rules_correlated, Attribute, Condition, ConditionError, Decision, FilteringRule, Packet,
    RuleId,
};
pub use set::{AttributeSet, Domain, DomainConfig, DomainKind, DomainMismatch, SetError};
