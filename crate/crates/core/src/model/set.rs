use std::fmt;

use serde::{Deserialize, Serialize};

/// The three value domains a filtering attribute can range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Protocol,
    Address,
    Port,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::Protocol => "protocol",
            DomainKind::Address => "address",
            DomainKind::Port => "port",
        })
    }
}

/// Inclusive upper bounds of the protocol, address and port domains.
///
/// Every domain starts at zero. [`DomainConfig::PRODUCTION`] describes real
/// IPv4 traffic; smaller configurations ("scaled domains") keep the packet
/// space small enough to enumerate exhaustively while running through the
/// exact same code paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub protocol_max: u32,
    pub address_max: u32,
    pub port_max: u32,
}

impl DomainConfig {
    pub const PRODUCTION: DomainConfig = DomainConfig {
        protocol_max: 255,
        address_max: u32::MAX,
        port_max: 65535,
    };

    pub const fn scaled(protocol_max: u32, address_max: u32, port_max: u32) -> Self {
        DomainConfig {
            protocol_max,
            address_max,
            port_max,
        }
    }

    pub fn is_production(&self) -> bool {
        *self == Self::PRODUCTION
    }

    pub fn domain(&self, kind: DomainKind) -> Domain {
        let max = match kind {
            DomainKind::Protocol => self.protocol_max,
            DomainKind::Address => self.address_max,
            DomainKind::Port => self.port_max,
        };
        Domain { kind, max }
    }

    /// Number of distinct 5-tuples in this configuration.
    pub fn packet_space(&self) -> u128 {
        let p = self.protocol_max as u128 + 1;
        let a = self.address_max as u128 + 1;
        let o = self.port_max as u128 + 1;
        p * a * a * o * o
    }
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self::PRODUCTION
    }
}

/// One attribute domain: `0..=max` of the given kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Domain {
    kind: DomainKind,
    max: u32,
}

impl Domain {
    pub const fn new(kind: DomainKind, max: u32) -> Self {
        Domain { kind, max }
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn max(&self) -> u32 {
        self.max
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[0,{}]", self.kind, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("attribute domain mismatch: {left} vs {right}")]
pub struct DomainMismatch {
    pub left: Domain,
    pub right: Domain,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SetError {
    #[error("interval [{lo}, {hi}] has its bounds reversed")]
    Reversed { lo: u32, hi: u32 },
    #[error("value {value} is outside {domain}")]
    OutOfDomain { value: u32, domain: Domain },
}

/// A finite union of closed integer intervals over one [`Domain`].
///
/// The interval list is always kept canonical: sorted, pairwise disjoint and
/// separated by at least one missing value. Two sets are therefore equal as
/// integer sets exactly when they are structurally equal.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AttributeSet {
    domain: Domain,
    intervals: Vec<(u32, u32)>,
}

impl AttributeSet {
    pub fn empty(domain: Domain) -> Self {
        AttributeSet {
            domain,
            intervals: Vec::new(),
        }
    }

    pub fn full(domain: Domain) -> Self {
        AttributeSet {
            domain,
            intervals: vec![(0, domain.max)],
        }
    }

    pub fn interval(domain: Domain, lo: u32, hi: u32) -> Result<Self, SetError> {
        Self::from_intervals(domain, [(lo, hi)])
    }

    pub fn singleton(domain: Domain, value: u32) -> Result<Self, SetError> {
        Self::from_intervals(domain, [(value, value)])
    }

    /// Builds a set from arbitrary (possibly overlapping, unsorted) intervals.
    pub fn from_intervals<I>(domain: Domain, intervals: I) -> Result<Self, SetError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut raw = Vec::new();
        for (lo, hi) in intervals {
            if lo > hi {
                return Err(SetError::Reversed { lo, hi });
            }
            if hi > domain.max {
                return Err(SetError::OutOfDomain { value: hi, domain });
            }
            raw.push((lo, hi));
        }
        Ok(AttributeSet {
            domain,
            intervals: normalize(raw),
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn intervals(&self) -> &[(u32, u32)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.intervals == [(0, self.domain.max)]
    }

    /// Number of integers in the set.
    pub fn cardinality(&self) -> u64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| hi as u64 - lo as u64 + 1)
            .sum()
    }

    pub fn contains(&self, value: u32) -> bool {
        // first interval whose upper bound is >= value
        let idx = self.intervals.partition_point(|&(_, hi)| hi < value);
        self.intervals.get(idx).is_some_and(|&(lo, _)| lo <= value)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.intervals.iter().flat_map(|&(lo, hi)| lo..=hi)
    }

    fn same_domain(&self, other: &AttributeSet) -> Result<(), DomainMismatch> {
        if self.domain == other.domain {
            Ok(())
        } else {
            Err(DomainMismatch {
                left: self.domain,
                right: other.domain,
            })
        }
    }

    pub fn intersect(&self, other: &AttributeSet) -> Result<AttributeSet, DomainMismatch> {
        self.same_domain(other)?;
        let (a, b) = (&self.intervals, &other.intervals);
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(AttributeSet {
            domain: self.domain,
            intervals: out,
        })
    }

    /// `self \ other`.
    pub fn difference(&self, other: &AttributeSet) -> Result<AttributeSet, DomainMismatch> {
        self.same_domain(other)?;
        let sub = &other.intervals;
        let mut out = Vec::new();
        let mut j = 0;
        for &(lo, hi) in &self.intervals {
            let (mut start, hi) = (lo as u64, hi as u64);
            while j < sub.len() && (sub[j].1 as u64) < start {
                j += 1;
            }
            let mut k = j;
            while k < sub.len() && (sub[k].0 as u64) <= hi {
                let (slo, shi) = (sub[k].0 as u64, sub[k].1 as u64);
                if slo > start {
                    out.push((start as u32, (slo - 1) as u32));
                }
                start = start.max(shi + 1);
                if start > hi {
                    break;
                }
                k += 1;
            }
            if start <= hi {
                out.push((start as u32, hi as u32));
            }
        }
        Ok(AttributeSet {
            domain: self.domain,
            intervals: out,
        })
    }

    pub fn union(&self, other: &AttributeSet) -> Result<AttributeSet, DomainMismatch> {
        self.same_domain(other)?;
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Ok(AttributeSet {
            domain: self.domain,
            intervals: normalize(all),
        })
    }

    /// True iff the two sets share at least one value. Allocation free.
    pub fn intersects(&self, other: &AttributeSet) -> Result<bool, DomainMismatch> {
        self.same_domain(other)?;
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i].0.max(b[j].0) <= a[i].1.min(b[j].1) {
                return Ok(true);
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(false)
    }

    pub fn is_subset(&self, other: &AttributeSet) -> Result<bool, DomainMismatch> {
        Ok(self.difference(other)?.is_empty())
    }
}

fn normalize(mut raw: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
    raw.sort_unstable();
    let mut out: Vec<(u32, u32)> = Vec::with_capacity(raw.len());
    for (lo, hi) in raw {
        match out.last_mut() {
            Some(last) if lo as u64 <= last.1 as u64 + 1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

impl fmt::Debug for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("{}");
        }
        f.write_str("{")?;
        for (n, (lo, hi)) in self.intervals.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "[{lo},{hi}]")?;
        }
        f.write_str("}")
    }
}
