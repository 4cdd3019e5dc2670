//! Reach-set strategies.
//!
//! Every strategy is a pure function of the round, the transmitter set, the
//! graph and its own seed, so executions replay exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dualgraph::{DualGraph, Role};
use crate::engine::{keyed_unit, mix64, Adversary, ReachSet, Round};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("unknown adversary `{0}` (expected full, g-only, isolator or random:p=<float>)")]
    Unknown(String),
    #[error("activation probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("the isolator adversary needs a network with tagged receivers")]
    UntaggedNetwork,
}

/// Activates every potential edge.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullActivation;

impl Adversary for FullActivation {
    fn label(&self) -> String {
        "full".into()
    }

    fn reach_set(&self, _round: Round, _transmitting: &[bool], _g: &DualGraph) -> ReachSet {
        ReachSet::Potential
    }
}

/// Activates reliable edges only.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReliableOnly;

impl Adversary for ReliableOnly {
    fn label(&self) -> String {
        "g-only".into()
    }

    fn reach_set(&self, _round: Round, _transmitting: &[bool], _g: &DualGraph) -> ReachSet {
        ReachSet::Reliable
    }
}

/// For each receiver `w`: when exactly one `G'`-neighbor of `w` transmits,
/// only `w`'s reliable edges are active; otherwise all of `w`'s potential
/// edges are. An unreliable edge is active if any receiver endpoint
/// activates it; unreliable edges with no receiver endpoint are always
/// active.
#[derive(Debug, Clone, Copy, Default)]
pub struct Isolator;

impl Isolator {
    pub fn new(g: &DualGraph) -> Result<Self, AdversaryError> {
        if !g.is_tagged() {
            return Err(AdversaryError::UntaggedNetwork);
        }
        Ok(Isolator)
    }
}

impl Adversary for Isolator {
    fn label(&self) -> String {
        "isolator".into()
    }

    fn reach_set(&self, _round: Round, transmitting: &[bool], g: &DualGraph) -> ReachSet {
        let mut flags = g.reliable_flags().to_vec();
        let mut touched = vec![false; flags.len()];
        for w in g.receivers() {
            let adj = g.adjacency(w);
            let heard = adj.iter().filter(|a| transmitting[a.neighbor.index()]).count();
            for a in adj {
                touched[a.edge] = true;
                if heard != 1 {
                    flags[a.edge] = true;
                }
            }
        }
        for (f, t) in flags.iter_mut().zip(&touched) {
            if !t {
                *f = true;
            }
        }
        ReachSet::Explicit(flags)
    }
}

/// Activates each unreliable edge independently with probability `p`,
/// keyed by `(seed, round, edge)`.
#[derive(Debug, Clone, Copy)]
pub struct RandomActivation {
    p: f64,
    seed: u64,
}

impl RandomActivation {
    pub fn new(p: f64, seed: u64) -> Result<Self, AdversaryError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(AdversaryError::InvalidProbability(p));
        }
        Ok(RandomActivation { p, seed })
    }
}

impl Adversary for RandomActivation {
    fn label(&self) -> String {
        format!("random:p={}", self.p)
    }

    fn reach_set(&self, round: Round, _transmitting: &[bool], g: &DualGraph) -> ReachSet {
        let flags = g
            .reliable_flags()
            .iter()
            .enumerate()
            .map(|(i, &rel)| rel || keyed_unit(self.seed, round, i as u64) < self.p)
            .collect();
        ReachSet::Explicit(flags)
    }
}

/// Parsed adversary configuration string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AdversaryKind {
    Full,
    ReliableOnly,
    Isolator,
    Random { p: f64 },
}

impl AdversaryKind {
    /// Instantiates the strategy for `g`. The random strategy derives its
    /// seed from the run seed so that it is independent of process coins.
    pub fn build(self, g: &DualGraph, run_seed: u64) -> Result<Box<dyn Adversary>, AdversaryError> {
        Ok(match self {
            AdversaryKind::Full => Box::new(FullActivation),
            AdversaryKind::ReliableOnly => Box::new(ReliableOnly),
            AdversaryKind::Isolator => Box::new(Isolator::new(g)?),
            AdversaryKind::Random { p } => Box::new(RandomActivation::new(p, mix64(run_seed ^ 0xA5A5_5A5A_0F0F_F0F0))?),
        })
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryKind::Full => f.write_str("full"),
            AdversaryKind::ReliableOnly => f.write_str("g-only"),
            AdversaryKind::Isolator => f.write_str("isolator"),
            AdversaryKind::Random { p } => write!(f, "random:p={p}"),
        }
    }
}

impl FromStr for AdversaryKind {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(AdversaryKind::Full),
            "g-only" => Ok(AdversaryKind::ReliableOnly),
            "isolator" => Ok(AdversaryKind::Isolator),
            _ => {
                let p: f64 = s
                    .strip_prefix("random:p=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| AdversaryError::Unknown(s.to_string()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(AdversaryError::InvalidProbability(p));
                }
                Ok(AdversaryKind::Random { p })
            }
        }
    }
}

impl TryFrom<String> for AdversaryKind {
    type Error = AdversaryError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AdversaryKind> for String {
    fn from(k: AdversaryKind) -> String {
        k.to_string()
    }
}

/// Receivers of `g` that hear exactly one transmitting `G'`-neighbor.
pub fn isolated_receivers(g: &DualGraph, transmitting: &[bool]) -> Vec<bool> {
    g.nodes()
        .map(|w| {
            g.role(w) == Role::Receiver
                && g.adjacency(w).iter().filter(|a| transmitting[a.neighbor.index()]).count() == 1
        })
        .collect()
}
