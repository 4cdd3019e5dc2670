//! Minimal covering-schedule search over a network file.

use anyhow::Result;
use serde::{Deserialize, Serialize};

use localcast::dualgraph::DualGraph;
use localcast::schedules::{covers, min_covering_length, TransmissionSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub n: usize,
    pub senders: usize,
    pub receivers: usize,
    pub max_len: usize,
    /// `None` when no covering schedule of length at most `max_len` exists.
    pub min_length: Option<usize>,
    pub witness: Option<TransmissionSchedule>,
}

pub fn schedule_search(g: &DualGraph, max_len: usize) -> Result<SearchReport> {
    let found = min_covering_length(g, max_len)?;
    if let Some(res) = &found {
        debug_assert!(covers(&res.witness, g)?);
    }
    Ok(SearchReport {
        n: g.n(),
        senders: g.senders().len(),
        receivers: g.receivers().len(),
        max_len,
        min_length: found.as_ref().map(|r| r.length),
        witness: found.map(|r| r.witness),
    })
}

impl SearchReport {
    pub fn summary_line(&self) -> String {
        match (&self.min_length, &self.witness) {
            (Some(len), Some(w)) => {
                format!("min covering length {len}, witness {}", serde_json::to_string(w).unwrap_or_default())
            }
            _ => format!("none <= {}", self.max_len),
        }
    }
}
