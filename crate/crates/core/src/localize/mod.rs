//! Fault localization from end-host drop statistics: attribute per-connection
//! retransmit counts onto predicted paths (splitting evenly across mid-update
//! candidates), then run greedy coordinate descent on the L1 mis-prediction
//! objective to flag lossy components.

mod attribute;
mod greedy;
mod median;
pub mod oracle;

pub use attribute::{attribute_drops, AttributedStats, AttributionInput, HostTimeline};
pub use greedy::{localize, loss_objective, ComponentRate, LocalizerConfig};
pub use median::best_rate_for_component;

use crate::net::{ComponentId, HostId};
use crate::predict::ConnKey;
use serde::{Deserialize, Serialize};

/// Per-connection counters for one aggregation window, as collected at the
/// sender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnStats {
    pub conn: ConnKey,
    pub src_host: HostId,
    pub window_start_ns: u64,
    pub window_end_ns: u64,
    pub pkts_sent: u64,
    pub pkts_retrans: u64,
}

/// Interned path table: observation rows reference paths by index, and each
/// path knows its component set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PathRegistry {
    /// Component set per path id, sorted.
    pub components: Vec<Vec<ComponentId>>,
    keys: Vec<Vec<crate::net::LinkId>>,
}

impl PathRegistry {
    pub fn intern(&mut self, key: Vec<crate::net::LinkId>, components: Vec<ComponentId>) -> u32 {
        if let Some(i) = self.keys.iter().position(|k| *k == key) {
            return i as u32;
        }
        self.keys.push(key);
        self.components.push(components);
        (self.keys.len() - 1) as u32
    }

    pub fn key(&self, id: u32) -> &[crate::net::LinkId] {
        &self.keys[id as usize]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// One aggregated observation: a forward path with (possibly fractional)
/// transmitted and dropped packet mass, plus the reverse path its ACKs take.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathObservation {
    pub forward: u32,
    pub reverse: Option<u32>,
    pub transmitted: f64,
    pub dropped: f64,
}

/// Standard precision/recall over flagged component sets. An empty flag set
/// has vacuous precision 1.0; empty ground truth with empty flags is (1, 1).
pub fn precision_recall(
    flagged: &[ComponentId],
    ground_truth: &std::collections::BTreeSet<ComponentId>,
) -> (f64, f64) {
    let tp = flagged.iter().filter(|c| ground_truth.contains(c)).count() as f64;
    let precision = if flagged.is_empty() {
        1.0
    } else {
        tp / flagged.len() as f64
    };
    let recall = if ground_truth.is_empty() {
        1.0
    } else {
        tp / ground_truth.len() as f64
    };
    (precision, recall)
}
