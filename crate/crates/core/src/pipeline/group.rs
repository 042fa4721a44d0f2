//! ECMP multipath groups and their failover remapping policies.

use super::PipelineError;
use crate::net::LinkId;
use serde::{Deserialize, Serialize};

/// Slot-table size multiplier for resilient hashing. 64 slots per potential
/// member keeps imbalance after repeated churn under 2%.
pub const SLOTS_PER_MEMBER: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailoverPolicy {
    /// `members[hash % len]`; membership changes shift indices and remap
    /// most flows.
    ModN,
    /// Fixed-size slot table; membership changes rebind only the slots of
    /// the affected member.
    ResilientHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathGroup {
    pub group_id: u32,
    pub members: Vec<LinkId>,
    pub policy: FailoverPolicy,
    /// Sizing bound for the slot table; constant across membership changes.
    pub max_members: u32,
    /// slot → member link. Empty under ModN.
    pub slots: Vec<LinkId>,
}

impl MultipathGroup {
    pub fn new(
        group_id: u32,
        members: Vec<LinkId>,
        policy: FailoverPolicy,
        max_members: u32,
    ) -> Result<Self, PipelineError> {
        if members.is_empty() {
            return Err(PipelineError::EmptyGroup);
        }
        let max_members = max_members.max(members.len() as u32);
        let slots = match policy {
            FailoverPolicy::ModN => Vec::new(),
            FailoverPolicy::ResilientHash => {
                let n_slots = (SLOTS_PER_MEMBER * max_members) as usize;
                (0..n_slots).map(|i| members[i % members.len()]).collect()
            }
        };
        Ok(MultipathGroup {
            group_id,
            members,
            policy,
            max_members,
            slots,
        })
    }

    pub fn single(group_id: u32, member: LinkId) -> Self {
        MultipathGroup::new(group_id, vec![member], FailoverPolicy::ModN, 1)
            .expect("singleton group")
    }

    /// Pure member selection for a hash value.
    pub fn select(&self, hash: u32) -> Result<LinkId, PipelineError> {
        if self.members.is_empty() {
            return Err(PipelineError::EmptyGroup);
        }
        Ok(match self.policy {
            FailoverPolicy::ModN => self.members[hash as usize % self.members.len()],
            FailoverPolicy::ResilientHash => self.slots[hash as usize % self.slots.len()],
        })
    }

    pub fn contains(&self, link: LinkId) -> bool {
        self.members.contains(&link)
    }

    /// Remove a member under the group's policy. ModN edits the member list
    /// in place (indices shift); resilient hashing redistributes only the
    /// removed member's slots, round-robin over survivors.
    pub fn remove_member(&self, link: LinkId) -> Result<MultipathGroup, PipelineError> {
        if !self.contains(link) {
            return Err(PipelineError::UnknownMember);
        }
        if self.members.len() == 1 {
            return Err(PipelineError::LastMember);
        }
        let mut g = self.clone();
        g.members.retain(|&m| m != link);
        if g.policy == FailoverPolicy::ResilientHash {
            let mut rr = 0usize;
            for slot in g.slots.iter_mut() {
                if *slot == link {
                    *slot = g.members[rr % g.members.len()];
                    rr += 1;
                }
            }
        }
        Ok(g)
    }

    /// Add a member. Resilient hashing steals slots from the currently
    /// richest owners until counts are equal within ±1; untouched slots keep
    /// their binding.
    pub fn add_member(&self, link: LinkId) -> Result<MultipathGroup, PipelineError> {
        if self.contains(link) {
            return Ok(self.clone());
        }
        let mut g = self.clone();
        g.members.push(link);
        g.max_members = g.max_members.max(g.members.len() as u32);
        if g.policy == FailoverPolicy::ResilientHash {
            let target = g.slots.len() / g.members.len();
            let mut stolen = 0usize;
            while stolen < target {
                // Steal one slot from the member owning the most.
                let victim = *g
                    .members
                    .iter()
                    .take(g.members.len() - 1)
                    .max_by_key(|&&m| g.slots.iter().filter(|&&s| s == m).count())
                    .expect("nonempty");
                let Some(slot) = g.slots.iter_mut().find(|s| **s == victim) else {
                    break;
                };
                *slot = link;
                stolen += 1;
            }
        }
        Ok(g)
    }

    /// Per-member slot ownership, in member order.
    pub fn slot_counts(&self) -> Vec<(LinkId, usize)> {
        self.members
            .iter()
            .map(|&m| (m, self.slots.iter().filter(|&&s| s == m).count()))
            .collect()
    }
}
