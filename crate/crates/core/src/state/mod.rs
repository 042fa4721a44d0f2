//! Versioned network-state dissemination: switch diffs in, monotone global
//! versions out, with per-host delivery tracking, ACK deadlines, checkpoint
//! staleness, and the pre/mid/post-update epoch classification end hosts use
//! to qualify their predictions.

mod service;

pub use service::{
    classify_epoch, replay_log, state_hash, versions_for_interval, AckOutcome, DeliveryRecord,
    Epoch, HostUpdate, NetworkStateVersion, StateLogRecord, StateService,
};

use crate::net::{LinkId, SwitchId};
use crate::pipeline::{HashConfig, RouteAction, SwitchState};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StateError {
    #[error("diff base version {got} does not match switch {switch} at {expected}")]
    VersionSkew {
        switch: SwitchId,
        expected: u64,
        got: u64,
    },
    #[error("empty diff rejected")]
    EmptyDiff,
    #[error("no delivery record for host {0} version {1}")]
    UnknownDelivery(u32, u64),
    #[error("edit failed: {0}")]
    BadEdit(String),
}

/// One field-level edit to a switch's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateEdit {
    GroupRemoveMember { group: u32, link: LinkId },
    GroupAddMember { group: u32, link: LinkId },
    SetRouteAction { prefix: u32, len: u8, action: RouteAction },
    SetHashConfig(HashConfig),
    SetFdbEntry { mac: u64, link: LinkId },
}

/// A switch-originated state change: applying `changes` to the version
/// `version_from` state yields `version_to = version_from + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDiff {
    pub switch_id: SwitchId,
    pub version_from: u64,
    pub version_to: u64,
    pub changes: Vec<StateEdit>,
}

impl StateDiff {
    pub fn new(switch_id: SwitchId, version_from: u64, changes: Vec<StateEdit>) -> Self {
        StateDiff {
            switch_id,
            version_from,
            version_to: version_from + 1,
            changes,
        }
    }
}

/// Apply a diff, producing the next per-switch version.
pub fn apply_diff(state: &SwitchState, diff: &StateDiff) -> Result<SwitchState, StateError> {
    if diff.version_from != state.version {
        return Err(StateError::VersionSkew {
            switch: state.switch_id,
            expected: state.version,
            got: diff.version_from,
        });
    }
    if diff.changes.is_empty() {
        return Err(StateError::EmptyDiff);
    }
    let mut next = state.clone();
    for edit in &diff.changes {
        apply_edit(&mut next, edit)?;
    }
    next.version = diff.version_to;
    Ok(next)
}

fn apply_edit(state: &mut SwitchState, edit: &StateEdit) -> Result<(), StateError> {
    match edit {
        StateEdit::GroupRemoveMember { group, link } => {
            let g = state
                .groups
                .get(*group as usize)
                .ok_or_else(|| StateError::BadEdit(format!("no group {group}")))?;
            state.groups[*group as usize] = g
                .remove_member(*link)
                .map_err(|e| StateError::BadEdit(e.to_string()))?;
        }
        StateEdit::GroupAddMember { group, link } => {
            let g = state
                .groups
                .get(*group as usize)
                .ok_or_else(|| StateError::BadEdit(format!("no group {group}")))?;
            state.groups[*group as usize] = g
                .add_member(*link)
                .map_err(|e| StateError::BadEdit(e.to_string()))?;
        }
        StateEdit::SetRouteAction {
            prefix,
            len,
            action,
        } => {
            let entry = state
                .l3_table
                .iter_mut()
                .find(|e| e.prefix == *prefix && e.len == *len)
                .ok_or_else(|| StateError::BadEdit(format!("no route {prefix:#x}/{len}")))?;
            entry.action = *action;
        }
        StateEdit::SetHashConfig(cfg) => {
            cfg.validate()
                .map_err(|e| StateError::BadEdit(e.to_string()))?;
            state.hash_config = cfg.clone();
        }
        StateEdit::SetFdbEntry { mac, link } => {
            state.fdb.retain(|&(m, _)| m != *mac);
            state.fdb.push((*mac, *link));
        }
    }
    Ok(())
}
