//! The logically centralized state service and the host-side epoch rules.

use super::{apply_diff, StateDiff, StateError};
use crate::net::HostId;
use crate::pipeline::SwitchState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A whole-network snapshot with a monotone version number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStateVersion {
    pub version: u64,
    /// Indexed by switch id.
    pub states: Vec<SwitchState>,
    pub timestamp_ns: u64,
}

/// Short identity hash of a switch state, used by the liveness/sync ping.
pub fn state_hash(state: &SwitchState) -> u64 {
    let bytes = serde_json::to_vec(state).expect("state serializes");
    let digest = Sha256::digest(&bytes);
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub host: HostId,
    pub version: u64,
    pub sent_at_ns: u64,
    pub deadline_ns: u64,
    pub acked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    Acked,
    /// Predictions in [from, to) are potentially inaccurate.
    StaleWindow { from_ns: u64, to_ns: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Epoch {
    PreUpdate,
    MidUpdate,
    PostUpdate,
}

/// Classify a query at time `q` against an update received at time `t` with
/// propagation bounds `t1` (switch→service) and `t2` (service→host).
pub fn classify_epoch(t_ns: u64, t1_ns: u64, t2_ns: u64, q_ns: u64) -> Epoch {
    let window = t1_ns + t2_ns;
    let mid_start = t_ns.saturating_sub(window);
    if q_ns >= t_ns {
        Epoch::PostUpdate
    } else if q_ns >= mid_start {
        Epoch::MidUpdate
    } else {
        Epoch::PreUpdate
    }
}

/// An update as seen by one host: version `version` received at `recv_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostUpdate {
    pub version: u64,
    pub recv_ns: u64,
}

/// Candidate state versions for packets sent during `[start, end)`, given
/// the host's update receipt timeline (ascending by time). The set contains
/// the version in force at `start` plus every version whose mid-update
/// window intersects the interval.
pub fn versions_for_interval(
    timeline: &[HostUpdate],
    base_version: u64,
    t1_ns: u64,
    t2_ns: u64,
    start_ns: u64,
    end_ns: u64,
) -> Vec<u64> {
    let window = t1_ns + t2_ns;
    let mut current = base_version;
    let mut out = Vec::new();
    for u in timeline {
        if u.recv_ns <= start_ns {
            current = current.max(u.version);
        }
    }
    out.push(current);
    for u in timeline {
        if u.version <= current {
            continue;
        }
        // Update not yet in force at `start`: it is a candidate if its
        // mid-update window [recv - (t1+t2), recv) begins before `end`.
        if u.recv_ns.saturating_sub(window) < end_ns {
            out.push(u.version);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Records emitted to `statelog.jsonl`; replaying `Init` + `Diff` records
/// reconstructs every version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateLogRecord {
    Init {
        time_ns: u64,
        version: u64,
        states: Vec<SwitchState>,
    },
    Diff {
        time_ns: u64,
        version: u64,
        diff: StateDiff,
    },
    Deliver {
        time_ns: u64,
        host: HostId,
        version: u64,
    },
    Checkpoint {
        time_ns: u64,
        host: HostId,
        version: u64,
    },
    Stale {
        host: HostId,
        from_ns: u64,
        to_ns: u64,
    },
}

/// The aggregation service. Single logical actor: callers drive it from one
/// thread (the simulator event loop) and read snapshots freely.
#[derive(Debug, Clone)]
pub struct StateService {
    current: NetworkStateVersion,
    /// Full snapshot per version, index = version.
    snapshots: Vec<NetworkStateVersion>,
    deliveries: Vec<DeliveryRecord>,
    /// Last two checkpoint times per host.
    checkpoints: Vec<(u64, u64)>,
    /// Open staleness per host: start of the unacknowledged period.
    stale_since: Vec<Option<u64>>,
    n_hosts: u32,
    pub t1_bound_ns: u64,
    pub t2_bound_ns: u64,
    pub ack_timeout_ns: u64,
    log: Vec<StateLogRecord>,
}

impl StateService {
    pub fn new(
        states: Vec<SwitchState>,
        n_hosts: u32,
        t1_bound_ns: u64,
        t2_bound_ns: u64,
        ack_timeout_ns: u64,
    ) -> Self {
        let current = NetworkStateVersion {
            version: 0,
            states,
            timestamp_ns: 0,
        };
        let log = vec![StateLogRecord::Init {
            time_ns: 0,
            version: 0,
            states: current.states.clone(),
        }];
        StateService {
            snapshots: vec![current.clone()],
            current,
            deliveries: Vec::new(),
            checkpoints: vec![(0, 0); n_hosts as usize],
            stale_since: vec![None; n_hosts as usize],
            n_hosts,
            t1_bound_ns,
            t2_bound_ns,
            ack_timeout_ns,
            log,
        }
    }

    pub fn version(&self) -> u64 {
        self.current.version
    }

    pub fn current(&self) -> &NetworkStateVersion {
        &self.current
    }

    pub fn snapshot_at(&self, version: u64) -> Option<&NetworkStateVersion> {
        self.snapshots.get(version as usize)
    }

    pub fn log(&self) -> &[StateLogRecord] {
        &self.log
    }

    /// Accept a switch diff: bump the global version and open one delivery
    /// record per host. The caller schedules the actual broadcasts.
    pub fn ingest_diff(
        &mut self,
        diff: StateDiff,
        now_ns: u64,
    ) -> Result<(u64, Vec<DeliveryRecord>), StateError> {
        let state = &self.current.states[diff.switch_id.0 as usize];
        let next_switch = apply_diff(state, &diff)?;
        self.current.states[diff.switch_id.0 as usize] = next_switch;
        self.current.version += 1;
        self.current.timestamp_ns = now_ns;
        self.snapshots.push(self.current.clone());
        self.log.push(StateLogRecord::Diff {
            time_ns: now_ns,
            version: self.current.version,
            diff,
        });
        let version = self.current.version;
        let mut sched = Vec::with_capacity(self.n_hosts as usize);
        for h in 0..self.n_hosts {
            let rec = DeliveryRecord {
                host: HostId(h),
                version,
                sent_at_ns: now_ns,
                deadline_ns: now_ns + self.ack_timeout_ns,
                acked: false,
            };
            self.deliveries.push(rec);
            sched.push(rec);
        }
        Ok((version, sched))
    }

    /// Out-of-band resync after a version-skew ping mismatch: replace the
    /// switch's state wholesale and version it like any other change.
    pub fn resync_switch(&mut self, state: SwitchState, now_ns: u64) -> u64 {
        let id = state.switch_id;
        self.current.states[id.0 as usize] = state;
        self.current.version += 1;
        self.current.timestamp_ns = now_ns;
        self.snapshots.push(self.current.clone());
        self.current.version
    }

    pub fn record_delivery(&mut self, host: HostId, version: u64, now_ns: u64) {
        self.log.push(StateLogRecord::Deliver {
            time_ns: now_ns,
            host,
            version,
        });
    }

    pub fn record_ack(&mut self, host: HostId, version: u64) -> Result<(), StateError> {
        let rec = self
            .deliveries
            .iter_mut()
            .find(|d| d.host == host && d.version == version)
            .ok_or(StateError::UnknownDelivery(host.0, version))?;
        rec.acked = true;
        Ok(())
    }

    /// Checkpoint-time reconciliation: all deliveries for `host` acked (or
    /// still within deadline) → `Acked`; otherwise a single stale window
    /// spanning back to the previous checkpoint, merging consecutive misses.
    pub fn ack_or_checkpoint(&mut self, host: HostId, now_ns: u64) -> AckOutcome {
        let missed = self
            .deliveries
            .iter()
            .any(|d| d.host == host && !d.acked && d.deadline_ns <= now_ns);
        let (_, last) = self.checkpoints[host.0 as usize];
        self.checkpoints[host.0 as usize] = (last, now_ns);
        if missed {
            let from_ns = match self.stale_since[host.0 as usize] {
                Some(s) => s,
                None => last,
            };
            self.stale_since[host.0 as usize] = Some(from_ns);
            let out = AckOutcome::StaleWindow {
                from_ns,
                to_ns: now_ns,
            };
            self.log.push(StateLogRecord::Stale {
                host,
                from_ns,
                to_ns: now_ns,
            });
            out
        } else {
            self.stale_since[host.0 as usize] = None;
            AckOutcome::Acked
        }
    }

    /// Full snapshot pull; clears staleness and marks missed deliveries as
    /// reconciled.
    pub fn snapshot_pull(&mut self, host: HostId, now_ns: u64) -> NetworkStateVersion {
        self.stale_since[host.0 as usize] = None;
        for d in self.deliveries.iter_mut() {
            if d.host == host {
                d.acked = true;
            }
        }
        self.log.push(StateLogRecord::Checkpoint {
            time_ns: now_ns,
            host,
            version: self.current.version,
        });
        self.current.clone()
    }
}

/// Rebuild every snapshot from a state log (the replay oracle for
/// `replay-state-log`).
pub fn replay_log(records: &[StateLogRecord]) -> Result<Vec<NetworkStateVersion>, StateError> {
    let mut snapshots: Vec<NetworkStateVersion> = Vec::new();
    for rec in records {
        match rec {
            StateLogRecord::Init {
                time_ns,
                version,
                states,
            } => snapshots.push(NetworkStateVersion {
                version: *version,
                states: states.clone(),
                timestamp_ns: *time_ns,
            }),
            StateLogRecord::Diff {
                time_ns,
                version,
                diff,
            } => {
                let last = snapshots.last().ok_or(StateError::BadEdit(
                    "diff before init record".into(),
                ))?;
                let mut next = last.clone();
                let idx = diff.switch_id.0 as usize;
                next.states[idx] = apply_diff(&next.states[idx], diff)?;
                next.version = *version;
                next.timestamp_ns = *time_ns;
                snapshots.push(next);
            }
            _ => {}
        }
    }
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_clos, desk_spec};
    use crate::pipeline::{build_switch_states, HashProfile};
    use crate::state::StateEdit;

    const MS: u64 = 1_000_000;

    fn service() -> StateService {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let states = build_switch_states(&topo, &HashProfile::default());
        StateService::new(states, topo.hosts.len() as u32, 10 * MS, 10 * MS, 100 * MS)
    }

    fn uplink_removal(svc: &StateService, switch: u32) -> StateDiff {
        let state = &svc.current().states[switch as usize];
        let group = state
            .groups
            .iter()
            .find(|g| g.members.len() > 1)
            .expect("multipath group");
        StateDiff::new(
            state.switch_id,
            state.version,
            vec![StateEdit::GroupRemoveMember {
                group: group.group_id,
                link: group.members[0],
            }],
        )
    }

    #[test]
    fn ingest_bumps_version_and_schedules_all_hosts() {
        let mut svc = service();
        let d = uplink_removal(&svc, 0);
        let (v, sched) = svc.ingest_diff(d, 5 * MS).unwrap();
        assert_eq!(v, 1);
        assert_eq!(sched.len(), 12);
        assert_eq!(svc.current().states[0].version, 1);
    }

    #[test]
    fn empty_diff_rejected_without_burning_a_version() {
        let mut svc = service();
        let d = StateDiff::new(crate::net::SwitchId(0), 0, vec![]);
        assert_eq!(svc.ingest_diff(d, 0), Err(StateError::EmptyDiff));
        assert_eq!(svc.version(), 0);
    }

    #[test]
    fn version_skew_detected() {
        let mut svc = service();
        let mut d = uplink_removal(&svc, 0);
        d.version_from = 7;
        d.version_to = 8;
        assert!(matches!(
            svc.ingest_diff(d, 0),
            Err(StateError::VersionSkew { .. })
        ));
    }

    #[test]
    fn back_to_back_diffs_version_in_ingestion_order() {
        let mut svc = service();
        let d0 = uplink_removal(&svc, 0);
        let (v1, _) = svc.ingest_diff(d0, MS).unwrap();
        let d1 = uplink_removal(&svc, 1);
        let (v2, _) = svc.ingest_diff(d1, 2 * MS).unwrap();
        assert_eq!((v1, v2), (1, 2));
        // Replay oracle: fold of the log equals stored snapshots.
        let replayed = replay_log(svc.log()).unwrap();
        assert_eq!(replayed.len(), 3);
        for (i, snap) in replayed.iter().enumerate() {
            assert_eq!(snap, svc.snapshot_at(i as u64).unwrap());
        }
    }

    #[test]
    fn epoch_boundaries() {
        // q = t → post-update.
        assert_eq!(classify_epoch(100, 10, 10, 100), Epoch::PostUpdate);
        assert_eq!(classify_epoch(100, 10, 10, 99), Epoch::MidUpdate);
        assert_eq!(classify_epoch(100, 10, 10, 80), Epoch::MidUpdate);
        assert_eq!(classify_epoch(100, 10, 10, 79), Epoch::PreUpdate);
        // Zero bounds collapse the mid window.
        assert_eq!(classify_epoch(100, 0, 0, 99), Epoch::PreUpdate);
        assert_eq!(classify_epoch(100, 0, 0, 100), Epoch::PostUpdate);
    }

    #[test]
    fn interval_candidates_cover_mid_update() {
        let timeline = [HostUpdate {
            version: 1,
            recv_ns: 100,
        }];
        // Window wholly before the mid window: only v0.
        assert_eq!(versions_for_interval(&timeline, 0, 10, 10, 0, 79), vec![0]);
        // Window straddling the mid window: both candidates.
        assert_eq!(
            versions_for_interval(&timeline, 0, 10, 10, 70, 95),
            vec![0, 1]
        );
        // Window after receipt: v1 only.
        assert_eq!(
            versions_for_interval(&timeline, 0, 10, 10, 100, 150),
            vec![1]
        );
    }

    #[test]
    fn ack_within_deadline_no_staleness() {
        let mut svc = service();
        let d = uplink_removal(&svc, 0);
        let (v, _) = svc.ingest_diff(d, MS).unwrap();
        svc.record_ack(HostId(0), v).unwrap();
        assert_eq!(svc.ack_or_checkpoint(HostId(0), 500 * MS), AckOutcome::Acked);
    }

    #[test]
    fn missed_update_yields_stale_window_merged_across_misses() {
        let mut svc = service();
        let (v1, _) = {
            let d = uplink_removal(&svc, 0);
            svc.ingest_diff(d, MS).unwrap()
        };
        let (_v2, _) = {
            let d = uplink_removal(&svc, 1);
            svc.ingest_diff(d, 2 * MS).unwrap()
        };
        // Host 0 acked neither update; both deadlines pass before checkpoint.
        let cp1 = svc.ack_or_checkpoint(HostId(0), 300 * MS);
        assert_eq!(
            cp1,
            AckOutcome::StaleWindow {
                from_ns: 0,
                to_ns: 300 * MS
            }
        );
        // Still unacked at the next checkpoint: the window extends, single
        // merged interval from the original start.
        let cp2 = svc.ack_or_checkpoint(HostId(0), 600 * MS);
        assert_eq!(
            cp2,
            AckOutcome::StaleWindow {
                from_ns: 0,
                to_ns: 600 * MS
            }
        );
        // Pull clears staleness.
        let snap = svc.snapshot_pull(HostId(0), 700 * MS);
        assert_eq!(snap.version, 2);
        assert_eq!(svc.ack_or_checkpoint(HostId(0), 900 * MS), AckOutcome::Acked);
        let _ = v1;
    }

    #[test]
    fn unknown_delivery_error() {
        let mut svc = service();
        assert_eq!(
            svc.record_ack(HostId(0), 9),
            Err(StateError::UnknownDelivery(0, 9))
        );
    }

    #[test]
    fn snapshot_pull_equals_fold_of_diffs() {
        let mut svc = service();
        for s in [0u32, 1, 2] {
            let d = uplink_removal(&svc, s);
            svc.ingest_diff(d, MS * (s as u64 + 1)).unwrap();
        }
        let pulled = svc.snapshot_pull(HostId(3), 50 * MS);
        let folded = replay_log(svc.log()).unwrap();
        assert_eq!(&pulled.states, &folded.last().unwrap().states);
        // Pull with no diffs since: identical version.
        let again = svc.snapshot_pull(HostId(3), 60 * MS);
        assert_eq!(again.version, pulled.version);
    }

    #[test]
    fn state_hash_distinguishes_versions() {
        let svc0 = service();
        let mut svc = service();
        let d = uplink_removal(&svc, 0);
        svc.ingest_diff(d, MS).unwrap();
        assert_ne!(
            state_hash(&svc0.current().states[0]),
            state_hash(&svc.current().states[0])
        );
        assert_eq!(
            state_hash(&svc0.current().states[1]),
            state_hash(&svc.current().states[1])
        );
    }

    #[test]
    fn resync_after_skew_restores_consistency() {
        let mut svc = service();
        // Simulate a switch that changed behind the service's back.
        let mut rogue = svc.current().states[0].clone();
        rogue.version = 5;
        let v = svc.resync_switch(rogue.clone(), 10 * MS);
        assert_eq!(v, 1);
        assert_eq!(svc.current().states[0], rogue);
    }
}
