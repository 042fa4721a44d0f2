//! End-host path prediction: chain per-switch forwarding predictions over a
//! versioned state snapshot, derive reverse paths, invert hash decisions, and
//! craft headers that map onto a chosen path.

mod craft;
mod invert;
mod rewrite;

pub use craft::{craft_header, CraftOutcome};
pub use invert::{invert_switch_choice, MutableBitsSpec, SteerField};
pub use rewrite::{plan_rewrite, ConnKey, RewriteAction, RewritePlan, RewriteRule};

use crate::net::{HostId, NodeId, Path, Topology};
use crate::pipeline::{forward, ForwardDecision, PacketHeader};
use crate::state::{Epoch, HostUpdate, NetworkStateVersion};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PredictError {
    #[error("prediction reaches a drop: {0:?}")]
    PredictDrop(DropReason),
    #[error("no header found within {attempts} attempts")]
    NotFound { attempts: u32 },
    #[error("{have} mutable bits < {need} needed for the path count")]
    InsufficientBits { have: u32, need: u32 },
    #[error("target link is not a member of the group")]
    TargetNotInGroup,
    #[error("header does not resolve to a known host")]
    UnknownHost,
    #[error("out-of-band rewrite agreement timed out")]
    AgreementTimeout,
    #[error("reserved port")]
    ReservedPort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NoRoute,
    Ttl,
    L2,
}

fn chain(
    state: &NetworkStateVersion,
    topo: &Topology,
    h: &PacketHeader,
    src: HostId,
) -> Result<(Vec<crate::net::Hop>, Result<HostId, DropReason>), PredictError> {
    let src_host = topo
        .hosts
        .get(src.0 as usize)
        .ok_or(PredictError::UnknownHost)?;
    let mut header = *h;
    let mut switch = topo.tor_of_rack(src_host.rack);
    let mut ingress = src_host.uplink;
    let mut hops = Vec::with_capacity(5);
    // The chain is bounded by TTL, belt for corrupt states.
    for _ in 0..=header.ttl as usize {
        match forward(&state.states[switch.0 as usize], &header) {
            ForwardDecision::DeliverLocal(egress, _) => {
                hops.push(crate::net::Hop {
                    switch,
                    ingress,
                    egress,
                });
                let NodeId::Host(dst) = topo.link(egress).dst else {
                    return Ok((hops, Err(DropReason::NoRoute)));
                };
                return Ok((hops, Ok(dst)));
            }
            ForwardDecision::Egress(egress, next) => {
                hops.push(crate::net::Hop {
                    switch,
                    ingress,
                    egress,
                });
                let NodeId::Switch(next_switch) = topo.link(egress).dst else {
                    return Ok((hops, Err(DropReason::NoRoute)));
                };
                switch = next_switch;
                ingress = egress;
                header = next;
            }
            ForwardDecision::DropNoRoute => {
                hops.push(crate::net::Hop {
                    switch,
                    ingress,
                    egress: ingress,
                });
                return Ok((hops, Err(DropReason::NoRoute)));
            }
            ForwardDecision::DropTtl => {
                hops.push(crate::net::Hop {
                    switch,
                    ingress,
                    egress: ingress,
                });
                return Ok((hops, Err(DropReason::Ttl)));
            }
            ForwardDecision::DropL2 => {
                hops.push(crate::net::Hop {
                    switch,
                    ingress,
                    egress: ingress,
                });
                return Ok((hops, Err(DropReason::L2)));
            }
        }
    }
    Ok((hops, Err(DropReason::Ttl)))
}

/// Predict the exact path `(state, h)` produces from `src`, by iteratively
/// chaining the per-switch forwarding function. Terminates within the TTL.
pub fn predict_path(
    state: &NetworkStateVersion,
    topo: &Topology,
    h: &PacketHeader,
    src: HostId,
) -> Result<Path, PredictError> {
    let (hops, outcome) = chain(state, topo, h, src)?;
    match outcome {
        Ok(dst) => Ok(Path { src, dst, hops }),
        Err(reason) => Err(PredictError::PredictDrop(reason)),
    }
}

/// A possibly-partial route: the links and components a packet crosses up to
/// delivery or the drop point. Drop-point routes still implicate the
/// components the packet reached, which is what attribution needs for
/// blackholed traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTrace {
    pub links: Vec<crate::net::LinkId>,
    pub components: Vec<crate::net::ComponentId>,
    pub delivered: Option<HostId>,
}

pub fn trace_route(
    state: &NetworkStateVersion,
    topo: &Topology,
    h: &PacketHeader,
    src: HostId,
) -> Result<RouteTrace, PredictError> {
    let (hops, outcome) = chain(state, topo, h, src)?;
    let dst_ip = h.dst_lpm_key();
    let dst_rack = crate::net::RackId(((dst_ip >> 8) & 0xff) as u16);
    let src_host = topo.host(src);
    let mut links = vec![src_host.uplink];
    let mut components = Vec::with_capacity(hops.len() * 3 + 1);
    components.push(crate::net::ComponentId::Link(src_host.uplink));
    for hop in &hops {
        components.push(crate::net::ComponentId::Switch(hop.switch));
        components.push(crate::net::ComponentId::Rte {
            switch: hop.switch,
            rack: dst_rack,
        });
        if hop.egress != hop.ingress {
            links.push(hop.egress);
            components.push(crate::net::ComponentId::Link(hop.egress));
        }
    }
    components.sort_unstable();
    components.dedup();
    Ok(RouteTrace {
        links,
        components,
        delivered: outcome.ok(),
    })
}

/// Swap source and destination roles. Involution.
pub fn reverse_header(h: &PacketHeader) -> PacketHeader {
    h.reversed()
}

/// Predict the reverse path of a connection: the path its ACKs take from the
/// destination back to the source. The reverse header must carry the proper
/// gateway MAC for the destination's ToR, which this helper fixes up.
pub fn predict_reverse_path(
    state: &NetworkStateVersion,
    topo: &Topology,
    h: &PacketHeader,
) -> Result<Path, PredictError> {
    let dst_host = topo
        .host_by_ip(h.dst_lpm_key())
        .ok_or(PredictError::UnknownHost)?;
    let mut rev = reverse_header(h);
    rev.src_mac = dst_host.mac;
    rev.dst_mac = topo
        .switch(topo.tor_of_rack(dst_host.rack))
        .mac;
    rev.ttl = 64;
    predict_path(state, topo, &rev, dst_host.id)
}

/// A qualified prediction: a primary path plus, during mid-update windows,
/// every candidate version's path.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub header: PacketHeader,
    pub version: u64,
    pub epoch: Epoch,
    pub candidates: Vec<(u64, Result<Path, PredictError>)>,
}

/// Predict under epoch uncertainty: `timeline` is the host's update receipt
/// history, `q_ns` the send time. Outside mid-update windows `candidates`
/// has exactly one entry.
pub fn predict_with_epoch(
    snapshots: &[NetworkStateVersion],
    topo: &Topology,
    timeline: &[HostUpdate],
    t1_ns: u64,
    t2_ns: u64,
    h: &PacketHeader,
    src: HostId,
    q_ns: u64,
) -> Prediction {
    let versions =
        crate::state::versions_for_interval(timeline, 0, t1_ns, t2_ns, q_ns, q_ns + 1);
    let epoch = if versions.len() > 1 {
        Epoch::MidUpdate
    } else {
        // Relative to the most recent update at or before q, if any.
        match timeline.iter().rev().find(|u| u.recv_ns <= q_ns) {
            Some(u) => crate::state::classify_epoch(u.recv_ns, t1_ns, t2_ns, q_ns),
            None => Epoch::PreUpdate,
        }
    };
    let candidates: Vec<(u64, Result<Path, PredictError>)> = versions
        .iter()
        .map(|&v| {
            let snap = &snapshots[v as usize];
            (v, predict_path(snap, topo, h, src))
        })
        .collect();
    Prediction {
        header: *h,
        version: *versions.last().expect("at least one version"),
        epoch,
        candidates,
    }
}

/// Predict many headers at once. Parallel across headers when the `parallel`
/// feature is enabled; output order matches input order either way.
pub fn predict_batch(
    state: &NetworkStateVersion,
    topo: &Topology,
    headers: &[(HostId, PacketHeader)],
) -> Vec<Result<Path, PredictError>> {
    #[cfg(feature = "parallel")]
    {
        headers
            .par_iter()
            .map(|(src, h)| predict_path(state, topo, h, *src))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        headers
            .iter()
            .map(|(src, h)| predict_path(state, topo, h, *src))
            .collect()
    }
}

/// Canonical host-originated header for a (src, dst, ports) tuple: proper
/// MACs for the first hop and default TTL.
pub fn host_header(
    topo: &Topology,
    src: HostId,
    dst: HostId,
    src_port: u16,
    dst_port: u16,
) -> PacketHeader {
    let (s, d) = (topo.host(src), topo.host(dst));
    let mut h = PacketHeader::tcp_v4(s.ip, d.ip, src_port, dst_port);
    h.src_mac = s.mac;
    h.dst_mac = topo.switch(topo.tor_of_rack(s.rack)).mac;
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_clos, desk_spec, enumerate_paths, testbed_spec};
    use crate::pipeline::{build_switch_states, HashProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snapshot(topo: &Topology) -> NetworkStateVersion {
        NetworkStateVersion {
            version: 0,
            states: build_switch_states(topo, &HashProfile::default()),
            timestamp_ns: 0,
        }
    }

    #[test]
    fn same_rack_prediction_ignores_ports() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let snap = snapshot(&topo);
        for port in [1024u16, 5555, 60000] {
            let h = host_header(&topo, HostId(0), HostId(1), port, 80);
            let p = predict_path(&snap, &topo, &h, HostId(0)).unwrap();
            assert_eq!(p.hops.len(), 1);
            assert_eq!(p.dst, HostId(1));
        }
    }

    #[test]
    fn prediction_lands_on_an_enumerated_path() {
        let topo = build_clos(&testbed_spec(), 0).unwrap();
        let snap = snapshot(&topo);
        let paths = enumerate_paths(&topo, HostId(0), HostId(47)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let h = host_header(&topo, HostId(0), HostId(47), rng.gen_range(1024..=u16::MAX), 80);
            let p = predict_path(&snap, &topo, &h, HostId(0)).unwrap();
            assert!(paths.iter().any(|q| q.key() == p.key()));
        }
    }

    #[test]
    fn ttl_too_small_predicts_drop() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let snap = snapshot(&topo);
        // Host 0 to a different-cluster host crosses 5 switches.
        let mut h = host_header(&topo, HostId(0), HostId(11), 1024, 80);
        h.ttl = 2;
        assert_eq!(
            predict_path(&snap, &topo, &h, HostId(0)),
            Err(PredictError::PredictDrop(DropReason::Ttl))
        );
    }

    #[test]
    fn reverse_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let h = PacketHeader::tcp_v4(rng.gen(), rng.gen(), rng.gen(), rng.gen());
            assert_eq!(reverse_header(&reverse_header(&h)), h);
        }
        let h = PacketHeader::tcp_v4(0x0a000001, 0x0a000102, 5000, 80);
        let r = reverse_header(&h);
        assert_eq!(r.ports, Some((80, 5000)));
        assert_eq!(r.src_lpm_key(), 0x0a000102);
    }

    #[test]
    fn reverse_path_endpoints_swap() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let snap = snapshot(&topo);
        let h = host_header(&topo, HostId(0), HostId(7), 3333, 80);
        let fwd = predict_path(&snap, &topo, &h, HostId(0)).unwrap();
        let rev = predict_reverse_path(&snap, &topo, &h).unwrap();
        assert_eq!((rev.src, rev.dst), (fwd.dst, fwd.src));
    }

    #[test]
    fn mid_update_carries_both_candidates() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let snap0 = snapshot(&topo);
        // Version 1: drop one uplink member on the source ToR.
        let mut states = snap0.states.clone();
        let tor = &states[0];
        let g = tor
            .groups
            .iter()
            .find(|g| g.members.len() > 1)
            .unwrap()
            .clone();
        states[0].groups[g.group_id as usize] = g.remove_member(g.members[0]).unwrap();
        let snap1 = NetworkStateVersion {
            version: 1,
            states,
            timestamp_ns: 1000,
        };
        let snaps = vec![snap0, snap1];
        let timeline = [HostUpdate {
            version: 1,
            recv_ns: 2000,
        }];
        let h = host_header(&topo, HostId(0), HostId(11), 1024, 80);
        // Query inside the mid-update window [2000 - 1500, 2000).
        let pred = predict_with_epoch(&snaps, &topo, &timeline, 1000, 500, &h, HostId(0), 1500);
        assert_eq!(pred.epoch, Epoch::MidUpdate);
        assert_eq!(pred.candidates.len(), 2);
        // Pre and post are single-candidate.
        let pre = predict_with_epoch(&snaps, &topo, &timeline, 1000, 500, &h, HostId(0), 100);
        assert_eq!(pre.epoch, Epoch::PreUpdate);
        assert_eq!(pre.candidates.len(), 1);
        let post = predict_with_epoch(&snaps, &topo, &timeline, 1000, 500, &h, HostId(0), 2000);
        assert_eq!(post.epoch, Epoch::PostUpdate);
        assert_eq!(post.candidates.len(), 1);
        assert_eq!(post.version, 1);
    }
}
