//! Attribute per-connection counters onto predicted paths, splitting evenly
//! across every candidate state version the sender could not tell apart.

use super::{ConnStats, PathObservation, PathRegistry};
use crate::net::Topology;
use crate::pipeline::{IpAddrs, PacketHeader, PROTO_TCP, PROTO_UDP};
use crate::predict::{trace_route, ConnKey};
use crate::state::{versions_for_interval, HostUpdate, NetworkStateVersion};
use std::collections::BTreeMap;

/// What one host knew and when: update receipts plus windows its own
/// checkpointing flagged as unreliable.
#[derive(Debug, Clone, Default)]
pub struct HostTimeline {
    pub updates: Vec<HostUpdate>,
    /// [from, to) intervals where this host's predictions are suspect.
    pub stale: Vec<(u64, u64)>,
}

impl HostTimeline {
    fn is_stale(&self, start_ns: u64, end_ns: u64) -> bool {
        self.stale
            .iter()
            .any(|&(from, to)| start_ns < to && from < end_ns)
    }
}

pub struct AttributionInput<'a> {
    pub topo: &'a Topology,
    pub snapshots: &'a [NetworkStateVersion],
    /// Indexed by host id.
    pub hosts: &'a [HostTimeline],
    pub t1_ns: u64,
    pub t2_ns: u64,
}

#[derive(Debug, Clone, Default)]
pub struct AttributedStats {
    pub registry: PathRegistry,
    pub observations: Vec<PathObservation>,
    /// Connection-windows routed to the stale bucket and excluded.
    pub excluded_rows: u64,
    pub excluded_pkts: u64,
}

fn header_for(topo: &Topology, conn: &ConnKey) -> Option<(crate::net::HostId, PacketHeader)> {
    let src = topo.host_by_ip(conn.src_ip)?;
    let ports = matches!(conn.proto, PROTO_TCP | PROTO_UDP)
        .then_some((conn.src_port, conn.dst_port));
    let h = PacketHeader {
        src_mac: src.mac,
        dst_mac: topo.switch(topo.tor_of_rack(src.rack)).mac,
        addrs: IpAddrs::V4 {
            src: conn.src_ip,
            dst: conn.dst_ip,
        },
        proto: conn.proto,
        ports,
        ttl: 64,
        ecn: 0,
        payload_len: 0,
    };
    Some((src.id, h))
}

/// Resolve each connection-window against the sender's state view and fold
/// the counters into per-(forward, reverse) path observations. Rows whose
/// window intersects a stale period are excluded and tallied.
pub fn attribute_drops(stats: &[ConnStats], input: &AttributionInput) -> AttributedStats {
    let mut out = AttributedStats::default();
    // (forward, reverse) → accumulated (T, D).
    let mut acc: BTreeMap<(u32, Option<u32>), (f64, f64)> = BTreeMap::new();

    for row in stats {
        let Some((src, header)) = header_for(input.topo, &row.conn) else {
            out.excluded_rows += 1;
            out.excluded_pkts += row.pkts_sent;
            continue;
        };
        let timeline = &input.hosts[src.0 as usize];
        if timeline.is_stale(row.window_start_ns, row.window_end_ns) {
            out.excluded_rows += 1;
            out.excluded_pkts += row.pkts_sent;
            continue;
        }
        let versions = versions_for_interval(
            &timeline.updates,
            0,
            input.t1_ns,
            input.t2_ns,
            row.window_start_ns,
            row.window_end_ns,
        );
        // Candidate (forward, reverse) per version; identical routes merge
        // their shares.
        let mut routed: Vec<(u32, Option<u32>)> = Vec::with_capacity(versions.len());
        for &v in &versions {
            let Some(snap) = input.snapshots.get(v as usize) else {
                continue;
            };
            let Ok(fwd) = trace_route(snap, input.topo, &header, src) else {
                continue;
            };
            let fwd_id = out
                .registry
                .intern(fwd.links.clone(), fwd.components.clone());
            let rvs_id = fwd.delivered.and_then(|dst| {
                let rkey = ConnKey {
                    src_ip: row.conn.dst_ip,
                    dst_ip: row.conn.src_ip,
                    proto: row.conn.proto,
                    src_port: row.conn.dst_port,
                    dst_port: row.conn.src_port,
                };
                let (rsrc, rheader) = header_for(input.topo, &rkey)?;
                debug_assert_eq!(rsrc, dst);
                let rev = trace_route(snap, input.topo, &rheader, rsrc).ok()?;
                Some(out.registry.intern(rev.links, rev.components))
            });
            routed.push((fwd_id, rvs_id));
        }
        if routed.is_empty() {
            out.excluded_rows += 1;
            out.excluded_pkts += row.pkts_sent;
            continue;
        }
        let n = routed.len() as f64;
        let t_share = row.pkts_sent as f64 / n;
        let d_share = row.pkts_retrans as f64 / n;
        for key in routed {
            let e = acc.entry(key).or_insert((0.0, 0.0));
            e.0 += t_share;
            e.1 += d_share;
        }
    }

    out.observations = acc
        .into_iter()
        .map(|((forward, reverse), (t, d))| PathObservation {
            forward,
            reverse,
            transmitted: t,
            dropped: d,
        })
        .collect();
    out
}
