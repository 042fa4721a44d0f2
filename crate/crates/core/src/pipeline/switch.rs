//! Versioned per-switch configuration and the forwarding function.

use super::group::{FailoverPolicy, MultipathGroup};
use super::hash::{ecmp_hash_lenient, lookup_table_from_seed, HashConfig, HashFunction};
use super::header::{PacketHeader, BROADCAST_MAC};
use super::PipelineError;
use crate::net::{LinkId, NodeId, RackId, SwitchId, Tier, Topology};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteAction {
    /// Resolve the egress through a multipath group (singletons included).
    Group(u32),
    /// Explicit blackhole.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub prefix: u32,
    pub len: u8,
    /// Destination rack this entry serves; the granularity at which
    /// routing-table entries fail.
    pub rack: RackId,
    pub action: RouteAction,
}

impl RouteEntry {
    fn matches(&self, ip: u32) -> bool {
        let mask = if self.len == 0 {
            0
        } else {
            u32::MAX << (32 - self.len)
        };
        ip & mask == self.prefix & mask
    }
}

/// Complete forwarding configuration of one switch at one version. Contains
/// no queue state or counters; forwarding is a pure function of this struct
/// and the packet header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchState {
    pub switch_id: SwitchId,
    pub mac: u64,
    /// Longest-prefix-match table, kept sorted by descending prefix length.
    pub l3_table: Vec<RouteEntry>,
    pub groups: Vec<MultipathGroup>,
    pub hash_config: HashConfig,
    /// (egress link, MAC of the device at its far end), sorted by link.
    pub neighbor_macs: Vec<(LinkId, u64)>,
    /// Static L2 forwarding entries (MAC → egress). Usually empty.
    pub fdb: Vec<(u64, LinkId)>,
    /// Egress links that deliver to a host rather than another switch.
    pub host_links: Vec<LinkId>,
    pub version: u64,
}

impl SwitchState {
    pub fn group(&self, id: u32) -> Option<&MultipathGroup> {
        self.groups.get(id as usize)
    }

    pub fn neighbor_mac(&self, link: LinkId) -> Option<u64> {
        self.neighbor_macs
            .binary_search_by_key(&link, |&(l, _)| l)
            .ok()
            .map(|i| self.neighbor_macs[i].1)
    }

    pub fn lpm(&self, ip: u32) -> Option<&RouteEntry> {
        self.l3_table.iter().find(|e| e.matches(ip))
    }

    pub fn sort_l3(&mut self) {
        self.l3_table
            .sort_by(|a, b| b.len.cmp(&a.len).then(a.prefix.cmp(&b.prefix)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L2Decision {
    ToL3,
    L2Switch(LinkId),
    Drop,
}

/// L2 stage: packets addressed to the switch MAC continue to L3; anything
/// else consults the static FDB or is dropped (raw Ethernet switching is out
/// of scope and recorded as a drop).
pub fn l2_process(s: &SwitchState, h: &PacketHeader) -> L2Decision {
    if h.dst_mac == s.mac {
        return L2Decision::ToL3;
    }
    if h.dst_mac == BROADCAST_MAC {
        return L2Decision::Drop;
    }
    match s.fdb.iter().find(|&&(mac, _)| mac == h.dst_mac) {
        Some(&(_, egress)) => L2Decision::L2Switch(egress),
        None => L2Decision::Drop,
    }
}

/// Hash-indexed member selection.
pub fn select_member(g: &MultipathGroup, hash: u32) -> Result<LinkId, PipelineError> {
    g.select(hash)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    /// Transit: egress link and the rewritten header (TTL decremented, MACs
    /// set for the next hop).
    Egress(LinkId, PacketHeader),
    /// Final hop: handed to the host on the given link.
    DeliverLocal(LinkId, PacketHeader),
    DropNoRoute,
    DropTtl,
    /// L2 drop (not addressed to us, no FDB entry).
    DropL2,
}

/// The full pipeline: L2 check → LPM → ECMP member selection → egress
/// rewrite. Pure in `(s, h)`. Headers lacking a selected hash field are
/// hashed over the fields they do carry.
pub fn forward(s: &SwitchState, h: &PacketHeader) -> ForwardDecision {
    match l2_process(s, h) {
        L2Decision::Drop => return ForwardDecision::DropL2,
        L2Decision::L2Switch(egress) => return ForwardDecision::Egress(egress, *h),
        L2Decision::ToL3 => {}
    }
    let Some(entry) = s.lpm(h.dst_lpm_key()) else {
        return ForwardDecision::DropNoRoute;
    };
    let group = match entry.action {
        RouteAction::Drop => return ForwardDecision::DropNoRoute,
        RouteAction::Group(g) => match s.group(g) {
            Some(g) => g,
            None => return ForwardDecision::DropNoRoute,
        },
    };
    let egress = if group.members.len() == 1 {
        group.members[0]
    } else {
        match group.select(ecmp_hash_lenient(&s.hash_config, h)) {
            Ok(l) => l,
            Err(_) => return ForwardDecision::DropNoRoute,
        }
    };
    if h.ttl <= 1 {
        return ForwardDecision::DropTtl;
    }
    let mut out = *h;
    out.ttl -= 1;
    out.src_mac = s.mac;
    out.dst_mac = s.neighbor_mac(egress).unwrap_or(0);
    if s.host_links.binary_search(&egress).is_ok() {
        ForwardDecision::DeliverLocal(egress, out)
    } else {
        ForwardDecision::Egress(egress, out)
    }
}

/// Hash pipeline template instantiated per switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashProfile {
    pub function: HashFnKind,
    /// Mixed with the switch id so every switch hashes differently.
    pub seed_base: u64,
    pub policy: FailoverPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashFnKind {
    XorFold,
    Crc16,
    Crc32,
    TableLookup,
}

impl Default for HashProfile {
    fn default() -> Self {
        HashProfile {
            function: HashFnKind::Crc16,
            seed_base: 0x00da_7ace_17e8,
            policy: FailoverPolicy::ModN,
        }
    }
}

impl HashProfile {
    pub fn new(function: HashFnKind, seed_base: u64, policy: FailoverPolicy) -> Self {
        HashProfile {
            function,
            seed_base,
            policy,
        }
    }

    fn instantiate(&self, switch: SwitchId, tier: Tier) -> HashConfig {
        let mixed = splitmix(self.seed_base ^ ((switch.0 as u64) << 32 | 0x5eed));
        let function = match self.function {
            HashFnKind::XorFold => HashFunction::XorFold,
            HashFnKind::Crc16 => HashFunction::Crc16,
            HashFnKind::Crc32 => HashFunction::Crc32,
            HashFnKind::TableLookup => HashFunction::TableLookup(lookup_table_from_seed(mixed)),
        };
        // Per-tier key rotation classes keep consecutive ECMP stages
        // decorrelated: seeds alone only XOR a constant into linear hashes,
        // which would polarize path choice across tiers.
        let tier_base = match tier {
            Tier::Tor => 0,
            Tier::Agg => 5,
            Tier::Core => 10,
        };
        let mut cfg = HashConfig::five_tuple(function, mixed as u32);
        cfg.pre_shift = tier_base + (mixed >> 36) as u8 % 5;
        cfg
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Build the initial (version 0) configuration of every switch from the
/// topology: rack-granularity routes, uplink ECMP groups, neighbor MACs.
pub fn build_switch_states(topo: &Topology, profile: &HashProfile) -> Vec<SwitchState> {
    topo.switches
        .iter()
        .map(|sw| {
            let sid = sw.id;
            let mut groups: Vec<MultipathGroup> = Vec::new();
            let mut l3 = Vec::new();
            let add_singleton = |groups: &mut Vec<MultipathGroup>, link: LinkId| -> u32 {
                let id = groups.len() as u32;
                groups.push(MultipathGroup::single(id, link));
                id
            };

            match sw.tier {
                Tier::Tor => {
                    let rack = sw.rack.expect("tor serves a rack");
                    // Host /32 routes, tagged with the local rack.
                    for h in topo.hosts_in_rack(rack) {
                        let g = add_singleton(&mut groups, h.downlink);
                        l3.push(RouteEntry {
                            prefix: h.ip,
                            len: 32,
                            rack,
                            action: RouteAction::Group(g),
                        });
                    }
                    // One uplink group shared by all remote-rack routes.
                    let ups = topo.up_links[sid.0 as usize].clone();
                    if !ups.is_empty() {
                        let gid = groups.len() as u32;
                        let n = ups.len() as u32;
                        groups.push(
                            MultipathGroup::new(gid, ups, profile.policy, n)
                                .expect("tor uplink group"),
                        );
                        for r in 0..topo.racks() {
                            if RackId(r) == rack {
                                continue;
                            }
                            let (prefix, len) = topo.rack_prefix(RackId(r));
                            l3.push(RouteEntry {
                                prefix,
                                len,
                                rack: RackId(r),
                                action: RouteAction::Group(gid),
                            });
                        }
                    }
                }
                Tier::Agg => {
                    // Down: one singleton per ToR below us.
                    for &down in &topo.down_links[sid.0 as usize] {
                        let NodeId::Switch(tor) = topo.link(down).dst else {
                            continue;
                        };
                        let rack = topo.switch(tor).rack.expect("down to tor");
                        let g = add_singleton(&mut groups, down);
                        let (prefix, len) = topo.rack_prefix(rack);
                        l3.push(RouteEntry {
                            prefix,
                            len,
                            rack,
                            action: RouteAction::Group(g),
                        });
                    }
                    // Up: core group for racks outside the cluster.
                    let ups = topo.up_links[sid.0 as usize].clone();
                    if !ups.is_empty() {
                        let gid = groups.len() as u32;
                        let n = ups.len() as u32;
                        groups.push(
                            MultipathGroup::new(gid, ups, profile.policy, n)
                                .expect("agg uplink group"),
                        );
                        for r in 0..topo.racks() {
                            let tor = topo.tor_of_rack(RackId(r));
                            if topo.switch(tor).cluster == sw.cluster {
                                continue;
                            }
                            let (prefix, len) = topo.rack_prefix(RackId(r));
                            l3.push(RouteEntry {
                                prefix,
                                len,
                                rack: RackId(r),
                                action: RouteAction::Group(gid),
                            });
                        }
                    }
                }
                Tier::Core => {
                    // One agg per cluster below; route each rack via its
                    // cluster's agg.
                    for &down in &topo.down_links[sid.0 as usize] {
                        let NodeId::Switch(agg) = topo.link(down).dst else {
                            continue;
                        };
                        let cluster = topo.switch(agg).cluster;
                        let g = add_singleton(&mut groups, down);
                        for r in 0..topo.racks() {
                            let tor = topo.tor_of_rack(RackId(r));
                            if topo.switch(tor).cluster != cluster {
                                continue;
                            }
                            let (prefix, len) = topo.rack_prefix(RackId(r));
                            l3.push(RouteEntry {
                                prefix,
                                len,
                                rack: RackId(r),
                                action: RouteAction::Group(g),
                            });
                        }
                    }
                }
            }

            // Neighbor MACs for every egress link of this switch.
            let mut neighbor_macs: Vec<(LinkId, u64)> = topo
                .links
                .iter()
                .filter(|l| l.src == NodeId::Switch(sid))
                .map(|l| {
                    let mac = match l.dst {
                        NodeId::Switch(s) => topo.switch(s).mac,
                        NodeId::Host(h) => topo.host(h).mac,
                    };
                    (l.id, mac)
                })
                .collect();
            neighbor_macs.sort_by_key(|&(l, _)| l);
            let mut host_links = topo.host_links[sid.0 as usize].clone();
            host_links.sort_unstable();

            let mut state = SwitchState {
                switch_id: sid,
                mac: sw.mac,
                l3_table: l3,
                groups,
                hash_config: profile.instantiate(sid, sw.tier),
                neighbor_macs,
                fdb: Vec::new(),
                host_links,
                version: 0,
            };
            state.sort_l3();
            state
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_clos, desk_spec, enumerate_paths, HostId};

    fn desk() -> (Topology, Vec<SwitchState>) {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let states = build_switch_states(&topo, &HashProfile::default());
        (topo, states)
    }

    fn header_between(topo: &Topology, src: HostId, dst: HostId, sport: u16) -> PacketHeader {
        let (s, d) = (topo.host(src), topo.host(dst));
        let mut h = PacketHeader::tcp_v4(s.ip, d.ip, sport, 80);
        h.src_mac = s.mac;
        h.dst_mac = topo.switch(topo.tor_of_rack(s.rack)).mac;
        h
    }

    #[test]
    fn l2_checks_my_mac_broadcast_and_fdb() {
        let (topo, states) = desk();
        let s = &states[0];
        let mut h = header_between(&topo, HostId(0), HostId(2), 1000);
        assert_eq!(l2_process(s, &h), L2Decision::ToL3);
        h.dst_mac = BROADCAST_MAC;
        assert_eq!(l2_process(s, &h), L2Decision::Drop);
        h.dst_mac = 0xbeef;
        assert_eq!(l2_process(s, &h), L2Decision::Drop);
        let mut with_fdb = s.clone();
        with_fdb.fdb.push((0xbeef, LinkId(3)));
        assert_eq!(l2_process(&with_fdb, &h), L2Decision::L2Switch(LinkId(3)));
    }

    #[test]
    fn local_delivery_at_tor() {
        let (topo, states) = desk();
        let h = header_between(&topo, HostId(0), HostId(1), 1000);
        match forward(&states[0], &h) {
            ForwardDecision::DeliverLocal(link, out) => {
                assert_eq!(link, topo.host(HostId(1)).downlink);
                assert_eq!(out.ttl, 63);
                assert_eq!(out.dst_mac, topo.host(HostId(1)).mac);
            }
            other => panic!("expected local delivery, got {other:?}"),
        }
    }

    #[test]
    fn ttl_exhaustion_drops() {
        let (topo, states) = desk();
        let mut h = header_between(&topo, HostId(0), HostId(1), 1000);
        h.ttl = 1;
        assert_eq!(forward(&states[0], &h), ForwardDecision::DropTtl);
    }

    #[test]
    fn unknown_destination_is_no_route() {
        let (topo, states) = desk();
        let mut h = header_between(&topo, HostId(0), HostId(1), 1000);
        h.addrs = crate::pipeline::IpAddrs::V4 {
            src: h.src_lpm_key(),
            dst: 0x0909_0909,
        };
        assert_eq!(forward(&states[0], &h), ForwardDecision::DropNoRoute);
    }

    #[test]
    fn forward_is_pure() {
        let (topo, states) = desk();
        let h = header_between(&topo, HostId(0), HostId(11), 4242);
        let a = forward(&states[0], &h);
        let b = forward(&states[0], &h);
        assert_eq!(a, b);
    }

    #[test]
    fn egress_follows_an_enumerated_path() {
        let (topo, states) = desk();
        let h = header_between(&topo, HostId(0), HostId(11), 777);
        let paths = enumerate_paths(&topo, HostId(0), HostId(11)).unwrap();
        match forward(&states[0], &h) {
            ForwardDecision::Egress(link, _) => {
                assert!(
                    paths.iter().any(|p| p.hops[0].egress == link),
                    "egress {link:?} not on any enumerated path"
                );
            }
            other => panic!("expected egress, got {other:?}"),
        }
    }

    #[test]
    fn non_selected_bits_never_change_selection() {
        let (topo, states) = desk();
        let h = header_between(&topo, HostId(0), HostId(11), 1234);
        let mut h2 = h;
        h2.ttl = 9;
        h2.payload_len = 1;
        h2.ecn = 2;
        let d1 = forward(&states[0], &h);
        let d2 = forward(&states[0], &h2);
        let egress = |d: &ForwardDecision| match d {
            ForwardDecision::Egress(l, _) | ForwardDecision::DeliverLocal(l, _) => Some(*l),
            _ => None,
        };
        assert_eq!(egress(&d1), egress(&d2));
    }
}
