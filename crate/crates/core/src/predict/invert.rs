//! Inverting a single switch's ECMP decision: which header bits produce a
//! chosen egress.

use super::PredictError;
use crate::net::LinkId;
use crate::pipeline::{ecmp_hash, HashFunction, MultipathGroup, PacketHeader, SwitchState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Header bits an end host may steer with, and ports it must avoid.
#[derive(Debug, Clone, PartialEq)]
pub struct MutableBitsSpec {
    pub fields: Vec<SteerField>,
    /// Ports below 1024 are always excluded; these are in addition.
    pub reserved_ports: Vec<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteerField {
    SrcPort,
    DstPort,
    FlowLabel,
    /// Low bits of the source address (the host owns a prefix).
    SrcIpSuffix { bits: u8 },
}

impl Default for MutableBitsSpec {
    fn default() -> Self {
        MutableBitsSpec {
            fields: vec![SteerField::SrcPort],
            reserved_ports: Vec::new(),
        }
    }
}

impl MutableBitsSpec {
    pub fn src_and_dst_ports() -> Self {
        MutableBitsSpec {
            fields: vec![SteerField::SrcPort, SteerField::DstPort],
            reserved_ports: Vec::new(),
        }
    }

    /// Steerable bit count for this header.
    pub fn usable_bits(&self, h: &PacketHeader) -> u32 {
        self.fields
            .iter()
            .map(|f| match f {
                SteerField::SrcPort | SteerField::DstPort => {
                    if h.has_ports() {
                        16
                    } else {
                        0
                    }
                }
                SteerField::FlowLabel => {
                    if h.flow_label().is_some() {
                        20
                    } else {
                        0
                    }
                }
                SteerField::SrcIpSuffix { bits } => *bits as u32,
            })
            .sum()
    }

    pub fn port_ok(&self, port: u16) -> bool {
        port >= 1024 && !self.reserved_ports.contains(&port)
    }

    fn header_ok(&self, h: &PacketHeader) -> bool {
        for f in &self.fields {
            match f {
                SteerField::SrcPort => {
                    if let Some(p) = h.src_port() {
                        if !self.port_ok(p) {
                            return false;
                        }
                    }
                }
                SteerField::DstPort => {
                    if let Some(p) = h.dst_port() {
                        if !self.port_ok(p) {
                            return false;
                        }
                    }
                }
                _ => {}
            }
        }
        true
    }

    /// Write fresh random values into every steerable field.
    pub fn randomize(&self, h: &PacketHeader, rng: &mut ChaCha8Rng) -> PacketHeader {
        let mut out = *h;
        for f in &self.fields {
            match f {
                SteerField::SrcPort => {
                    if let Some((_, d)) = out.ports {
                        let p = loop {
                            let p: u16 = rng.gen_range(1024..=u16::MAX);
                            if self.port_ok(p) {
                                break p;
                            }
                        };
                        out.ports = Some((p, d));
                    }
                }
                SteerField::DstPort => {
                    if let Some((s, _)) = out.ports {
                        let p = loop {
                            let p: u16 = rng.gen_range(1024..=u16::MAX);
                            if self.port_ok(p) {
                                break p;
                            }
                        };
                        out.ports = Some((s, p));
                    }
                }
                SteerField::FlowLabel => {
                    if let crate::pipeline::IpAddrs::V6 {
                        src,
                        dst,
                        flow_label: _,
                    } = out.addrs
                    {
                        out.addrs = crate::pipeline::IpAddrs::V6 {
                            src,
                            dst,
                            flow_label: rng.gen_range(0..1u32 << 20),
                        };
                    }
                }
                SteerField::SrcIpSuffix { bits } => {
                    let mask = if *bits >= 32 { u32::MAX } else { (1u32 << bits) - 1 };
                    if let crate::pipeline::IpAddrs::V4 { src, dst } = out.addrs {
                        out.addrs = crate::pipeline::IpAddrs::V4 {
                            src: (src & !mask) | (rng.gen::<u32>() & mask),
                            dst,
                        };
                    }
                }
            }
        }
        out
    }
}

/// Enumerate the steerable bit positions of a header as (field, bit) pairs.
fn steer_bits(spec: &MutableBitsSpec, h: &PacketHeader) -> Vec<(SteerField, u8)> {
    let mut out = Vec::new();
    for f in &spec.fields {
        match f {
            SteerField::SrcPort | SteerField::DstPort if h.has_ports() => {
                for b in 0..16 {
                    out.push((*f, b));
                }
            }
            SteerField::FlowLabel if h.flow_label().is_some() => {
                for b in 0..20 {
                    out.push((*f, b));
                }
            }
            SteerField::SrcIpSuffix { bits } => {
                for b in 0..*bits {
                    out.push((*f, b));
                }
            }
            _ => {}
        }
    }
    out
}

fn flip_bit(h: &PacketHeader, field: SteerField, bit: u8) -> PacketHeader {
    let mut out = *h;
    match field {
        SteerField::SrcPort => {
            if let Some((s, d)) = out.ports {
                out.ports = Some((s ^ (1 << bit), d));
            }
        }
        SteerField::DstPort => {
            if let Some((s, d)) = out.ports {
                out.ports = Some((s, d ^ (1 << bit)));
            }
        }
        SteerField::FlowLabel => {
            if let crate::pipeline::IpAddrs::V6 {
                src,
                dst,
                flow_label,
            } = out.addrs
            {
                out.addrs = crate::pipeline::IpAddrs::V6 {
                    src,
                    dst,
                    flow_label: flow_label ^ (1 << bit),
                };
            }
        }
        SteerField::SrcIpSuffix { .. } => {
            if let crate::pipeline::IpAddrs::V4 { src, dst } = out.addrs {
                out.addrs = crate::pipeline::IpAddrs::V4 {
                    src: src ^ (1 << bit),
                    dst,
                };
            }
        }
    }
    out
}

/// Find a header that makes `state`'s hash pipeline steer onto `target`
/// within `group`, differing from `base` only in the mutable bits.
///
/// XorFold is linear in the key bits, so for power-of-two mod-N groups the
/// needed low hash bits are solved directly by GF(2) elimination over the
/// steerable bits. Everything else falls back to a seeded randomized search.
pub fn invert_switch_choice(
    state: &SwitchState,
    group: &MultipathGroup,
    target: LinkId,
    base: &PacketHeader,
    bits: &MutableBitsSpec,
    rng_seed: u64,
    budget: u32,
) -> Result<PacketHeader, PredictError> {
    if !group.contains(target) {
        return Err(PredictError::TargetNotInGroup);
    }
    if group.members.len() == 1 {
        return Ok(*base);
    }
    let n = group.members.len();
    let analytic_ok = matches!(state.hash_config.function, HashFunction::XorFold)
        && group.policy == crate::pipeline::FailoverPolicy::ModN
        && n.is_power_of_two()
        && state.hash_config.post_mask & (n as u32 - 1) == n as u32 - 1;
    if analytic_ok {
        if let Some(h) = invert_xorfold_modn(state, group, target, base, bits) {
            if bits.header_ok(&h) {
                return Ok(h);
            }
        }
    }
    search_invert(state, group, target, base, bits, rng_seed, budget)
}

/// GF(2) solve: pick steer bits whose XOR-fold contribution fixes the low
/// log2(n) hash bits to the target member index.
fn invert_xorfold_modn(
    state: &SwitchState,
    group: &MultipathGroup,
    target: LinkId,
    base: &PacketHeader,
    bits: &MutableBitsSpec,
) -> Option<PacketHeader> {
    let n = group.members.len() as u32;
    let target_idx = group.members.iter().position(|&m| m == target)? as u32;
    let base_hash = ecmp_hash(&state.hash_config, base).ok()?;
    let need = (base_hash & (n - 1)) ^ target_idx;

    let positions = steer_bits(bits, base);
    // Column j = effect of steer bit j on the low hash bits.
    let cols: Vec<u32> = positions
        .iter()
        .map(|&(f, b)| {
            let flipped = flip_bit(base, f, b);
            (ecmp_hash(&state.hash_config, &flipped).ok().unwrap_or(0) ^ base_hash) & (n - 1)
        })
        .collect();
    let select = solve_xor_subset(&cols, need)?;
    let mut out = *base;
    for (j, &(f, b)) in positions.iter().enumerate() {
        if select & (1 << j) != 0 {
            out = flip_bit(&out, f, b);
        }
    }
    // Verify through the forward hash before returning.
    let h = ecmp_hash(&state.hash_config, &out).ok()?;
    (group.select(h).ok()? == target).then_some(out)
}

/// Linear basis over GF(2): find a subset of `cols` XORing to `need`,
/// returned as a selection bitmask over column indices.
fn solve_xor_subset(cols: &[u32], need: u32) -> Option<u64> {
    let mut basis = [(0u32, 0u64); 32];
    for (j, &c) in cols.iter().enumerate() {
        let mut v = c;
        let mut sel = 1u64 << j;
        while v != 0 {
            let lead = 31 - v.leading_zeros() as usize;
            if basis[lead].0 == 0 {
                basis[lead] = (v, sel);
                break;
            }
            v ^= basis[lead].0;
            sel ^= basis[lead].1;
        }
    }
    let mut v = need;
    let mut sel = 0u64;
    while v != 0 {
        let lead = 31 - v.leading_zeros() as usize;
        if basis[lead].0 == 0 {
            return None;
        }
        v ^= basis[lead].0;
        sel ^= basis[lead].1;
    }
    Some(sel)
}

/// Seeded randomized search over the mutable bits.
fn search_invert(
    state: &SwitchState,
    group: &MultipathGroup,
    target: LinkId,
    base: &PacketHeader,
    bits: &MutableBitsSpec,
    rng_seed: u64,
    budget: u32,
) -> Result<PacketHeader, PredictError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut candidate = *base;
    for attempt in 0..budget {
        if bits.header_ok(&candidate) {
            if let Ok(h) = ecmp_hash(&state.hash_config, &candidate) {
                if group.select(h) == Ok(target) {
                    return Ok(candidate);
                }
            }
        }
        let _ = attempt;
        candidate = bits.randomize(base, &mut rng);
    }
    Err(PredictError::NotFound { attempts: budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_clos, desk_spec, HostId, Topology};
    use crate::pipeline::{
        build_switch_states, ecmp_hash, FailoverPolicy, HashFnKind, HashProfile,
    };

    fn tor_group(topo: &Topology, states: &[SwitchState]) -> (SwitchState, MultipathGroup) {
        let s = states[0].clone();
        let g = s
            .groups
            .iter()
            .find(|g| g.members.len() > 1)
            .unwrap()
            .clone();
        let _ = topo;
        (s, g)
    }

    fn states_with(topo: &Topology, f: HashFnKind, p: FailoverPolicy) -> Vec<SwitchState> {
        build_switch_states(topo, &HashProfile::new(f, 0xbeef, p))
    }

    #[test]
    fn singleton_group_returns_base() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let states = states_with(&topo, HashFnKind::Crc16, FailoverPolicy::ModN);
        let s = &states[0];
        let single = s.groups.iter().find(|g| g.members.len() == 1).unwrap();
        let h = super::super::host_header(&topo, HostId(0), HostId(1), 2000, 80);
        let out = invert_switch_choice(
            s,
            single,
            single.members[0],
            &h,
            &MutableBitsSpec::default(),
            1,
            100,
        )
        .unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn target_not_in_group_rejected() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let states = states_with(&topo, HashFnKind::Crc16, FailoverPolicy::ModN);
        let (s, g) = tor_group(&topo, &states);
        let h = super::super::host_header(&topo, HostId(0), HostId(11), 2000, 80);
        assert_eq!(
            invert_switch_choice(
                &s,
                &g,
                crate::net::LinkId(9999),
                &h,
                &MutableBitsSpec::default(),
                1,
                100
            ),
            Err(PredictError::TargetNotInGroup)
        );
    }

    #[test]
    fn xorfold_modn_solved_for_every_member() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let states = states_with(&topo, HashFnKind::XorFold, FailoverPolicy::ModN);
        let (s, g) = tor_group(&topo, &states);
        assert!(g.members.len().is_power_of_two());
        let base = super::super::host_header(&topo, HostId(0), HostId(11), 2000, 80);
        for &member in &g.members {
            let out = invert_switch_choice(&s, &g, member, &base, &MutableBitsSpec::default(), 7, 0)
                .expect("analytic inverse");
            // Forward-verify and check only mutable bits changed.
            let h = ecmp_hash(&s.hash_config, &out).unwrap();
            assert_eq!(g.select(h).unwrap(), member);
            assert_eq!(out.addrs, base.addrs);
            assert_eq!(out.dst_port(), base.dst_port());
            assert!(out.src_port().unwrap() >= 1024 || out.src_port() == base.src_port());
        }
    }

    #[test]
    fn randomized_search_covers_crc_and_resilient() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        for (f, p) in [
            (HashFnKind::Crc16, FailoverPolicy::ModN),
            (HashFnKind::Crc32, FailoverPolicy::ResilientHash),
            (HashFnKind::TableLookup, FailoverPolicy::ResilientHash),
        ] {
            let states = states_with(&topo, f, p);
            let (s, g) = tor_group(&topo, &states);
            let base = super::super::host_header(&topo, HostId(0), HostId(11), 2000, 80);
            for &member in &g.members {
                let out = invert_switch_choice(
                    &s,
                    &g,
                    member,
                    &base,
                    &MutableBitsSpec::default(),
                    11,
                    10_000,
                )
                .expect("search succeeds");
                let h = ecmp_hash(&s.hash_config, &out).unwrap();
                assert_eq!(g.select(h).unwrap(), member);
                assert!(out.src_port().unwrap() >= 1024);
            }
        }
    }

    #[test]
    fn reserved_ports_never_used() {
        let topo = build_clos(&desk_spec(1_000_000_000), 0).unwrap();
        let states = states_with(&topo, HashFnKind::Crc16, FailoverPolicy::ModN);
        let (s, g) = tor_group(&topo, &states);
        let base = super::super::host_header(&topo, HostId(0), HostId(11), 2000, 80);
        // Reserve a big stripe and confirm the search still avoids it.
        let spec = MutableBitsSpec {
            fields: vec![SteerField::SrcPort],
            reserved_ports: (1024..2048).collect(),
        };
        for &member in &g.members {
            let out = invert_switch_choice(&s, &g, member, &base, &spec, 5, 20_000).unwrap();
            let p = out.src_port().unwrap();
            assert!(p >= 2048, "port {p} inside reserved stripe");
        }
    }
}
