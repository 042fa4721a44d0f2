//! Packet header as the forwarding pipeline sees it.

use serde::{Deserialize, Serialize};

pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;
pub const BROADCAST_MAC: u64 = 0xffff_ffff_ffff;

/// Source/destination addresses. The flow label exists only for v6, enforced
/// by construction. Routing uses v4 addresses; v6 destinations match routes
/// through their low 32 bits (v4-mapped addressing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IpAddrs {
    V4 { src: u32, dst: u32 },
    V6 { src: u128, dst: u128, flow_label: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketHeader {
    /// 48-bit MACs in the low bits.
    pub src_mac: u64,
    pub dst_mac: u64,
    pub addrs: IpAddrs,
    pub proto: u8,
    /// (src, dst); present iff proto is TCP or UDP.
    pub ports: Option<(u16, u16)>,
    pub ttl: u8,
    /// 2-bit ECN codepoint: 0b10 ECT(0), 0b11 CE.
    pub ecn: u8,
    pub payload_len: u32,
}

impl PacketHeader {
    pub fn tcp_v4(src_ip: u32, dst_ip: u32, src_port: u16, dst_port: u16) -> Self {
        PacketHeader {
            src_mac: 0,
            dst_mac: 0,
            addrs: IpAddrs::V4 {
                src: src_ip,
                dst: dst_ip,
            },
            proto: PROTO_TCP,
            ports: Some((src_port, dst_port)),
            ttl: 64,
            ecn: 0,
            payload_len: 1460,
        }
    }

    pub fn src_ip_v4(&self) -> Option<u32> {
        match self.addrs {
            IpAddrs::V4 { src, .. } => Some(src),
            IpAddrs::V6 { .. } => None,
        }
    }

    /// Destination key for longest-prefix matching: the v4 address, or the
    /// low 32 bits of a v6 address.
    pub fn dst_lpm_key(&self) -> u32 {
        match self.addrs {
            IpAddrs::V4 { dst, .. } => dst,
            IpAddrs::V6 { dst, .. } => dst as u32,
        }
    }

    pub fn src_lpm_key(&self) -> u32 {
        match self.addrs {
            IpAddrs::V4 { src, .. } => src,
            IpAddrs::V6 { src, .. } => src as u32,
        }
    }

    pub fn flow_label(&self) -> Option<u32> {
        match self.addrs {
            IpAddrs::V4 { .. } => None,
            IpAddrs::V6 { flow_label, .. } => Some(flow_label),
        }
    }

    pub fn src_port(&self) -> Option<u16> {
        self.ports.map(|(s, _)| s)
    }

    pub fn dst_port(&self) -> Option<u16> {
        self.ports.map(|(_, d)| d)
    }

    pub fn has_ports(&self) -> bool {
        self.ports.is_some()
    }

    /// Structural invariants: ports iff TCP/UDP, flow label width, ECN width.
    pub fn validate(&self) -> bool {
        let ports_ok = self.ports.is_some() == matches!(self.proto, PROTO_TCP | PROTO_UDP);
        let label_ok = match self.addrs {
            IpAddrs::V6 { flow_label, .. } => flow_label < (1 << 20),
            IpAddrs::V4 { .. } => true,
        };
        ports_ok && label_ok && self.ecn < 4
    }

    /// Swap source and destination roles (addresses, ports, MACs). An
    /// involution: `reverse(reverse(h)) == h`.
    pub fn reversed(&self) -> Self {
        let addrs = match self.addrs {
            IpAddrs::V4 { src, dst } => IpAddrs::V4 { src: dst, dst: src },
            IpAddrs::V6 {
                src,
                dst,
                flow_label,
            } => IpAddrs::V6 {
                src: dst,
                dst: src,
                flow_label,
            },
        };
        PacketHeader {
            src_mac: self.dst_mac,
            dst_mac: self.src_mac,
            addrs,
            ports: self.ports.map(|(s, d)| (d, s)),
            ..*self
        }
    }
}
