//! Topology model: folded-Clos construction, component identity, and the path
//! objects shared by prediction, localization, and the simulator.
//!
//! A topology is immutable once built. Link liveness is a property of switch
//! configuration state, not of the topology graph.

mod build;
mod path;

pub use build::{build_clos, desk_spec, leaf_spine_spec, testbed_spec, Asymmetry, ClosSpec};
pub use path::{components_of_path, enumerate_paths, Hop, Path};

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TopoError {
    #[error("invalid topology spec: {0}")]
    InvalidSpec(String),
    #[error("no path between {src:?} and {dst:?}")]
    Disconnected { src: HostId, dst: HostId },
    #[error("unknown node in topology")]
    UnknownNode,
}

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident, $inner:ty) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Index into [`Topology::switches`].
    SwitchId,
    u32
);
id_type!(
    /// Index into [`Topology::hosts`].
    HostId,
    u32
);
id_type!(
    /// Index into [`Topology::links`]. Links are directed: A→B and B→A are
    /// distinct components.
    LinkId,
    u32
);
id_type!(
    /// Rack number; doubles as the destination prefix granularity for
    /// routing-table-entry components.
    RackId,
    u16
);

/// An independently failable network element.
///
/// Routing-table entries are modeled at (switch, destination-rack prefix)
/// granularity. Ordering is the derived lexicographic order and is the
/// deterministic tie-break everywhere a single component must be picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentId {
    Link(LinkId),
    Switch(SwitchId),
    Rte { switch: SwitchId, rack: RackId },
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentId::Link(l) => write!(f, "link:{l}"),
            ComponentId::Switch(s) => write!(f, "switch:{s}"),
            ComponentId::Rte { switch, rack } => write!(f, "rte:{switch}:rack{rack}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Tor,
    Agg,
    Core,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Switch(SwitchId),
    Host(HostId),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Switch {
    pub id: SwitchId,
    pub name: String,
    pub tier: Tier,
    /// Cluster index (Tor/Agg); cores carry the plane they serve.
    pub cluster: u32,
    /// Rack served, for ToRs.
    pub rack: Option<RackId>,
    pub mac: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Host {
    pub id: HostId,
    pub name: String,
    pub rack: RackId,
    pub ip: u32,
    pub mac: u64,
    /// host → ToR
    pub uplink: LinkId,
    /// ToR → host
    pub downlink: LinkId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity_bps: u64,
    pub delay_ns: u64,
}

/// Immutable network graph. Safe to share read-only across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub spec: ClosSpec,
    pub seed: u64,
    pub switches: Vec<Switch>,
    pub hosts: Vec<Host>,
    pub links: Vec<Link>,
    /// Uplinks per switch (ToR→Agg, Agg→Core), deterministic order.
    pub up_links: Vec<Vec<LinkId>>,
    /// Downlinks per switch toward the lower switch tier.
    pub down_links: Vec<Vec<LinkId>>,
    /// Host-facing links per switch (ToR→host).
    pub host_links: Vec<Vec<LinkId>>,
    /// Links degraded to half capacity by the asymmetry option.
    pub degraded_links: Vec<LinkId>,
}

impl Topology {
    pub fn switch(&self, id: SwitchId) -> &Switch {
        &self.switches[id.0 as usize]
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[id.0 as usize]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }

    pub fn racks(&self) -> u16 {
        self.spec.racks as u16
    }

    /// ToR serving a rack. Racks and ToRs are built in lockstep.
    pub fn tor_of_rack(&self, rack: RackId) -> SwitchId {
        SwitchId(rack.0 as u32)
    }

    pub fn rack_prefix(&self, rack: RackId) -> (u32, u8) {
        (ip_of(rack.0, 0) & 0xffff_ff00, 24)
    }

    pub fn hosts_in_rack(&self, rack: RackId) -> impl Iterator<Item = &Host> {
        self.hosts.iter().filter(move |h| h.rack == rack)
    }

    pub fn host_by_ip(&self, ip: u32) -> Option<&Host> {
        // ip layout is (rack, index); direct decode, then verify.
        let rack = ((ip >> 8) & 0xff) as usize;
        let idx = (ip & 0xff).wrapping_sub(HOST_IP_BASE) as usize;
        let per_rack = self.spec.servers_per_rack as usize;
        let host = self.hosts.get(rack * per_rack + idx)?;
        (host.ip == ip).then_some(host)
    }

    /// All failable components, in `ComponentId` order.
    pub fn all_components(&self) -> Vec<ComponentId> {
        let mut out: Vec<ComponentId> = Vec::new();
        out.extend(self.links.iter().map(|l| ComponentId::Link(l.id)));
        out.extend(self.switches.iter().map(|s| ComponentId::Switch(s.id)));
        for s in &self.switches {
            for rack in 0..self.racks() {
                out.push(ComponentId::Rte {
                    switch: s.id,
                    rack: RackId(rack),
                });
            }
        }
        out.sort_unstable();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TopoError> {
        let t: Topology =
            serde_json::from_str(s).map_err(|e| TopoError::InvalidSpec(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    /// Structural invariants: ids consistent, no self-links, hosts attached
    /// exactly once, folded-Clos wiring between tiers.
    pub fn validate(&self) -> Result<(), TopoError> {
        for (i, l) in self.links.iter().enumerate() {
            if l.id.0 as usize != i {
                return Err(TopoError::InvalidSpec("link id mismatch".into()));
            }
            if l.src == l.dst {
                return Err(TopoError::InvalidSpec("self-link".into()));
            }
        }
        for (i, h) in self.hosts.iter().enumerate() {
            if h.id.0 as usize != i {
                return Err(TopoError::InvalidSpec("host id mismatch".into()));
            }
            let up = self.link(h.uplink);
            let down = self.link(h.downlink);
            let tor = NodeId::Switch(self.tor_of_rack(h.rack));
            if up.src != NodeId::Host(h.id) || up.dst != tor {
                return Err(TopoError::InvalidSpec("host uplink wiring".into()));
            }
            if down.src != tor || down.dst != NodeId::Host(h.id) {
                return Err(TopoError::InvalidSpec("host downlink wiring".into()));
            }
        }
        // Tier adjacency: ToR links go up to Agg, Agg up to Core, never skip.
        for l in &self.links {
            if let (NodeId::Switch(a), NodeId::Switch(b)) = (l.src, l.dst) {
                let (ta, tb) = (self.switch(a).tier, self.switch(b).tier);
                let ok = matches!(
                    (ta, tb),
                    (Tier::Tor, Tier::Agg)
                        | (Tier::Agg, Tier::Tor)
                        | (Tier::Agg, Tier::Core)
                        | (Tier::Core, Tier::Agg)
                );
                if !ok {
                    return Err(TopoError::InvalidSpec("cross-tier link".into()));
                }
            }
        }
        Ok(())
    }
}

pub(crate) const HOST_IP_BASE: u32 = 10;

/// 10.0.rack.(base+idx)
pub(crate) fn ip_of(rack: u16, idx: u32) -> u32 {
    (10u32 << 24) | ((rack as u32) << 8) | (HOST_IP_BASE + idx)
}

pub fn format_ip(ip: u32) -> String {
    format!(
        "{}.{}.{}.{}",
        ip >> 24,
        (ip >> 16) & 0xff,
        (ip >> 8) & 0xff,
        ip & 0xff
    )
}

pub fn parse_ip(s: &str) -> Option<u32> {
    let mut parts = s.split('.');
    let mut ip = 0u32;
    for _ in 0..4 {
        let octet: u32 = parts.next()?.parse().ok()?;
        if octet > 255 {
            return None;
        }
        ip = (ip << 8) | octet;
    }
    parts.next().is_none().then_some(ip)
}
