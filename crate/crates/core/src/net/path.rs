//! Host-to-host path objects and shortest up-down path enumeration.

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub switch: SwitchId,
    pub ingress: LinkId,
    pub egress: LinkId,
}

/// An up-down switch path between two hosts. Consecutive hops share a link;
/// the first ingress is the source host's uplink and the last egress the
/// destination host's downlink.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    pub src: HostId,
    pub dst: HostId,
    pub hops: Vec<Hop>,
}

impl Path {
    /// Traversed links: first ingress plus every hop's egress.
    pub fn links(&self) -> Vec<LinkId> {
        let mut out = Vec::with_capacity(self.hops.len() + 1);
        if let Some(first) = self.hops.first() {
            out.push(first.ingress);
        }
        out.extend(self.hops.iter().map(|h| h.egress));
        out
    }

    pub fn switches(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.hops.iter().map(|h| h.switch)
    }

    /// Canonical key for interning: the traversed link sequence.
    pub fn key(&self) -> Vec<LinkId> {
        self.links()
    }
}

/// All traversed links, switches, and the routing-table entry matched at each
/// switch for the destination's rack.
pub fn components_of_path(topo: &Topology, path: &Path) -> Vec<ComponentId> {
    let dst_rack = topo.host(path.dst).rack;
    let mut out = Vec::with_capacity(path.hops.len() * 3 + 1);
    for l in path.links() {
        out.push(ComponentId::Link(l));
    }
    for h in &path.hops {
        out.push(ComponentId::Switch(h.switch));
        out.push(ComponentId::Rte {
            switch: h.switch,
            rack: dst_rack,
        });
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Enumerate every loop-free shortest up-down path from `src` to `dst`, in
/// deterministic (agg-index, core-index) order.
pub fn enumerate_paths(topo: &Topology, src: HostId, dst: HostId) -> Result<Vec<Path>, TopoError> {
    if src == dst {
        return Err(TopoError::Disconnected { src, dst });
    }
    let (sh, dh) = (
        topo.hosts.get(src.0 as usize).ok_or(TopoError::UnknownNode)?,
        topo.hosts.get(dst.0 as usize).ok_or(TopoError::UnknownNode)?,
    );
    let s_tor = topo.tor_of_rack(sh.rack);
    let d_tor = topo.tor_of_rack(dh.rack);

    // Same rack: single hop through the shared ToR.
    if s_tor == d_tor {
        return Ok(vec![Path {
            src,
            dst,
            hops: vec![Hop {
                switch: s_tor,
                ingress: sh.uplink,
                egress: dh.downlink,
            }],
        }]);
    }

    let mut out = Vec::new();
    let s_cluster = topo.switch(s_tor).cluster;
    let d_cluster = topo.switch(d_tor).cluster;

    for &up1 in &topo.up_links[s_tor.0 as usize] {
        let agg = match topo.link(up1).dst {
            NodeId::Switch(s) => s,
            NodeId::Host(_) => continue,
        };
        if s_cluster == d_cluster {
            // Turn around at the agg tier.
            let Some(&down) = topo.down_links[agg.0 as usize]
                .iter()
                .find(|&&l| topo.link(l).dst == NodeId::Switch(d_tor))
            else {
                continue;
            };
            out.push(Path {
                src,
                dst,
                hops: vec![
                    Hop {
                        switch: s_tor,
                        ingress: sh.uplink,
                        egress: up1,
                    },
                    Hop {
                        switch: agg,
                        ingress: up1,
                        egress: down,
                    },
                    Hop {
                        switch: d_tor,
                        ingress: down,
                        egress: dh.downlink,
                    },
                ],
            });
        } else {
            // Transit a core; descend into the destination cluster.
            for &up2 in &topo.up_links[agg.0 as usize] {
                let core = match topo.link(up2).dst {
                    NodeId::Switch(s) => s,
                    NodeId::Host(_) => continue,
                };
                let Some(&down1) = topo.down_links[core.0 as usize].iter().find(|&&l| {
                    matches!(topo.link(l).dst, NodeId::Switch(s)
                             if topo.switch(s).cluster == d_cluster)
                }) else {
                    continue;
                };
                let d_agg = match topo.link(down1).dst {
                    NodeId::Switch(s) => s,
                    NodeId::Host(_) => continue,
                };
                let Some(&down2) = topo.down_links[d_agg.0 as usize]
                    .iter()
                    .find(|&&l| topo.link(l).dst == NodeId::Switch(d_tor))
                else {
                    continue;
                };
                out.push(Path {
                    src,
                    dst,
                    hops: vec![
                        Hop {
                            switch: s_tor,
                            ingress: sh.uplink,
                            egress: up1,
                        },
                        Hop {
                            switch: agg,
                            ingress: up1,
                            egress: up2,
                        },
                        Hop {
                            switch: core,
                            ingress: up2,
                            egress: down1,
                        },
                        Hop {
                            switch: d_agg,
                            ingress: down1,
                            egress: down2,
                        },
                        Hop {
                            switch: d_tor,
                            ingress: down2,
                            egress: dh.downlink,
                        },
                    ],
                });
            }
        }
    }

    if out.is_empty() {
        return Err(TopoError::Disconnected { src, dst });
    }
    Ok(out)
}
