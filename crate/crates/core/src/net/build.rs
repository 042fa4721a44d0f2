//! Deterministic folded-Clos construction.

use super::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Folded-Clos shape. `cores == 0` builds a two-tier leaf-spine fabric where
/// the `aggs_per_cluster` switches act as spines (requires `clusters == 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosSpec {
    pub racks: u32,
    pub servers_per_rack: u32,
    pub clusters: u32,
    pub aggs_per_cluster: u32,
    pub cores: u32,
    pub link_capacity_bps: u64,
    /// Host access link capacity; defaults to `link_capacity_bps`.
    #[serde(default)]
    pub host_capacity_bps: Option<u64>,
    pub link_delay_ns: u64,
    /// Half-capacity uplink selection for the asymmetric leaf-spine variant.
    #[serde(default)]
    pub asymmetry: Option<Asymmetry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asymmetry {
    /// Number of uplinks per leaf degraded to half capacity.
    pub degraded_per_leaf: u32,
}

impl ClosSpec {
    fn check(&self) -> Result<(), TopoError> {
        let positive = [
            ("racks", self.racks),
            ("servers_per_rack", self.servers_per_rack),
            ("clusters", self.clusters),
            ("aggs_per_cluster", self.aggs_per_cluster),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TopoError::InvalidSpec(format!("{name} must be >= 1")));
            }
        }
        if self.racks % self.clusters != 0 {
            return Err(TopoError::InvalidSpec(
                "racks must be divisible by clusters".into(),
            ));
        }
        if self.cores > 0 && self.cores % self.aggs_per_cluster != 0 {
            return Err(TopoError::InvalidSpec(
                "cores must be divisible by aggs_per_cluster".into(),
            ));
        }
        if self.cores == 0 && self.clusters != 1 {
            return Err(TopoError::InvalidSpec(
                "leaf-spine (cores = 0) requires a single cluster".into(),
            ));
        }
        if self.racks > 250 || self.servers_per_rack > 200 {
            return Err(TopoError::InvalidSpec(
                "addressing scheme caps racks at 250 and servers per rack at 200".into(),
            ));
        }
        if let Some(a) = self.asymmetry {
            if self.cores != 0 {
                return Err(TopoError::InvalidSpec(
                    "asymmetry is defined for leaf-spine topologies".into(),
                ));
            }
            if a.degraded_per_leaf > self.aggs_per_cluster {
                return Err(TopoError::InvalidSpec(
                    "cannot degrade more uplinks than exist".into(),
                ));
            }
        }
        Ok(())
    }
}

struct Builder {
    switches: Vec<Switch>,
    hosts: Vec<Host>,
    links: Vec<Link>,
    up_links: Vec<Vec<LinkId>>,
    down_links: Vec<Vec<LinkId>>,
    host_links: Vec<Vec<LinkId>>,
}

impl Builder {
    fn add_switch(&mut self, name: String, tier: Tier, cluster: u32, rack: Option<RackId>) -> SwitchId {
        let id = SwitchId(self.switches.len() as u32);
        self.switches.push(Switch {
            id,
            name,
            tier,
            cluster,
            rack,
            mac: 0x0400_0000_0000 | id.0 as u64,
        });
        self.up_links.push(Vec::new());
        self.down_links.push(Vec::new());
        self.host_links.push(Vec::new());
        id
    }

    fn add_link(&mut self, src: NodeId, dst: NodeId, capacity_bps: u64, delay_ns: u64) -> LinkId {
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link {
            id,
            src,
            dst,
            capacity_bps,
            delay_ns,
        });
        id
    }

    /// Wire both directions between a lower-tier and an upper-tier switch.
    fn wire_pair(&mut self, lo: SwitchId, hi: SwitchId, capacity: u64, delay: u64) {
        let up = self.add_link(NodeId::Switch(lo), NodeId::Switch(hi), capacity, delay);
        let down = self.add_link(NodeId::Switch(hi), NodeId::Switch(lo), capacity, delay);
        self.up_links[lo.0 as usize].push(up);
        self.down_links[hi.0 as usize].push(down);
    }
}

/// Build the folded-Clos topology described by `spec`. Identical `(spec,
/// seed)` inputs produce byte-identical serializations; the seed only drives
/// the asymmetric uplink selection.
pub fn build_clos(spec: &ClosSpec, seed: u64) -> Result<Topology, TopoError> {
    spec.check()?;
    let mut b = Builder {
        switches: Vec::new(),
        hosts: Vec::new(),
        links: Vec::new(),
        up_links: Vec::new(),
        down_links: Vec::new(),
        host_links: Vec::new(),
    };
    let host_cap = spec.host_capacity_bps.unwrap_or(spec.link_capacity_bps);
    let delay = spec.link_delay_ns;
    let racks_per_cluster = spec.racks / spec.clusters;

    // ToRs first so that SwitchId(rack) serves rack `rack`.
    for r in 0..spec.racks {
        let cluster = r / racks_per_cluster;
        b.add_switch(format!("tor-{r}"), Tier::Tor, cluster, Some(RackId(r as u16)));
    }
    let mut aggs = Vec::new();
    for c in 0..spec.clusters {
        for a in 0..spec.aggs_per_cluster {
            aggs.push(b.add_switch(format!("agg-{c}-{a}"), Tier::Agg, c, None));
        }
    }
    let mut cores = Vec::new();
    for k in 0..spec.cores {
        // Cores are grouped into planes by the agg index they serve.
        let plane = k / (spec.cores / spec.aggs_per_cluster);
        cores.push(b.add_switch(format!("core-{k}"), Tier::Core, plane, None));
    }

    // Hosts, rack-major.
    for r in 0..spec.racks {
        let tor = SwitchId(r);
        for i in 0..spec.servers_per_rack {
            let id = HostId(b.hosts.len() as u32);
            let name = format!("h-{r}-{i}");
            let ip = ip_of(r as u16, i);
            let up = b.add_link(NodeId::Host(id), NodeId::Switch(tor), host_cap, delay);
            let down = b.add_link(NodeId::Switch(tor), NodeId::Host(id), host_cap, delay);
            b.host_links[tor.0 as usize].push(down);
            b.hosts.push(Host {
                id,
                name,
                rack: RackId(r as u16),
                ip,
                mac: 0x0200_0000_0000 | id.0 as u64,
                uplink: up,
                downlink: down,
            });
        }
    }

    // ToR ↔ every agg in its cluster.
    for r in 0..spec.racks {
        let cluster = r / racks_per_cluster;
        for a in 0..spec.aggs_per_cluster {
            let agg = aggs[(cluster * spec.aggs_per_cluster + a) as usize];
            b.wire_pair(SwitchId(r), agg, spec.link_capacity_bps, delay);
        }
    }

    // Agg ↔ its core plane. Agg index a serves cores [a*cpa, (a+1)*cpa).
    if spec.cores > 0 {
        let cpa = spec.cores / spec.aggs_per_cluster;
        for c in 0..spec.clusters {
            for a in 0..spec.aggs_per_cluster {
                let agg = aggs[(c * spec.aggs_per_cluster + a) as usize];
                for k in a * cpa..(a + 1) * cpa {
                    b.wire_pair(agg, cores[k as usize], spec.link_capacity_bps, delay);
                }
            }
        }
    }

    // Asymmetric leaf-spine: halve the capacity of seeded-random uplinks.
    let mut degraded = Vec::new();
    if let Some(asym) = spec.asymmetry {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in 0..spec.racks {
            let picks = sample(
                &mut rng,
                spec.aggs_per_cluster as usize,
                asym.degraded_per_leaf as usize,
            );
            let mut picks: Vec<usize> = picks.into_iter().collect();
            picks.sort_unstable();
            for a in picks {
                let up = b.up_links[r as usize][a];
                b.links[up.0 as usize].capacity_bps /= 2;
                degraded.push(up);
                // Find the paired down direction: it was created right after.
                let down = LinkId(up.0 + 1);
                b.links[down.0 as usize].capacity_bps /= 2;
                degraded.push(down);
            }
        }
    }

    let topo = Topology {
        spec: spec.clone(),
        seed,
        switches: b.switches,
        hosts: b.hosts,
        links: b.links,
        up_links: b.up_links,
        down_links: b.down_links,
        host_links: b.host_links,
        degraded_links: degraded,
    };
    topo.validate()?;
    Ok(topo)
}

/// The evaluation-scale Clos: 12 racks x 4 servers, 3 clusters of 4 aggs,
/// 8 cores, 1 Gb/s links.
pub fn testbed_spec() -> ClosSpec {
    ClosSpec {
        racks: 12,
        servers_per_rack: 4,
        clusters: 3,
        aggs_per_cluster: 4,
        cores: 8,
        link_capacity_bps: 1_000_000_000,
        host_capacity_bps: None,
        link_delay_ns: 10_000,
        asymmetry: None,
    }
}

/// Reduced CI-scale Clos: 6 racks x 2 servers, 3 clusters of 2 aggs, 4 cores.
pub fn desk_spec(link_capacity_bps: u64) -> ClosSpec {
    ClosSpec {
        racks: 6,
        servers_per_rack: 2,
        clusters: 3,
        aggs_per_cluster: 2,
        cores: 4,
        link_capacity_bps,
        host_capacity_bps: None,
        link_delay_ns: 10_000,
        asymmetry: None,
    }
}

/// 6-leaf 6-spine fabric with 2:1 leaf oversubscription.
pub fn leaf_spine_spec(hosts_per_leaf: u32, link_capacity_bps: u64, asymmetric: bool) -> ClosSpec {
    ClosSpec {
        racks: 6,
        servers_per_rack: hosts_per_leaf,
        clusters: 1,
        aggs_per_cluster: 6,
        cores: 0,
        link_capacity_bps,
        host_capacity_bps: None,
        link_delay_ns: 10_000,
        asymmetry: asymmetric.then_some(Asymmetry {
            degraded_per_leaf: 2,
        }),
    }
}
