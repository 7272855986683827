//! Communication topology derived from the transmission grid: one router per
//! bus and one full-duplex link alongside every branch.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::packet::{BusId, HostId};
use super::NetError;
use crate::time::{div_round_half_up, SimTime};

/// Speed of light in vacuum, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub bandwidth_bps: u64,
    pub packet_size_bytes: u32,
    pub refractive_index: f64,
    pub ohm_per_km: f64,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams { bandwidth_bps: 800_000, packet_size_bytes: 500, refractive_index: 1.5, ohm_per_km: 0.3 }
    }
}

/// A grid branch as seen by the network builder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSpec {
    pub bus_a: BusId,
    pub bus_b: BusId,
    /// Series reactance in ohms; `None` when the case does not provide it.
    pub x_ohm: Option<f64>,
}

pub type LinkId = usize;
/// A link direction: `2 * link` is a→b, `2 * link + 1` is b→a.
pub type DirId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub bus_a: BusId,
    pub bus_b: BusId,
    pub length_km: f64,
    pub prop_delay: SimTime,
    pub bandwidth_bps: u64,
    pub up: bool,
}

impl Link {
    /// Transmission time of `bytes` on this link, rounded half-up to the ns.
    pub fn serialization(&self, bytes: u32) -> SimTime {
        serialization_time(bytes, self.bandwidth_bps)
    }

    pub fn dir_from(&self, bus: BusId) -> Option<DirId> {
        if bus == self.bus_a {
            Some(2 * self.id)
        } else if bus == self.bus_b {
            Some(2 * self.id + 1)
        } else {
            None
        }
    }
}

pub fn serialization_time(bytes: u32, bandwidth_bps: u64) -> SimTime {
    let bits = bytes as u128 * 8;
    SimTime::from_nanos(div_round_half_up(bits * 1_000_000_000, bandwidth_bps as u128) as u64)
}

/// Line length from series reactance at a uniform per-km impedance.
pub fn line_length_km(x_ohm: f64, ohm_per_km: f64) -> f64 {
    x_ohm.abs() / ohm_per_km
}

pub fn propagation_delay(length_km: f64, refractive_index: f64) -> SimTime {
    SimTime::from_secs_f64(length_km * refractive_index / SPEED_OF_LIGHT_KM_S)
}

/// Where the application hosts sit.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct HostPlacement {
    pub pdc_buses: Vec<BusId>,
    pub spdc_bus: Option<BusId>,
    pub load_buses: Vec<BusId>,
}

#[derive(Clone, Debug)]
pub struct NetTopology {
    pub params: NetParams,
    /// Router bus ids, ascending; position is the node index.
    pub buses: Vec<BusId>,
    pub links: Vec<Link>,
    pub hosts: BTreeSet<HostId>,
    index: BTreeMap<BusId, usize>,
    /// node -> [(neighbor node, link id)], neighbors ascending by bus id.
    adjacency: Vec<Vec<(usize, LinkId)>>,
}

impl NetTopology {
    pub fn node_of(&self, bus: BusId) -> Option<usize> {
        self.index.get(&bus).copied()
    }

    pub fn adjacency(&self, node: usize) -> &[(usize, LinkId)] {
        &self.adjacency[node]
    }

    pub fn node_count(&self) -> usize {
        self.buses.len()
    }

    /// Endpoints `(from_bus, to_bus)` of a link direction.
    pub fn dir_endpoints(&self, dir: DirId) -> (BusId, BusId) {
        let l = &self.links[dir / 2];
        if dir.is_multiple_of(2) {
            (l.bus_a, l.bus_b)
        } else {
            (l.bus_b, l.bus_a)
        }
    }

    /// Direction of the (first) link carrying traffic from `from` to `to`.
    pub fn dir_between(&self, from: BusId, to: BusId) -> Option<DirId> {
        self.links
            .iter()
            .find(|l| (l.bus_a == from && l.bus_b == to) || (l.bus_a == to && l.bus_b == from))
            .and_then(|l| l.dir_from(from))
    }

    pub fn links_between(&self, a: BusId, b: BusId) -> Vec<LinkId> {
        self.links
            .iter()
            .filter(|l| (l.bus_a == a && l.bus_b == b) || (l.bus_a == b && l.bus_b == a))
            .map(|l| l.id)
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.buses.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.buses.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &(m, l) in &self.adjacency[n] {
                if self.links[l].up && !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `bus_a,bus_b,length_km,prop_delay_ns,bandwidth_bps`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bus_a,bus_b,length_km,prop_delay_ns,bandwidth_bps")?;
        for l in &self.links {
            writeln!(w, "{},{},{:.6},{},{}", l.bus_a, l.bus_b, l.length_km, l.prop_delay.as_nanos(), l.bandwidth_bps)?;
        }
        Ok(())
    }
}

/// Builds routers, links and host attachments. PMUs are placed at every bus.
pub fn build_network(
    lines: &[LineSpec],
    buses: &[BusId],
    params: &NetParams,
    placement: &HostPlacement,
) -> Result<NetTopology, NetError> {
    if params.bandwidth_bps == 0 || params.ohm_per_km <= 0.0 || params.refractive_index <= 0.0 {
        return Err(NetError::InvalidParams("bandwidth, ohm_per_km and refractive_index must be positive".into()));
    }
    let mut sorted: Vec<BusId> = buses.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let index: BTreeMap<BusId, usize> = sorted.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut links = Vec::with_capacity(lines.len());
    let mut adjacency = vec![Vec::new(); sorted.len()];
    for line in lines {
        let x = match line.x_ohm {
            Some(x) if x.is_finite() => x,
            _ => return Err(NetError::MissingImpedance { bus_a: line.bus_a, bus_b: line.bus_b }),
        };
        let (Some(&na), Some(&nb)) = (index.get(&line.bus_a), index.get(&line.bus_b)) else {
            return Err(NetError::UnknownBus(if index.contains_key(&line.bus_a) { line.bus_b } else { line.bus_a }));
        };
        let length_km = line_length_km(x, params.ohm_per_km);
        let id = links.len();
        links.push(Link {
            id,
            bus_a: line.bus_a,
            bus_b: line.bus_b,
            length_km,
            prop_delay: propagation_delay(length_km, params.refractive_index),
            bandwidth_bps: params.bandwidth_bps,
            up: true,
        });
        adjacency[na].push((nb, id));
        adjacency[nb].push((na, id));
    }
    for adj in &mut adjacency {
        adj.sort_by_key(|&(n, l)| (sorted[n], l));
    }

    let mut hosts = BTreeSet::new();
    for &b in &sorted {
        hosts.insert(HostId::pmu(b));
    }
    let check = |b: BusId| if index.contains_key(&b) { Ok(b) } else { Err(NetError::UnknownBus(b)) };
    for &b in &placement.pdc_buses {
        hosts.insert(HostId::pdc(check(b)?));
    }
    if let Some(b) = placement.spdc_bus {
        hosts.insert(HostId::spdc(check(b)?));
    }
    for &b in &placement.load_buses {
        hosts.insert(HostId::load(check(b)?));
    }

    let topo = NetTopology { params: params.clone(), buses: sorted, links, hosts, index, adjacency };
    if !topo.is_connected() {
        return Err(NetError::DisconnectedGraph);
    }
    Ok(topo)
}
