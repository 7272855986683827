//! Static shortest-path routing.
//!
//! Link weight is the propagation delay plus the serialization time of one
//! packet, in integer nanoseconds. Among equal-cost next hops the neighbour
//! with the smallest bus id wins.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::packet::BusId;
use super::topology::{DirId, NetTopology};
use super::NetError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingTable {
    n: usize,
    /// `next[src * n + dst]`: outgoing link direction, `None` if unreachable
    /// (or `src == dst`).
    next: Vec<Option<DirId>>,
    dist: Vec<Option<u64>>,
}

impl RoutingTable {
    /// Routes over the links that are currently up; unreachable pairs are
    /// left empty.
    pub fn compute_partial(topo: &NetTopology) -> RoutingTable {
        let n = topo.node_count();
        let weight: Vec<u64> = topo
            .links
            .iter()
            .map(|l| l.prop_delay.as_nanos() + l.serialization(topo.params.packet_size_bytes).as_nanos())
            .collect();
        let mut next = vec![None; n * n];
        let mut dist_all = vec![None; n * n];
        for dst in 0..n {
            let dist = dijkstra(topo, &weight, dst);
            for src in 0..n {
                dist_all[src * n + dst] = dist[src];
                if src == dst || dist[src].is_none() {
                    continue;
                }
                let mut best: Option<(u64, BusId, usize, DirId)> = None;
                for &(nb, link) in topo.adjacency(src) {
                    let l = &topo.links[link];
                    let Some(dn) = dist[nb] else { continue };
                    if !l.up {
                        continue;
                    }
                    let cost = weight[link] + dn;
                    let key = (cost, topo.buses[nb], link);
                    if best.is_none_or(|(c, b, li, _)| key < (c, b, li)) {
                        let dir = l.dir_from(topo.buses[src]).expect("adjacent link");
                        best = Some((cost, topo.buses[nb], link, dir));
                    }
                }
                next[src * n + dst] = best.map(|b| b.3);
            }
        }
        RoutingTable { n, next, dist: dist_all }
    }

    pub fn next_hop(&self, src_node: usize, dst_node: usize) -> Option<DirId> {
        self.next[src_node * self.n + dst_node]
    }

    /// Path cost under the routing metric, nanoseconds.
    pub fn distance(&self, src_node: usize, dst_node: usize) -> Option<u64> {
        self.dist[src_node * self.n + dst_node]
    }

    /// `(src_bus, dst_bus)` pairs with no route.
    pub fn unreachable(&self, topo: &NetTopology) -> Vec<(BusId, BusId)> {
        let mut out = Vec::new();
        for s in 0..self.n {
            for d in 0..self.n {
                if s != d && self.dist[s * self.n + d].is_none() {
                    out.push((topo.buses[s], topo.buses[d]));
                }
            }
        }
        out
    }

    /// Sequence of buses visited from `src` to `dst`, both included.
    pub fn path(&self, topo: &NetTopology, src: BusId, dst: BusId) -> Option<Vec<BusId>> {
        let (mut node, dst_node) = (topo.node_of(src)?, topo.node_of(dst)?);
        let mut path = vec![src];
        while node != dst_node {
            let dir = self.next_hop(node, dst_node)?;
            let (_, to) = topo.dir_endpoints(dir);
            path.push(to);
            node = topo.node_of(to)?;
            if path.len() > topo.node_count() {
                return None;
            }
        }
        Some(path)
    }
}

fn dijkstra(topo: &NetTopology, weight: &[u64], dst: usize) -> Vec<Option<u64>> {
    let mut dist: Vec<Option<u64>> = vec![None; topo.node_count()];
    let mut heap = BinaryHeap::new();
    dist[dst] = Some(0);
    heap.push(Reverse((0u64, dst)));
    while let Some(Reverse((d, n))) = heap.pop() {
        if dist[n].is_some_and(|best| d > best) {
            continue;
        }
        for &(m, link) in topo.adjacency(n) {
            if !topo.links[link].up {
                continue;
            }
            let nd = d + weight[link];
            if dist[m].is_none_or(|cur| nd < cur) {
                dist[m] = Some(nd);
                heap.push(Reverse((nd, m)));
            }
        }
    }
    dist
}

/// Routes over the current topology, failing if any pair is unreachable.
pub fn compute_routes(topo: &NetTopology) -> Result<RoutingTable, NetError> {
    let table = RoutingTable::compute_partial(topo);
    let unreachable = table.unreachable(topo);
    if unreachable.is_empty() {
        Ok(table)
    } else {
        let mut dsts: Vec<BusId> = unreachable.into_iter().map(|(_, d)| d).collect();
        dsts.sort_unstable();
        dsts.dedup();
        Err(NetError::Unreachable(dsts))
    }
}
