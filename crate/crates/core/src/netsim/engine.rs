//! Store-and-forward packet transport driven by the event kernel.

use std::collections::{HashMap, VecDeque};

use super::packet::{BusId, HostId, Packet, PacketId, PacketKind, Payload};
use super::routing::RoutingTable;
use super::topology::{DirId, LinkId, NetTopology};
use super::trace::{DelayTrace, DropReason, HopRecord, TraceRecord};
use super::NetError;
use crate::desim::{EventId, EventKind, EventQueue, RunError, SimStats};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq)]
pub enum NetEvent<T> {
    /// Last bit of the packet in service leaves `dir`.
    TxDone {
        dir: DirId,
    },
    /// Packet reaches the downstream router of `dir`.
    Arrive {
        pkt: PacketId,
        dir: DirId,
    },
    /// Delivery between hosts attached to the same router.
    Deliver {
        pkt: PacketId,
    },
    LinkDown {
        link: LinkId,
    },
    Timer(T),
}

impl<T: EventKind> EventKind for NetEvent<T> {
    fn label(&self) -> &'static str {
        match self {
            NetEvent::TxDone { .. } => "tx_done",
            NetEvent::Arrive { .. } => "arrive",
            NetEvent::Deliver { .. } => "deliver",
            NetEvent::LinkDown { .. } => "link_down",
            NetEvent::Timer(t) => t.label(),
        }
    }

    fn summary(&self) -> String {
        match self {
            NetEvent::TxDone { dir } => format!("dir={dir}"),
            NetEvent::Arrive { pkt, dir } => format!("pkt={pkt} dir={dir}"),
            NetEvent::Deliver { pkt } => format!("pkt={pkt}"),
            NetEvent::LinkDown { link } => format!("link={link}"),
            NetEvent::Timer(t) => t.summary(),
        }
    }
}

/// Host-side logic running on top of the transport.
pub trait Application {
    type Timer: EventKind;

    fn on_delivery(&mut self, ctx: &mut NetCtx<'_, Self::Timer>, pkt: Packet) -> Result<(), NetError>;

    fn on_timer(&mut self, ctx: &mut NetCtx<'_, Self::Timer>, timer: Self::Timer) -> Result<(), NetError>;
}

struct InFlight {
    packet: Packet,
    trace_idx: usize,
    enqueued_at: SimTime,
    tx_start: SimTime,
    hops: Vec<HopRecord>,
}

#[derive(Default)]
struct DirState {
    queue: VecDeque<PacketId>,
    in_tx: Option<(PacketId, EventId)>,
    in_prop: Vec<(PacketId, EventId)>,
    bits_sent: u64,
}

/// Transport state: topology, routes, link queues and the delay trace.
pub struct Network {
    topo: NetTopology,
    routes: RoutingTable,
    dirs: Vec<DirState>,
    inflight: HashMap<PacketId, InFlight>,
    next_id: PacketId,
    trace: DelayTrace,
}

impl Network {
    pub fn new(topo: NetTopology, routes: RoutingTable) -> Self {
        let dirs = (0..topo.links.len() * 2).map(|_| DirState::default()).collect();
        Network { topo, routes, dirs, inflight: HashMap::new(), next_id: 0, trace: DelayTrace::default() }
    }

    pub fn topology(&self) -> &NetTopology {
        &self.topo
    }

    pub fn routes(&self) -> &RoutingTable {
        &self.routes
    }

    pub fn trace(&self) -> &DelayTrace {
        &self.trace
    }

    pub fn into_trace(self) -> DelayTrace {
        self.trace
    }

    /// Total bits serialized so far on a link direction.
    pub fn bits_sent(&self, dir: DirId) -> u64 {
        self.dirs[dir].bits_sent
    }

    /// Packets waiting or in service on a direction.
    pub fn backlog(&self, dir: DirId) -> usize {
        let d = &self.dirs[dir];
        d.queue.len() + d.in_tx.is_some() as usize
    }

    pub fn in_flight(&self) -> usize {
        self.inflight.len()
    }

    fn drop_packet(&mut self, pkt: PacketId, reason: DropReason) {
        if let Some(f) = self.inflight.remove(&pkt) {
            let rec = &mut self.trace.records[f.trace_idx];
            rec.dropped = Some(reason);
            rec.hops = f.hops;
        }
    }
}

/// What a host callback can do: read the clock, send packets, arm timers.
pub struct NetCtx<'a, T> {
    queue: &'a mut EventQueue<NetEvent<T>>,
    net: &'a mut Network,
}

impl<T> NetCtx<'_, T> {
    pub fn now(&self) -> SimTime {
        self.queue.clock()
    }

    pub fn topology(&self) -> &NetTopology {
        &self.net.topo
    }

    pub fn set_timer(&mut self, at: SimTime, timer: T) -> Result<EventId, NetError> {
        Ok(self.queue.schedule(at, NetEvent::Timer(timer))?)
    }

    pub fn cancel_timer(&mut self, id: EventId) -> bool {
        self.queue.cancel(id)
    }

    /// Injects a packet at the source host's router at the current time.
    pub fn send(
        &mut self,
        src: HostId,
        dst: HostId,
        kind: PacketKind,
        meas_timestamp: SimTime,
        payload: Payload,
    ) -> Result<PacketId, NetError> {
        let now = self.now();
        let net = &mut *self.net;
        if !net.topo.hosts.contains(&src) {
            return Err(NetError::UnknownHost(src));
        }
        if !net.topo.hosts.contains(&dst) {
            return Err(NetError::UnknownHost(dst));
        }
        let id = net.next_id;
        net.next_id += 1;
        let packet = Packet {
            id,
            src,
            dst,
            size_bytes: net.topo.params.packet_size_bytes,
            kind,
            meas_timestamp,
            sent_at: now,
            payload,
        };
        let trace_idx = net.trace.records.len();
        net.trace.records.push(TraceRecord {
            packet: id,
            kind,
            src,
            dst,
            meas_timestamp,
            sent_at: now,
            received_at: None,
            dropped: None,
            hops: Vec::new(),
        });
        net.inflight.insert(id, InFlight { packet, trace_idx, enqueued_at: now, tx_start: now, hops: Vec::new() });
        if src.bus == dst.bus {
            self.queue.schedule(now, NetEvent::Deliver { pkt: id })?;
        } else {
            let node = net.topo.node_of(src.bus).ok_or(NetError::UnknownBus(src.bus))?;
            forward(self.queue, net, id, node, false)?;
        }
        Ok(id)
    }
}

/// Moves a packet sitting at router `node` onto its next link. Returns the
/// packet if it has reached its destination router.
fn forward<T>(
    queue: &mut EventQueue<NetEvent<T>>,
    net: &mut Network,
    pkt: PacketId,
    node: usize,
    rerouted: bool,
) -> Result<Option<Packet>, NetError> {
    let now = queue.clock();
    let dst_bus = net.inflight[&pkt].packet.dst.bus;
    let dst_node = net.topo.node_of(dst_bus).ok_or(NetError::UnknownBus(dst_bus))?;
    if node == dst_node {
        return Ok(Some(finish_delivery(net, pkt, now)));
    }
    let Some(dir) = net.routes.next_hop(node, dst_node) else {
        net.drop_packet(pkt, DropReason::NoRoute);
        return Ok(None);
    };
    if !rerouted {
        net.inflight.get_mut(&pkt).expect("in flight").enqueued_at = now;
    }
    if net.dirs[dir].in_tx.is_none() {
        start_tx(queue, net, dir, pkt)?;
    } else {
        net.dirs[dir].queue.push_back(pkt);
    }
    Ok(None)
}

fn start_tx<T>(
    queue: &mut EventQueue<NetEvent<T>>,
    net: &mut Network,
    dir: DirId,
    pkt: PacketId,
) -> Result<(), NetError> {
    let now = queue.clock();
    let f = net.inflight.get_mut(&pkt).expect("in flight");
    f.tx_start = now;
    let ser = net.topo.links[dir / 2].serialization(f.packet.size_bytes);
    let eid = queue.schedule(now + ser, NetEvent::TxDone { dir })?;
    net.dirs[dir].in_tx = Some((pkt, eid));
    Ok(())
}

fn finish_delivery(net: &mut Network, pkt: PacketId, now: SimTime) -> Packet {
    let f = net.inflight.remove(&pkt).expect("in flight");
    let rec = &mut net.trace.records[f.trace_idx];
    rec.received_at = Some(now);
    rec.hops = f.hops;
    f.packet
}

/// A network run: event queue, transport and the hosted application.
pub struct NetSim<A: Application> {
    pub queue: EventQueue<NetEvent<A::Timer>>,
    pub net: Network,
    pub app: A,
}

impl<A: Application> NetSim<A> {
    pub fn new(topo: NetTopology, routes: RoutingTable, app: A) -> Self {
        NetSim { queue: EventQueue::new(), net: Network::new(topo, routes), app }
    }

    pub fn now(&self) -> SimTime {
        self.queue.clock()
    }

    /// Gives the application a context outside event processing, e.g. to
    /// arm its first timers.
    pub fn with_ctx<R>(&mut self, f: impl FnOnce(&mut A, &mut NetCtx<'_, A::Timer>) -> R) -> R {
        let mut ctx = NetCtx { queue: &mut self.queue, net: &mut self.net };
        f(&mut self.app, &mut ctx)
    }

    /// Takes every link between `bus_a` and `bus_b` down at `at`.
    pub fn fail_link(&mut self, bus_a: BusId, bus_b: BusId, at: SimTime) -> Result<(), NetError> {
        let links = self.net.topo.links_between(bus_a, bus_b);
        if links.is_empty() {
            return Err(NetError::UnknownLink { bus_a, bus_b });
        }
        for link in links {
            self.queue.schedule(at, NetEvent::LinkDown { link })?;
        }
        Ok(())
    }

    pub fn next_event_time(&mut self) -> Option<SimTime> {
        self.queue.peek_time()
    }

    pub fn run_until(&mut self, t_end: SimTime) -> Result<SimStats, NetError> {
        let NetSim { queue, net, app } = self;
        queue.run_until(t_end, |queue, ev| handle(queue, net, app, ev.kind)).map_err(|e| match e {
            RunError::Schedule(e) => NetError::from(e),
            RunError::Handler(f) => NetError::Fault { at: f.fire_at, label: f.label, source: Box::new(f.source) },
        })
    }
}

fn handle<A: Application>(
    queue: &mut EventQueue<NetEvent<A::Timer>>,
    net: &mut Network,
    app: &mut A,
    ev: NetEvent<A::Timer>,
) -> Result<(), NetError> {
    let now = queue.clock();
    match ev {
        NetEvent::TxDone { dir } => {
            let (pkt, _) = net.dirs[dir].in_tx.take().expect("tx in progress");
            let prop = net.topo.links[dir / 2].prop_delay;
            let f = net.inflight.get_mut(&pkt).expect("in flight");
            f.hops.push(HopRecord {
                dir,
                enqueued_at: f.enqueued_at,
                tx_start: f.tx_start,
                tx_end: now,
                arrived_at: now + prop,
            });
            net.dirs[dir].bits_sent += f.packet.size_bytes as u64 * 8;
            let eid = queue.schedule(now + prop, NetEvent::Arrive { pkt, dir })?;
            net.dirs[dir].in_prop.push((pkt, eid));
            if let Some(next) = net.dirs[dir].queue.pop_front() {
                start_tx(queue, net, dir, next)?;
            }
        }
        NetEvent::Arrive { pkt, dir } => {
            let in_prop = &mut net.dirs[dir].in_prop;
            if let Some(pos) = in_prop.iter().position(|&(p, _)| p == pkt) {
                in_prop.remove(pos);
            }
            let (_, to_bus) = net.topo.dir_endpoints(dir);
            let node = net.topo.node_of(to_bus).expect("link endpoint");
            if let Some(p) = forward(queue, net, pkt, node, false)? {
                app.on_delivery(&mut NetCtx { queue, net }, p)?;
            }
        }
        NetEvent::Deliver { pkt } => {
            let p = finish_delivery(net, pkt, now);
            app.on_delivery(&mut NetCtx { queue, net }, p)?;
        }
        NetEvent::LinkDown { link } => link_down(queue, net, link)?,
        NetEvent::Timer(t) => app.on_timer(&mut NetCtx { queue, net }, t)?,
    }
    Ok(())
}

/// Drops everything in service or propagating on the link, recomputes
/// routes and re-forwards packets that were waiting in its queues.
fn link_down<T>(queue: &mut EventQueue<NetEvent<T>>, net: &mut Network, link: LinkId) -> Result<(), NetError> {
    if !net.topo.links[link].up {
        return Ok(());
    }
    net.topo.links[link].up = false;
    let mut waiting = Vec::new();
    for dir in [2 * link, 2 * link + 1] {
        if let Some((pkt, eid)) = net.dirs[dir].in_tx.take() {
            queue.cancel(eid);
            net.drop_packet(pkt, DropReason::LinkFailure);
        }
        for (pkt, eid) in std::mem::take(&mut net.dirs[dir].in_prop) {
            queue.cancel(eid);
            net.drop_packet(pkt, DropReason::LinkFailure);
        }
        let (from_bus, _) = net.topo.dir_endpoints(dir);
        let node = net.topo.node_of(from_bus).expect("link endpoint");
        waiting.extend(net.dirs[dir].queue.drain(..).map(|p| (p, node)));
    }
    net.routes = RoutingTable::compute_partial(&net.topo);
    for (pkt, node) in waiting {
        // A waiting packet never sits at its destination router.
        let delivered = forward(queue, net, pkt, node, true)?;
        debug_assert!(delivered.is_none());
    }
    Ok(())
}
