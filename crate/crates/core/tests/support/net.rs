//! Point-to-point traffic between PMU hosts on a hand-built topology.

use std::collections::BTreeMap;

use cpsim_core::desim::EventKind;
use cpsim_core::netsim::{
    build_network, compute_routes, Application, BusId, HostId, HostPlacement, LineSpec, NetCtx, NetError, NetParams,
    NetSim, Packet, PacketId, PacketKind, Payload,
};
use cpsim_core::SimTime;

#[derive(Debug)]
pub struct Send {
    pub src: BusId,
    pub dst: BusId,
    pub tag: u64,
}

impl EventKind for Send {
    fn label(&self) -> &'static str {
        "send"
    }
}

/// Sends PMU-to-PMU packets on timers and records deliveries by tag.
#[derive(Default)]
pub struct Traffic {
    pub sent: BTreeMap<u64, PacketId>,
    pub delivered: BTreeMap<u64, SimTime>,
}

impl Application for Traffic {
    type Timer = Send;

    fn on_delivery(&mut self, ctx: &mut NetCtx<'_, Send>, pkt: Packet) -> Result<(), NetError> {
        let Payload::Command { k, .. } = pkt.payload else { panic!("unexpected payload") };
        assert!(self.delivered.insert(k, ctx.now()).is_none());
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut NetCtx<'_, Send>, s: Send) -> Result<(), NetError> {
        let payload = Payload::Command { k: s.tag, threshold_index: 0, fraction: 0.0 };
        let id = ctx.send(HostId::pmu(s.src), HostId::pmu(s.dst), PacketKind::ControlCommand, ctx.now(), payload)?;
        self.sent.insert(s.tag, id);
        Ok(())
    }
}

pub fn line(a: BusId, b: BusId, x: f64) -> LineSpec {
    LineSpec { bus_a: a, bus_b: b, x_ohm: Some(x) }
}

pub fn params(bps: u64) -> NetParams {
    NetParams { bandwidth_bps: bps, packet_size_bytes: 500, refractive_index: 1.5, ohm_per_km: 0.3 }
}

pub fn sim(lines: &[LineSpec], buses: &[BusId], p: NetParams) -> NetSim<Traffic> {
    let topo = build_network(lines, buses, &p, &HostPlacement::default()).unwrap();
    let routes = compute_routes(&topo).unwrap();
    NetSim::new(topo, routes, Traffic::default())
}

pub fn schedule(s: &mut NetSim<Traffic>, at: SimTime, src: BusId, dst: BusId, tag: u64) {
    s.with_ctx(|_, ctx| ctx.set_timer(at, Send { src, dst, tag })).unwrap();
}

pub fn single_packet_delay(bps: u64) -> SimTime {
    let mut s = sim(&[line(1, 2, 0.0)], &[1, 2], params(bps));
    schedule(&mut s, SimTime::from_millis(3), 1, 2, 0);
    s.run_until(SimTime::from_secs(1)).unwrap();
    s.app.delivered[&0] - SimTime::from_millis(3)
}
