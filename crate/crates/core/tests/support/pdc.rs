//! A single PDC on a star topology, driven by chosen PMU send offsets, and
//! an independent oracle for the relative-wait rule.

use std::collections::BTreeMap;

use cpsim_core::desim::{EventId, EventKind};
use cpsim_core::netsim::{
    build_network, compute_routes, Application, BusId, HostId, HostPlacement, LineSpec, Measurement, NetCtx, NetError,
    NetParams, NetSim, Packet, PacketKind, Payload,
};
use cpsim_core::pmustack::{Aggregate, PdcState, TimerAction};
use cpsim_core::SimTime;

pub const PDC: BusId = 9;
pub const WAIT: SimTime = SimTime::from_millis(100);
pub const SLOT: SimTime = SimTime::from_millis(400);

#[derive(Debug)]
pub enum Timer {
    Send { bus: BusId, k: u64 },
    Timeout { k: u64 },
}

impl EventKind for Timer {
    fn label(&self) -> &'static str {
        match self {
            Timer::Send { .. } => "send",
            Timer::Timeout { .. } => "timeout",
        }
    }
}

/// A single PDC fed by PMUs whose send offsets are chosen by the test.
pub struct Harness {
    pub pdc: PdcState,
    timers: BTreeMap<u64, EventId>,
    pub arrivals: Vec<(u64, BusId, SimTime)>,
    pub flushes: Vec<Aggregate>,
}

impl Harness {
    fn apply(&mut self, ctx: &mut NetCtx<'_, Timer>, k: u64, timer: TimerAction) -> Result<(), NetError> {
        match timer {
            TimerAction::Start { deadline } => {
                let id = ctx.set_timer(deadline, Timer::Timeout { k })?;
                self.timers.insert(k, id);
            }
            TimerAction::Cancel => {
                let id = self.timers.remove(&k).expect("timer armed");
                assert!(ctx.cancel_timer(id));
            }
            TimerAction::None => {}
        }
        Ok(())
    }
}

impl Application for Harness {
    type Timer = Timer;

    fn on_delivery(&mut self, ctx: &mut NetCtx<'_, Timer>, pkt: Packet) -> Result<(), NetError> {
        let Payload::Measurement(m) = pkt.payload else { panic!("unexpected payload") };
        self.arrivals.push((m.k, m.bus, ctx.now()));
        let out = self.pdc.ingest(&m, ctx.now());
        self.apply(ctx, m.k, out.timer)?;
        self.flushes.extend(out.aggregate);
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut NetCtx<'_, Timer>, timer: Timer) -> Result<(), NetError> {
        match timer {
            Timer::Send { bus, k } => {
                let m = Measurement { bus, k, v_pu: 1.0, theta_rad: 0.0, freq_hz: 50.0 };
                let tau = SimTime::from_nanos(SLOT.as_nanos() * k);
                ctx.send(HostId::pmu(bus), HostId::pdc(PDC), PacketKind::PmuMeasurement, tau, Payload::Measurement(m))?;
            }
            Timer::Timeout { k } => {
                self.timers.remove(&k);
                self.flushes.extend(self.pdc.timeout(k, ctx.now()));
            }
        }
        Ok(())
    }
}

/// Star of `n` PMU buses around the PDC bus, identical spokes.
fn star(n: u32) -> NetSim<Harness> {
    let sources: Vec<BusId> = (1..=n).collect();
    let lines: Vec<LineSpec> = sources.iter().map(|&b| LineSpec { bus_a: b, bus_b: PDC, x_ohm: Some(3.0) }).collect();
    let mut buses = sources.clone();
    buses.push(PDC);
    let placement = HostPlacement { pdc_buses: vec![PDC], spdc_bus: None, load_buses: vec![] };
    let topo = build_network(&lines, &buses, &NetParams::default(), &placement).unwrap();
    let routes = compute_routes(&topo).unwrap();
    let app =
        Harness { pdc: PdcState::new(PDC, sources, WAIT), timers: BTreeMap::new(), arrivals: vec![], flushes: vec![] };
    NetSim::new(topo, routes, app)
}

#[derive(Debug, PartialEq)]
pub struct Expected {
    pub at: SimTime,
    pub buses: Vec<BusId>,
    pub complete: bool,
}

/// Relative-wait rule, written independently of the implementation: the
/// window opens at the first arrival and closes `WAIT` later; an arrival
/// exactly at the close loses to the timer armed before it.
pub fn oracle(n: usize, arrivals: &[(BusId, SimTime)]) -> Option<Expected> {
    let first = arrivals.iter().map(|a| a.1).min()?;
    let close = first + WAIT;
    let on_time: BTreeMap<BusId, SimTime> =
        arrivals.iter().filter(|a| a.1 < close).fold(BTreeMap::new(), |mut m, &(b, t)| {
            m.entry(b).and_modify(|x: &mut SimTime| *x = (*x).min(t)).or_insert(t);
            m
        });
    if on_time.len() == n {
        let at = *on_time.values().max().unwrap();
        return Some(Expected { at, buses: on_time.into_keys().collect(), complete: true });
    }
    Some(Expected { at: close, buses: on_time.into_keys().collect(), complete: false })
}

pub const OFFSETS_MS: [Option<u64>; 7] = [None, Some(0), Some(20), Some(60), Some(100), Some(101), Some(150)];

pub fn run_assignment(offsets: &[Option<u64>]) -> (Harness, SimTime) {
    let n = offsets.len() as u32;
    let mut sim = star(n);
    for k in 0..2u64 {
        for (i, off) in offsets.iter().enumerate() {
            // the second slot reverses the assignment so both orders share a run
            let off = if k == 0 { *off } else { offsets[offsets.len() - 1 - i] };
            if let Some(ms) = off {
                let at = SimTime::from_nanos(SLOT.as_nanos() * k) + SimTime::from_millis(ms);
                sim.with_ctx(|_, ctx| ctx.set_timer(at, Timer::Send { bus: i as BusId + 1, k })).unwrap();
            }
        }
    }
    sim.run_until(SimTime::from_secs(2)).unwrap();
    let spoke = sim.net.topology().links[0].prop_delay + sim.net.topology().links[0].serialization(500);
    (sim.app, spoke)
}

/// Every assignment of `OFFSETS_MS` to 1..=`max_n` sources, in a fixed order.
pub fn assignments(max_n: usize) -> impl Iterator<Item = Vec<Option<u64>>> {
    (1..=max_n).flat_map(|n| {
        (0..OFFSETS_MS.len().pow(n as u32)).map(move |code| {
            let mut c = code;
            (0..n)
                .map(|_| {
                    let o = OFFSETS_MS[c % OFFSETS_MS.len()];
                    c /= OFFSETS_MS.len();
                    o
                })
                .collect()
        })
    })
}

/// Runs one assignment and checks emission count, content and time against
/// the oracle, late bookkeeping, and arrival times against the spoke delay.
pub fn check_assignment(offsets: &[Option<u64>]) -> Result<(), String> {
    let n = offsets.len();
    let (app, spoke) = run_assignment(offsets);
    for k in 0..2u64 {
        let arrivals: Vec<(BusId, SimTime)> = app.arrivals.iter().filter(|a| a.0 == k).map(|a| (a.1, a.2)).collect();
        let flushes: Vec<&Aggregate> = app.flushes.iter().filter(|f| f.k == k).collect();
        let fail = |what: String| Err(format!("{offsets:?} k={k}: {what}"));
        match oracle(n, &arrivals) {
            None if !flushes.is_empty() => return fail("flush without arrivals".into()),
            None => {}
            Some(e) => {
                if flushes.len() != 1 {
                    return fail(format!("emitted {} times", flushes.len()));
                }
                let f = flushes[0];
                let got = Expected { at: f.at, buses: f.entries.iter().map(|m| m.bus).collect(), complete: f.complete };
                if got != e {
                    return fail(format!("got {got:?}, expected {e:?}"));
                }
                let first = arrivals.iter().map(|a| a.1).min().unwrap();
                if f.at > first + WAIT {
                    return fail("emitted after the wait".into());
                }
                for &(b, t) in &arrivals {
                    let included = got.buses.contains(&b);
                    if included && t > f.at {
                        return fail(format!("bus {b} included after emission"));
                    }
                    if !included && !app.pdc.concentrator().late_arrivals().contains(&(k, b, t)) {
                        return fail(format!("bus {b} neither included nor recorded late"));
                    }
                }
            }
        }
        // all spokes are identical, so arrival = send offset + spoke delay
        for &(b, t) in &arrivals {
            let i = (b - 1) as usize;
            let off = if k == 0 { offsets[i] } else { offsets[n - 1 - i] };
            let sent = SimTime::from_nanos(SLOT.as_nanos() * k) + SimTime::from_millis(off.unwrap());
            if t != sent + spoke {
                return fail(format!("bus {b} arrived at {t:?}, sent {sent:?}"));
            }
        }
    }
    Ok(())
}
