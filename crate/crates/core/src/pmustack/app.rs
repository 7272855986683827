//! The monitoring and control hosts wired onto the packet transport.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use super::{
    pmu_tick, Aggregate, ControlPolicy, Decision, PdcState, PhasorSample, PmuConfig, SpdcState, ThresholdControl,
    TimerAction,
};
use crate::desim::{EventId, EventKind};
use crate::netsim::{Application, BusId, HostId, NetCtx, NetError, Packet, PacketKind, Payload};
use crate::time::{periodic_tick, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub struct AppConfig {
    pub report_rate_hz: u32,
    /// PMU bus to the bus of the PDC it reports to.
    pub pmu_to_pdc: BTreeMap<BusId, BusId>,
    pub spdc_bus: BusId,
    pub load_buses: Vec<BusId>,
    pub pdc_max_wait: SimTime,
    pub spdc_max_wait: SimTime,
    pub control: ThresholdControl,
    pub policy: ControlPolicy,
    /// PMUs report at every slot strictly before this time.
    pub ticks_until: SimTime,
    pub packet_size_bytes: u32,
    pub record_events: bool,
}

impl AppConfig {
    pub fn pdc_buses(&self) -> BTreeSet<BusId> {
        self.pmu_to_pdc.values().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppTimer {
    PmuTick { bus: BusId, k: u64 },
    PdcTimeout { pdc: BusId, k: u64 },
    SpdcTimeout { k: u64 },
}

impl EventKind for AppTimer {
    fn label(&self) -> &'static str {
        match self {
            AppTimer::PmuTick { .. } => "pmu_tick",
            AppTimer::PdcTimeout { .. } => "pdc_timeout",
            AppTimer::SpdcTimeout { .. } => "spdc_timeout",
        }
    }

    fn summary(&self) -> String {
        match self {
            AppTimer::PmuTick { bus, k } => format!("pmu={bus} k={k}"),
            AppTimer::PdcTimeout { pdc, k } => format!("pdc={pdc} k={k}"),
            AppTimer::SpdcTimeout { k } => format!("k={k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AppEventKind {
    PmuTx,
    PdcFlush,
    SpdcDecision,
    CmdTx,
}

impl AppEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AppEventKind::PmuTx => "pmu_tx",
            AppEventKind::PdcFlush => "pdc_flush",
            AppEventKind::SpdcDecision => "spdc_decision",
            AppEventKind::CmdTx => "cmd_tx",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppEvent {
    pub host: HostId,
    pub kind: AppEventKind,
    pub meas_timestamp: SimTime,
    pub t: SimTime,
    pub detail: String,
}

/// A PDC output received by the super-PDC.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateReceipt {
    pub pdc_bus: BusId,
    pub k: u64,
    pub at: SimTime,
    pub buses: Vec<BusId>,
    pub late: bool,
}

/// A control command reaching its load.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandArrival {
    pub load_bus: BusId,
    pub k: u64,
    pub threshold_index: usize,
    pub fraction: f64,
    pub meas_timestamp: SimTime,
    pub sent_at: SimTime,
    pub arrived_at: SimTime,
}

pub struct SmartGridApp {
    cfg: AppConfig,
    pmus: Vec<PmuConfig>,
    pdcs: BTreeMap<BusId, PdcState>,
    spdc: SpdcState,
    pdc_timers: HashMap<(BusId, u64), EventId>,
    spdc_timers: HashMap<u64, EventId>,
    samples: BTreeMap<u64, BTreeMap<BusId, PhasorSample>>,
    events: Vec<AppEvent>,
    decisions: Vec<Decision>,
    receipts: Vec<AggregateReceipt>,
    arrivals: Vec<CommandArrival>,
    arrivals_taken: usize,
}

impl SmartGridApp {
    pub fn new(cfg: AppConfig) -> Self {
        let mut zones: BTreeMap<BusId, Vec<BusId>> = BTreeMap::new();
        for (&pmu, &pdc) in &cfg.pmu_to_pdc {
            zones.entry(pdc).or_default().push(pmu);
        }
        let pmus = cfg
            .pmu_to_pdc
            .iter()
            .map(|(&bus, &pdc)| PmuConfig {
                bus,
                report_rate_hz: cfg.report_rate_hz,
                packet_size_bytes: cfg.packet_size_bytes,
                assigned_pdc: pdc,
            })
            .collect();
        let pdcs = zones
            .iter()
            .map(|(&pdc, members)| (pdc, PdcState::new(pdc, members.iter().copied(), cfg.pdc_max_wait)))
            .collect();
        let spdc = SpdcState::new(
            cfg.spdc_bus,
            zones.keys().copied(),
            cfg.spdc_max_wait,
            cfg.control.clone(),
            cfg.policy.clone(),
            cfg.load_buses.clone(),
        );
        SmartGridApp {
            cfg,
            pmus,
            pdcs,
            spdc,
            pdc_timers: HashMap::new(),
            spdc_timers: HashMap::new(),
            samples: BTreeMap::new(),
            events: Vec::new(),
            decisions: Vec::new(),
            receipts: Vec::new(),
            arrivals: Vec::new(),
            arrivals_taken: 0,
        }
    }

    pub fn config(&self) -> &AppConfig {
        &self.cfg
    }

    /// Arms the first reporting slot of every PMU.
    pub fn start(&mut self, ctx: &mut NetCtx<'_, AppTimer>) -> Result<(), NetError> {
        let t0 = periodic_tick(0, self.cfg.report_rate_hz);
        if t0 < self.cfg.ticks_until {
            for pmu in &self.pmus {
                ctx.set_timer(t0, AppTimer::PmuTick { bus: pmu.bus, k: 0 })?;
            }
        }
        Ok(())
    }

    /// Phasor values the PMUs will report at slot `k`; buses left out report
    /// nominal values.
    pub fn provide_samples(&mut self, k: u64, samples: BTreeMap<BusId, PhasorSample>) {
        self.samples.insert(k, samples);
    }

    pub fn events(&self) -> &[AppEvent] {
        &self.events
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn receipts(&self) -> &[AggregateReceipt] {
        &self.receipts
    }

    pub fn arrivals(&self) -> &[CommandArrival] {
        &self.arrivals
    }

    /// Command arrivals not yet returned by a previous call.
    pub fn take_new_arrivals(&mut self) -> &[CommandArrival] {
        let from = self.arrivals_taken;
        self.arrivals_taken = self.arrivals.len();
        &self.arrivals[from..]
    }

    pub fn spdc(&self) -> &SpdcState {
        &self.spdc
    }

    pub fn pdc(&self, bus: BusId) -> Option<&PdcState> {
        self.pdcs.get(&bus)
    }

    fn log(&mut self, host: HostId, kind: AppEventKind, meas_timestamp: SimTime, t: SimTime, detail: String) {
        if self.cfg.record_events {
            self.events.push(AppEvent { host, kind, meas_timestamp, t, detail });
        }
    }

    pub fn write_events_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "host,event,meas_timestamp_ns,t_ns,detail")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.host,
                e.kind.as_str(),
                e.meas_timestamp.as_nanos(),
                e.t.as_nanos(),
                e.detail
            )?;
        }
        Ok(())
    }

    fn tau(&self, k: u64) -> SimTime {
        periodic_tick(k, self.cfg.report_rate_hz)
    }

    fn on_pmu_tick(&mut self, ctx: &mut NetCtx<'_, AppTimer>, bus: BusId, k: u64) -> Result<(), NetError> {
        let pmu = self.pmus.iter().find(|p| p.bus == bus).ok_or(NetError::UnknownHost(HostId::pmu(bus)))?;
        let sample = self.samples.get(&k).and_then(|s| s.get(&bus)).copied().unwrap_or(PhasorSample::NOMINAL);
        let out = pmu_tick(pmu, k, sample);
        let (src, dst) = (out.src, out.dst);
        ctx.send(out.src, out.dst, out.kind, out.meas_timestamp, out.payload)?;
        let now = ctx.now();
        self.log(src, AppEventKind::PmuTx, out.meas_timestamp, now, format!("to={dst}"));
        let next = self.tau(k + 1);
        if next < self.cfg.ticks_until {
            ctx.set_timer(next, AppTimer::PmuTick { bus, k: k + 1 })?;
        }
        if bus == self.pmus.last().map(|p| p.bus).unwrap_or(bus) {
            self.samples.remove(&k);
        }
        Ok(())
    }

    fn emit_aggregate(&mut self, ctx: &mut NetCtx<'_, AppTimer>, agg: Aggregate) -> Result<(), NetError> {
        let tau = self.tau(agg.k);
        let host = HostId::pdc(agg.pdc_bus);
        let detail = format!("n={} complete={}", agg.entries.len(), agg.complete);
        ctx.send(
            host,
            HostId::spdc(self.cfg.spdc_bus),
            PacketKind::PdcAggregate,
            tau,
            Payload::Aggregate { pdc_bus: agg.pdc_bus, k: agg.k, entries: agg.entries },
        )?;
        let now = ctx.now();
        self.log(host, AppEventKind::PdcFlush, tau, now, detail);
        Ok(())
    }

    fn emit_decision(&mut self, ctx: &mut NetCtx<'_, AppTimer>, d: Decision) -> Result<(), NetError> {
        let tau = self.tau(d.k);
        let host = HostId::spdc(self.cfg.spdc_bus);
        let now = ctx.now();
        let avg = d.avg_freq_hz.map(|f| format!("{f:.6}")).unwrap_or_default();
        let batches: Vec<String> = d.batches.iter().map(|b| b.to_string()).collect();
        self.log(
            host,
            AppEventKind::SpdcDecision,
            tau,
            now,
            format!("avg_hz={avg} n={} batches={}", d.included_buses.len(), batches.join("|")),
        );
        for cmd in self.spdc.commands(&d, self.cfg.report_rate_hz, self.cfg.packet_size_bytes) {
            let dst = cmd.dst;
            let idx = match cmd.payload {
                Payload::Command { threshold_index, .. } => threshold_index,
                _ => unreachable!("command payload"),
            };
            ctx.send(cmd.src, cmd.dst, cmd.kind, cmd.meas_timestamp, cmd.payload)?;
            self.log(host, AppEventKind::CmdTx, tau, now, format!("to={dst} threshold={idx}"));
        }
        self.decisions.push(d);
        Ok(())
    }
}

impl Application for SmartGridApp {
    type Timer = AppTimer;

    fn on_delivery(&mut self, ctx: &mut NetCtx<'_, AppTimer>, pkt: Packet) -> Result<(), NetError> {
        let now = ctx.now();
        match pkt.payload {
            Payload::Measurement(m) => {
                let pdc = pkt.dst.bus;
                let state = self.pdcs.get_mut(&pdc).ok_or(NetError::UnknownHost(pkt.dst))?;
                let out = state.ingest(&m, now);
                match out.timer {
                    TimerAction::Start { deadline } => {
                        let id = ctx.set_timer(deadline, AppTimer::PdcTimeout { pdc, k: m.k })?;
                        self.pdc_timers.insert((pdc, m.k), id);
                    }
                    TimerAction::Cancel => {
                        if let Some(id) = self.pdc_timers.remove(&(pdc, m.k)) {
                            ctx.cancel_timer(id);
                        }
                    }
                    TimerAction::None => {}
                }
                if let Some(agg) = out.aggregate {
                    self.emit_aggregate(ctx, agg)?;
                }
            }
            Payload::Aggregate { pdc_bus, k, entries } => {
                let agg = Aggregate { pdc_bus, k, at: now, entries, complete: true };
                let out = self.spdc.ingest(&agg, now);
                self.receipts.push(AggregateReceipt {
                    pdc_bus,
                    k,
                    at: now,
                    buses: agg.entries.iter().map(|m| m.bus).collect(),
                    late: out.late,
                });
                match out.timer {
                    TimerAction::Start { deadline } => {
                        let id = ctx.set_timer(deadline, AppTimer::SpdcTimeout { k })?;
                        self.spdc_timers.insert(k, id);
                    }
                    TimerAction::Cancel => {
                        if let Some(id) = self.spdc_timers.remove(&k) {
                            ctx.cancel_timer(id);
                        }
                    }
                    TimerAction::None => {}
                }
                if let Some(d) = out.decision {
                    self.emit_decision(ctx, d)?;
                }
            }
            Payload::Command { k, threshold_index, fraction } => {
                self.arrivals.push(CommandArrival {
                    load_bus: pkt.dst.bus,
                    k,
                    threshold_index,
                    fraction,
                    meas_timestamp: pkt.meas_timestamp,
                    sent_at: pkt.sent_at,
                    arrived_at: now,
                });
            }
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut NetCtx<'_, AppTimer>, timer: AppTimer) -> Result<(), NetError> {
        let now = ctx.now();
        match timer {
            AppTimer::PmuTick { bus, k } => self.on_pmu_tick(ctx, bus, k)?,
            AppTimer::PdcTimeout { pdc, k } => {
                self.pdc_timers.remove(&(pdc, k));
                let state = self.pdcs.get_mut(&pdc).ok_or(NetError::UnknownHost(HostId::pdc(pdc)))?;
                if let Some(agg) = state.timeout(k, now) {
                    self.emit_aggregate(ctx, agg)?;
                }
            }
            AppTimer::SpdcTimeout { k } => {
                self.spdc_timers.remove(&k);
                if let Some(d) = self.spdc.timeout(k, now) {
                    self.emit_decision(ctx, d)?;
                }
            }
        }
        Ok(())
    }
}
