//! Wide-area monitoring and control applications: PMUs sampling on a common
//! reporting grid, PDCs concentrating them per timestamp, and a super-PDC
//! that concentrates the PDC outputs and issues load-reduction commands when
//! the average measured frequency crosses its thresholds.

mod app;
mod concentrator;

pub use app::{AggregateReceipt, AppConfig, AppEvent, AppEventKind, AppTimer, CommandArrival, SmartGridApp};
pub use concentrator::{Concentrator, Flush, Ingest, TimerAction};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::netsim::{BusId, HostId, Measurement, PacketKind, Payload};
use crate::time::{periodic_tick, SimTime};

/// A PMU reading prior to packetisation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasorSample {
    pub v_pu: f64,
    pub theta_rad: f64,
    pub freq_hz: f64,
}

impl PhasorSample {
    pub const NOMINAL: PhasorSample = PhasorSample { v_pu: 1.0, theta_rad: 0.0, freq_hz: 50.0 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmuConfig {
    pub bus: BusId,
    pub report_rate_hz: u32,
    pub packet_size_bytes: u32,
    pub assigned_pdc: BusId,
}

/// A packet ready to be handed to the transport.
#[derive(Clone, Debug, PartialEq)]
pub struct OutgoingPacket {
    pub src: HostId,
    pub dst: HostId,
    pub kind: PacketKind,
    pub meas_timestamp: SimTime,
    pub size_bytes: u32,
    pub payload: Payload,
}

/// Builds the measurement packet for reporting slot `k`.
pub fn pmu_tick(pmu: &PmuConfig, k: u64, sample: PhasorSample) -> OutgoingPacket {
    let tau = periodic_tick(k, pmu.report_rate_hz);
    OutgoingPacket {
        src: HostId::pmu(pmu.bus),
        dst: HostId::pdc(pmu.assigned_pdc),
        kind: PacketKind::PmuMeasurement,
        meas_timestamp: tau,
        size_bytes: pmu.packet_size_bytes,
        payload: Payload::Measurement(Measurement {
            bus: pmu.bus,
            k,
            v_pu: sample.v_pu,
            theta_rad: sample.theta_rad,
            freq_hz: sample.freq_hz,
        }),
    }
}

/// A PDC output for one timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub pdc_bus: BusId,
    pub k: u64,
    pub at: SimTime,
    pub entries: Vec<Measurement>,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdcOutcome {
    pub timer: TimerAction,
    pub aggregate: Option<Aggregate>,
    pub late: bool,
}

#[derive(Clone, Debug)]
pub struct PdcState {
    pub bus: BusId,
    conc: Concentrator<Measurement>,
}

impl PdcState {
    pub fn new(bus: BusId, sources: impl IntoIterator<Item = BusId>, max_wait: SimTime) -> Self {
        PdcState { bus, conc: Concentrator::new(sources, max_wait) }
    }

    pub fn concentrator(&self) -> &Concentrator<Measurement> {
        &self.conc
    }

    fn aggregate(&self, f: Flush<Measurement>) -> Aggregate {
        Aggregate {
            pdc_bus: self.bus,
            k: f.k,
            at: f.at,
            entries: f.items.into_iter().map(|(_, m)| m).collect(),
            complete: f.complete,
        }
    }

    pub fn ingest(&mut self, m: &Measurement, t: SimTime) -> PdcOutcome {
        let i = self.conc.ingest(m.k, m.bus, *m, t);
        PdcOutcome { timer: i.timer, aggregate: i.flush.map(|f| self.aggregate(f)), late: i.late }
    }

    pub fn timeout(&mut self, k: u64, t: SimTime) -> Option<Aggregate> {
        self.conc.timeout(k, t).map(|f| self.aggregate(f))
    }
}

/// Frequency thresholds fired at most once each, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdControl {
    pub thresholds_hz: Vec<f64>,
    pub reduction_fraction: f64,
    pub next_index: usize,
}

impl ThresholdControl {
    pub fn new(thresholds_hz: Vec<f64>, reduction_fraction: f64) -> Self {
        ThresholdControl { thresholds_hz, reduction_fraction, next_index: 0 }
    }

    /// Threshold indices released by an average frequency reading.
    pub fn evaluate(&mut self, avg_freq_hz: f64) -> Vec<usize> {
        let mut fired = Vec::new();
        while self.next_index < self.thresholds_hz.len() && avg_freq_hz < self.thresholds_hz[self.next_index] {
            fired.push(self.next_index);
            self.next_index += 1;
        }
        fired
    }
}

/// How the super-PDC turns a completed timestamp into commands.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlPolicy {
    /// Monitoring only.
    Off,
    /// Compare the average received frequency against the thresholds.
    Threshold,
    /// Release the listed threshold batches at the listed slots, regardless of
    /// measured values. Used to replay traffic logged by a grid run.
    Scripted(BTreeMap<u64, Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub k: u64,
    pub at: SimTime,
    pub avg_freq_hz: Option<f64>,
    pub included_buses: Vec<BusId>,
    pub pdcs: Vec<BusId>,
    pub complete: bool,
    /// Threshold indices whose command batch is released, in order.
    pub batches: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpdcOutcome {
    pub timer: TimerAction,
    pub decision: Option<Decision>,
    pub late: bool,
}

#[derive(Clone, Debug)]
pub struct SpdcState {
    pub bus: BusId,
    pub control: ThresholdControl,
    pub policy: ControlPolicy,
    pub load_buses: Vec<BusId>,
    conc: Concentrator<Vec<Measurement>>,
}

/// Unweighted mean of the frequencies present.
pub fn average_frequency(entries: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = entries.into_iter().fold((0.0, 0usize), |(s, n), f| (s + f, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl SpdcState {
    pub fn new(
        bus: BusId,
        pdc_buses: impl IntoIterator<Item = BusId>,
        max_wait: SimTime,
        control: ThresholdControl,
        policy: ControlPolicy,
        mut load_buses: Vec<BusId>,
    ) -> Self {
        load_buses.sort_unstable();
        load_buses.dedup();
        SpdcState { bus, control, policy, load_buses, conc: Concentrator::new(pdc_buses, max_wait) }
    }

    pub fn concentrator(&self) -> &Concentrator<Vec<Measurement>> {
        &self.conc
    }

    pub fn ingest(&mut self, agg: &Aggregate, t: SimTime) -> SpdcOutcome {
        let i = self.conc.ingest(agg.k, agg.pdc_bus, agg.entries.clone(), t);
        SpdcOutcome { timer: i.timer, decision: i.flush.map(|f| self.decide(f)), late: i.late }
    }

    pub fn timeout(&mut self, k: u64, t: SimTime) -> Option<Decision> {
        self.conc.timeout(k, t).map(|f| self.decide(f))
    }

    fn decide(&mut self, f: Flush<Vec<Measurement>>) -> Decision {
        let pdcs: Vec<BusId> = f.items.iter().map(|(b, _)| *b).collect();
        let mut entries: Vec<&Measurement> = f.items.iter().flat_map(|(_, e)| e.iter()).collect();
        entries.sort_by_key(|m| m.bus);
        let avg = average_frequency(entries.iter().map(|m| m.freq_hz));
        let batches = match &self.policy {
            ControlPolicy::Off => Vec::new(),
            ControlPolicy::Threshold => avg.map(|a| self.control.evaluate(a)).unwrap_or_default(),
            ControlPolicy::Scripted(script) => {
                let fired = script.get(&f.k).cloned().unwrap_or_default();
                if let Some(&max) = fired.iter().max() {
                    self.control.next_index = self.control.next_index.max(max + 1);
                }
                fired
            }
        };
        Decision {
            k: f.k,
            at: f.at,
            avg_freq_hz: avg,
            included_buses: entries.iter().map(|m| m.bus).collect(),
            pdcs,
            complete: f.complete,
            batches,
        }
    }

    /// Command packets for a decision: one per load per released threshold,
    /// batch by batch, loads in ascending bus order.
    pub fn commands(&self, d: &Decision, report_rate_hz: u32, size_bytes: u32) -> Vec<OutgoingPacket> {
        let tau = periodic_tick(d.k, report_rate_hz);
        d.batches
            .iter()
            .flat_map(|&idx| {
                self.load_buses.iter().map(move |&load| OutgoingPacket {
                    src: HostId::spdc(self.bus),
                    dst: HostId::load(load),
                    kind: PacketKind::ControlCommand,
                    meas_timestamp: tau,
                    size_bytes,
                    payload: Payload::Command {
                        k: d.k,
                        threshold_index: idx,
                        fraction: self.control.reduction_fraction,
                    },
                })
            })
            .collect()
    }
}
