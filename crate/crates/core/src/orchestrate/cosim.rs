//! Event-synchronised co-simulation. The grid runs as a federate on its own
//! thread; the network and its hosts run on the calling thread. Both advance
//! in lockstep between sync points.

use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;
use std::time::Instant;

use super::network_run::{command_model, monitoring_model, NetworkRun};
use super::report::{ArrivalRecord, GridSummary, RunOutput, RunReport, Timings, TriggerRecord};
use super::{build_netsim, OrchestrateError};
use crate::gridsim::{init_steady_state, GridError, GridEvent, GridEventKind, GridSim, SampleRow, Trajectory};
use crate::netsim::BusId;
use crate::pmustack::{ControlPolicy, PhasorSample};
use crate::scenario::{Method, Scenario};
use crate::time::{periodic_tick, SimTime};

enum ToGrid {
    Advance { until: SimTime, events: Vec<GridEvent> },
    Finish,
}

enum FromGrid {
    Reached(Vec<SampleRow>),
    Failed(GridError),
    Done(Box<Trajectory>),
}

fn grid_federate(mut sim: GridSim, rx: Receiver<ToGrid>, tx: Sender<FromGrid>) {
    while let Ok(msg) = rx.recv() {
        match msg {
            ToGrid::Advance { until, events } => {
                let result = (|| {
                    for ev in events {
                        sim.schedule(ev)?;
                    }
                    let mut rows = Vec::new();
                    loop {
                        if let Some(row) = sim.step_to_next_sample(until)? {
                            rows.push(row);
                        }
                        if sim.now() >= until && sim.next_sample_time() > until {
                            return Ok(rows);
                        }
                    }
                })();
                let reply = match result {
                    Ok(rows) => FromGrid::Reached(rows),
                    Err(e) => FromGrid::Failed(e),
                };
                if tx.send(reply).is_err() {
                    return;
                }
            }
            ToGrid::Finish => {
                let _ = tx.send(FromGrid::Done(Box::new(sim.into_trajectory())));
                return;
            }
        }
    }
}

struct GridHandle {
    tx: Sender<ToGrid>,
    rx: Receiver<FromGrid>,
    join: thread::JoinHandle<()>,
}

impl GridHandle {
    fn spawn(sim: GridSim) -> Self {
        let (to_tx, to_rx) = channel();
        let (from_tx, from_rx) = channel();
        let join = thread::Builder::new()
            .name("grid-federate".into())
            .spawn(move || grid_federate(sim, to_rx, from_tx))
            .expect("spawn grid federate");
        GridHandle { tx: to_tx, rx: from_rx, join }
    }

    fn advance(&self, until: SimTime, events: Vec<GridEvent>) -> Result<Vec<SampleRow>, OrchestrateError> {
        self.tx.send(ToGrid::Advance { until, events }).map_err(|_| lost())?;
        match self.rx.recv().map_err(|_| lost())? {
            FromGrid::Reached(rows) => Ok(rows),
            FromGrid::Failed(e) => Err(e.into()),
            FromGrid::Done(_) => Err(lost()),
        }
    }

    fn finish(self) -> Result<Trajectory, OrchestrateError> {
        self.tx.send(ToGrid::Finish).map_err(|_| lost())?;
        let traj = match self.rx.recv().map_err(|_| lost())? {
            FromGrid::Done(t) => *t,
            _ => return Err(lost()),
        };
        self.join.join().map_err(|_| OrchestrateError::Federate("grid federate panicked".into()))?;
        Ok(traj)
    }
}

fn lost() -> OrchestrateError {
    OrchestrateError::Federate("grid federate channel closed".into())
}

fn samples_by_bus(ids: &[BusId], row: &SampleRow) -> BTreeMap<BusId, PhasorSample> {
    ids.iter().copied().zip(row.buses.iter().copied()).collect()
}

/// Runs both simulators under event-based synchronisation. PMU reporting
/// instants are sync points; the network may only create a sync point at
/// least `min_net_sync` after the current one, so command deliveries in
/// between reach the grid at the next allowed point.
pub fn cosim_simulate(sc: &Scenario, min_net_sync: SimTime) -> Result<RunOutput, OrchestrateError> {
    let start = Instant::now();
    let policy = if sc.config.control.enabled { ControlPolicy::Threshold } else { ControlPolicy::Off };
    let mut net = build_netsim(sc, policy)?;
    let mut gsim = GridSim::new(&sc.model, init_steady_state(&sc.model)?, sc.report_rate_hz());
    for ev in &sc.grid_events {
        gsim.schedule(ev.clone())?;
    }
    let bus_ids = sc.model.index.ids().to_vec();
    let rate = sc.report_rate_hz();
    let fraction = sc.config.control.reduction_fraction;
    let grid = GridHandle::spawn(gsim);

    let mut next_k = 0u64;
    let mut arrivals = Vec::new();
    let mut pending: Vec<GridEvent> = Vec::new();
    let mut steps = 0u64;
    let mut t_s = SimTime::ZERO;
    let mut first = true;
    let result = (|| -> Result<(), OrchestrateError> {
        while first || t_s < sc.t_end {
            let t_next = if first {
                SimTime::ZERO
            } else {
                let tick = periodic_tick(next_k, rate);
                let net_point = net.next_event_time().map(|t| t.max(t_s + min_net_sync)).unwrap_or(SimTime::MAX);
                tick.min(net_point).min(sc.t_end)
            };
            first = false;
            for row in grid.advance(t_next, std::mem::take(&mut pending))? {
                net.app.provide_samples(row.k, samples_by_bus(&bus_ids, &row));
                next_k = row.k + 1;
            }
            net.run_until(t_next)?;
            for a in net.app.take_new_arrivals() {
                pending.push(GridEvent {
                    at: t_next,
                    kind: GridEventKind::LoadReduction {
                        load_bus: a.load_bus,
                        fraction,
                        threshold_index: a.threshold_index,
                    },
                });
                arrivals.push(ArrivalRecord {
                    load_bus: a.load_bus,
                    k: a.k,
                    threshold_index: a.threshold_index,
                    tau_ns: a.meas_timestamp.as_nanos(),
                    exact_ns: a.arrived_at.as_nanos(),
                    perceived_ns: t_next.as_nanos(),
                });
            }
            steps += 1;
            t_s = t_next;
        }
        Ok(())
    })();
    let trajectory = grid.finish();
    result?;
    let trajectory = trajectory?;
    let mut timings = Timings::default();
    timings.push("cosim", start.elapsed());
    timings.total_ms = start.elapsed().as_secs_f64() * 1e3;

    let triggers = net
        .app
        .decisions()
        .iter()
        .filter(|d| !d.batches.is_empty())
        .map(|d| TriggerRecord {
            k: d.k,
            tau_ns: periodic_tick(d.k, rate).as_nanos(),
            decision_ns: d.at.as_nanos(),
            batches: d.batches.clone(),
        })
        .collect();
    arrivals.sort_by_key(|a| (a.k, a.threshold_index, a.load_bus));
    let stats = net.queue.stats();
    let run = NetworkRun::from_sim(net, stats);
    let model = if sc.config.control.enabled { command_model(&run, 0) } else { monitoring_model(&run, 0) };
    let report = RunReport {
        scenario: sc.config.name.clone(),
        method: Method::Cosim,
        t_end_ns: sc.t_end.as_nanos(),
        bandwidth_bps: sc.net_params.bandwidth_bps,
        convergence: None,
        min_net_sync_ns: Some(min_net_sync.as_nanos()),
        sync_steps: Some(steps),
        triggers,
        arrivals,
        grid: GridSummary::of(&trajectory),
    };
    let spdc_arrivals = run.spdc_arrivals();
    Ok(RunOutput {
        report,
        timings,
        trajectory,
        delay_models: vec![model],
        traces: vec![run.network.into_trace()],
        spdc_arrivals,
    })
}
