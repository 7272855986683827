//! Grid run with communication delays injected from a delay model.

use super::delay_model::{interpolate_delay, DelayModel};
use super::OrchestrateError;
use crate::gridsim::{init_steady_state, GridEvent, GridEventKind, GridSim, Trajectory};
use crate::netsim::{BusId, HostId, PacketKind};
use crate::pmustack::{average_frequency, ThresholdControl};
use crate::scenario::Scenario;
use crate::time::SimTime;

/// A command the grid run expects the network to carry.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditionalTraffic {
    pub send_time: SimTime,
    pub src: HostId,
    pub dst: HostId,
    pub kind: PacketKind,
    pub size_bytes: u32,
    pub k: u64,
    pub threshold_index: usize,
}

/// A slot at which the super-PDC releases command batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Trigger {
    pub k: u64,
    pub tau: SimTime,
    pub decision_at: SimTime,
    pub avg_freq_hz: f64,
    pub batches: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledReduction {
    pub load_bus: BusId,
    pub k: u64,
    pub threshold_index: usize,
    pub tau: SimTime,
    pub at: SimTime,
}

pub struct PowerRun {
    pub trajectory: Trajectory,
    pub log: Vec<AdditionalTraffic>,
    pub triggers: Vec<Trigger>,
    pub reductions: Vec<ScheduledReduction>,
}

/// Integrates the grid over the scenario horizon. At every slot the model's
/// measurement chain knows about, the buses the super-PDC received are
/// averaged and compared against the thresholds; released batches reduce
/// each load at the slot time plus the modelled command delay.
pub fn power_run(sc: &Scenario, model: &DelayModel) -> Result<PowerRun, OrchestrateError> {
    let control_on = sc.config.control.enabled;
    let spdc = HostId::spdc(sc.config.hosts.spdc_bus);
    if control_on {
        for &load in &sc.load_buses {
            let path = (spdc, HostId::load(load));
            if model.paths.get(&path).is_none_or(|e| e.is_empty()) {
                return Err(OrchestrateError::UncoveredPath { src: path.0, dst: path.1 });
            }
        }
    }
    let c = &sc.config.control;
    let mut control = ThresholdControl::new(c.thresholds_hz.clone(), c.reduction_fraction);
    let state = init_steady_state(&sc.model)?;
    let mut sim = GridSim::new(&sc.model, state, sc.report_rate_hz());
    for ev in &sc.grid_events {
        sim.schedule(ev.clone())?;
    }
    let mut log = Vec::new();
    let mut triggers = Vec::new();
    let mut reductions = Vec::new();
    let size = sc.net_params.packet_size_bytes;
    sim.advance_to(sc.t_end, |sim, row| {
        if !control_on {
            return Ok(());
        }
        let Some(d) = model.decisions.get(&row.k) else { return Ok(()) };
        let index = &sim.model().index;
        let avg = average_frequency(d.included_buses.iter().filter_map(|b| index.of(*b)).map(|i| row.buses[i].freq_hz));
        let Some(avg) = avg else { return Ok(()) };
        let batches = control.evaluate(avg);
        if batches.is_empty() {
            return Ok(());
        }
        let decision_at = row.t + d.latency;
        for &idx in &batches {
            for &load in &sc.load_buses {
                let dst = HostId::load(load);
                let delay = interpolate_delay(model, &(spdc, dst), row.t).expect("coverage checked");
                let at = row.t + delay;
                log.push(AdditionalTraffic {
                    send_time: decision_at,
                    src: spdc,
                    dst,
                    kind: PacketKind::ControlCommand,
                    size_bytes: size,
                    k: row.k,
                    threshold_index: idx,
                });
                reductions.push(ScheduledReduction { load_bus: load, k: row.k, threshold_index: idx, tau: row.t, at });
                sim.schedule(GridEvent {
                    at,
                    kind: GridEventKind::LoadReduction {
                        load_bus: load,
                        fraction: c.reduction_fraction,
                        threshold_index: idx,
                    },
                })?;
            }
        }
        triggers.push(Trigger { k: row.k, tau: row.t, decision_at, avg_freq_hz: avg, batches });
        Ok(())
    })?;
    Ok(PowerRun { trajectory: sim.into_trajectory(), log, triggers, reductions })
}
