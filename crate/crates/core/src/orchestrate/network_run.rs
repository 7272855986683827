//! Network-only runs and delay-model extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use super::delay_model::{DecisionRecord, DelayModel};
use super::power_run::AdditionalTraffic;
use super::OrchestrateError;
use crate::desim::SimStats;
use crate::netsim::{build_network, compute_routes, BusId, DelayTrace, HostId, NetSim, Network};
use crate::pmustack::{
    AggregateReceipt, AppConfig, CommandArrival, ControlPolicy, Decision, SmartGridApp, ThresholdControl,
};
use crate::scenario::Scenario;
use crate::time::{periodic_tick, SimTime};

pub fn app_config(sc: &Scenario, policy: ControlPolicy) -> AppConfig {
    let c = &sc.config.control;
    AppConfig {
        report_rate_hz: sc.report_rate_hz(),
        pmu_to_pdc: sc.zones.clone(),
        spdc_bus: sc.config.hosts.spdc_bus,
        load_buses: sc.load_buses.clone(),
        pdc_max_wait: sc.pdc_max_wait,
        spdc_max_wait: sc.spdc_max_wait,
        control: ThresholdControl::new(c.thresholds_hz.clone(), c.reduction_fraction),
        policy,
        ticks_until: sc.t_end,
        packet_size_bytes: sc.net_params.packet_size_bytes,
        record_events: false,
    }
}

/// A started network simulation with the scenario's link failures armed.
pub fn build_netsim(sc: &Scenario, policy: ControlPolicy) -> Result<NetSim<SmartGridApp>, OrchestrateError> {
    let topo = build_network(&sc.lines, &sc.buses, &sc.net_params, &sc.placement())?;
    let routes = compute_routes(&topo)?;
    let mut sim = NetSim::new(topo, routes, SmartGridApp::new(app_config(sc, policy)));
    sim.with_ctx(|app, ctx| app.start(ctx))?;
    for &(a, b, at) in &sc.link_failures {
        sim.fail_link(a, b, at)?;
    }
    Ok(sim)
}

/// One source measurement as seen by the super-PDC.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpdcArrival {
    pub k: u64,
    pub pmu_bus: BusId,
    pub pdc_bus: BusId,
    pub tau: SimTime,
    pub at: SimTime,
}

impl SpdcArrival {
    /// `k,tau_ns,pmu_bus,pdc_bus,arrival_ns,delay_ns`, sorted by slot then bus.
    pub fn write_csv<W: Write>(rows: &[SpdcArrival], mut w: W) -> io::Result<()> {
        writeln!(w, "k,tau_ns,pmu_bus,pdc_bus,arrival_ns,delay_ns")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.k,
                r.tau.as_nanos(),
                r.pmu_bus,
                r.pdc_bus,
                r.at.as_nanos(),
                (r.at - r.tau).as_nanos()
            )?;
        }
        Ok(())
    }
}

/// Outputs of a completed network run.
pub struct NetworkRun {
    pub network: Network,
    pub decisions: Vec<Decision>,
    pub receipts: Vec<AggregateReceipt>,
    pub arrivals: Vec<CommandArrival>,
    pub stats: SimStats,
    pub report_rate_hz: u32,
    pub spdc_bus: BusId,
}

impl NetworkRun {
    pub fn from_sim(sim: NetSim<SmartGridApp>, stats: SimStats) -> Self {
        let report_rate_hz = sim.app.config().report_rate_hz;
        let spdc_bus = sim.app.config().spdc_bus;
        NetworkRun {
            decisions: sim.app.decisions().to_vec(),
            receipts: sim.app.receipts().to_vec(),
            arrivals: sim.app.arrivals().to_vec(),
            network: sim.net,
            stats,
            report_rate_hz,
            spdc_bus,
        }
    }

    pub fn trace(&self) -> &DelayTrace {
        self.network.trace()
    }

    /// Per-source arrivals at the super-PDC, late aggregates included.
    pub fn spdc_arrivals(&self) -> Vec<SpdcArrival> {
        let mut rows: Vec<SpdcArrival> = self
            .receipts
            .iter()
            .flat_map(|r| {
                let tau = periodic_tick(r.k, self.report_rate_hz);
                r.buses.iter().map(move |&b| SpdcArrival { k: r.k, pmu_bus: b, pdc_bus: r.pdc_bus, tau, at: r.at })
            })
            .collect();
        rows.sort_by_key(|r| (r.k, r.pmu_bus, r.at));
        rows
    }
}

/// Largest arrival-time difference between two SPDC arrival tables of the
/// same scenario, row by row.
pub fn max_spdc_arrival_gap_ns(a: &[SpdcArrival], b: &[SpdcArrival]) -> Result<u64, OrchestrateError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x.k, x.pmu_bus) != (y.k, y.pmu_bus)) {
        return Err(OrchestrateError::ScenarioMismatch(format!(
            "{} vs {} SPDC arrivals with different slots or sources",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.at.as_nanos().abs_diff(y.at.as_nanos())).max().unwrap_or(0))
}

pub fn network_run(sc: &Scenario, policy: ControlPolicy) -> Result<NetworkRun, OrchestrateError> {
    let mut sim = build_netsim(sc, policy)?;
    let stats = sim.run_until(sc.t_end)?;
    Ok(NetworkRun::from_sim(sim, stats))
}

fn decision_table(run: &NetworkRun) -> BTreeMap<u64, DecisionRecord> {
    run.decisions
        .iter()
        .map(|d| {
            let tau = periodic_tick(d.k, run.report_rate_hz);
            (d.k, DecisionRecord { tau, latency: d.at - tau, included_buses: d.included_buses.clone() })
        })
        .collect()
}

/// Super-PDC to load delays, measured from the triggering time tag.
pub fn command_model(run: &NetworkRun, iteration: usize) -> DelayModel {
    let mut m = DelayModel::new(iteration);
    for a in &run.arrivals {
        m.insert(
            (HostId::spdc(run.spdc_bus), HostId::load(a.load_bus)),
            a.meas_timestamp,
            a.arrived_at - a.meas_timestamp,
        );
    }
    m.decisions = decision_table(run);
    m
}

/// PMU to super-PDC delays of every received measurement.
pub fn monitoring_model(run: &NetworkRun, iteration: usize) -> DelayModel {
    let mut m = DelayModel::new(iteration);
    for a in run.spdc_arrivals() {
        m.insert((HostId::pmu(a.pmu_bus), HostId::spdc(run.spdc_bus)), a.tau, a.at - a.tau);
    }
    m.decisions = decision_table(run);
    m
}

/// Network run with monitoring traffic only (plus one command batch at the
/// probe slot when control is enabled), yielding the initial delay model.
pub fn probe_pdf0(sc: &Scenario) -> Result<(NetworkRun, DelayModel), OrchestrateError> {
    if !sc.config.control.enabled {
        let run = network_run(sc, ControlPolicy::Off)?;
        let m = monitoring_model(&run, 0);
        return Ok((run, m));
    }
    let script = BTreeMap::from([(sc.probe_k, vec![0])]);
    let run = network_run(sc, ControlPolicy::Scripted(script))?;
    let reached: BTreeSet<BusId> = run.arrivals.iter().filter(|a| a.k == sc.probe_k).map(|a| a.load_bus).collect();
    if let Some(&missing) = sc.load_buses.iter().find(|b| !reached.contains(b)) {
        return Err(OrchestrateError::ProbeDropped(missing));
    }
    let m = command_model(&run, 0);
    Ok((run, m))
}

/// Replays monitoring traffic plus logged commands and extracts the next
/// delay model. Command paths absent from the run (no commands logged) keep
/// their previous entries.
pub fn network_rerun(
    sc: &Scenario,
    log: &[AdditionalTraffic],
    previous: &DelayModel,
    iteration: usize,
) -> Result<(NetworkRun, DelayModel), OrchestrateError> {
    if !sc.config.control.enabled {
        let run = network_run(sc, ControlPolicy::Off)?;
        let m = monitoring_model(&run, iteration);
        return Ok((run, m));
    }
    let mut script: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for t in log {
        let batches = script.entry(t.k).or_default();
        if !batches.contains(&t.threshold_index) {
            batches.push(t.threshold_index);
        }
    }
    let run = network_run(sc, ControlPolicy::Scripted(script))?;
    let mut m = command_model(&run, iteration);
    if log.is_empty() {
        for (path, entries) in &previous.paths {
            m.paths.entry(*path).or_insert_with(|| entries.clone());
        }
    }
    Ok((run, m))
}
