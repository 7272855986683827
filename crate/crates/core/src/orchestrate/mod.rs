//! Coupling of the grid and network simulators: the sequential
//! self-consistent iteration and the event-synchronised co-simulation.

mod bench;
mod cosim;
mod delay_model;
mod network_run;
mod power_run;
mod report;
mod self_consistent;

pub use bench::{bench, median, write_bench_csv, BenchResult};
pub use cosim::cosim_simulate;
pub use delay_model::{convergence_norm, interpolate_delay, DecisionRecord, DelayModel, Path};
pub use network_run::{
    app_config, build_netsim, command_model, max_spdc_arrival_gap_ns, monitoring_model, network_rerun, network_run,
    probe_pdf0, NetworkRun, SpdcArrival,
};
pub use power_run::{power_run, AdditionalTraffic, PowerRun, ScheduledReduction, Trigger};
pub use report::{
    compare_reports, write_agreement_csv, ArrivalRecord, Comparison, ConvergenceReport, GridSummary, LoadDelta,
    PhaseTiming, RunOutput, RunReport, TimeBase, Timings, TriggerRecord,
};
pub use self_consistent::self_consistent_simulate;

use thiserror::Error;

use crate::gridsim::GridError;
use crate::netsim::{BusId, HostId, NetError};
use crate::scenario::ConfigError;

#[derive(Debug, Error)]
pub enum OrchestrateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid simulation: {0}")]
    Grid(#[from] GridError),
    #[error("network simulation: {0}")]
    Net(#[from] NetError),
    #[error("no delay entries for path {src} -> {dst}")]
    UnknownPath { src: HostId, dst: HostId },
    #[error("delay models cover different path sets")]
    DisjointPaths,
    #[error("probe command to load {0} never arrived")]
    ProbeDropped(BusId),
    #[error("no convergence after {max_iter} iterations (norms in ms: {norms:?})")]
    NotConverged { max_iter: usize, norms: Vec<f64> },
    #[error("delay model does not cover path {src} -> {dst}")]
    UncoveredPath { src: HostId, dst: HostId },
    #[error("reports describe different scenarios: {0}")]
    ScenarioMismatch(String),
    #[error("co-simulation federate stopped: {0}")]
    Federate(String),
    #[error("{path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}
