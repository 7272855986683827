//! Electromechanical simulation of the transmission grid: power flow,
//! classical machines with droop governors, constant-impedance loads.

mod case;
mod dynamics;
mod model;
mod powerflow;

pub use case::{BranchSpec, BusSpec, CaseSpec, GeneratorSpec, GovernorSpec};
pub use dynamics::{
    bus_voltage_map, coi_speed, init_steady_state, integrate, sample_all, sample_phasor, DensePoint, GridEvent,
    GridEventKind, GridSim, GridState, SampleRow, Trajectory, STEP, WASHOUT_T_S,
};
pub use model::{Machine, PowerModel, ReducedNetwork};
pub use powerflow::{build_ybus, solve_power_flow, solve_with_target_generation, BusIndex, PowerFlowSolution};

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("case file: {0}")]
    Parse(String),
    #[error("power flow diverged after {iterations} iterations (mismatch {mismatch_pu:e} pu)")]
    PowerFlowDiverged { iterations: usize, mismatch_pu: f64 },
    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),
    #[error("network admittance matrix is singular")]
    SingularNetwork,
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("generator {0} already tripped")]
    AlreadyTripped(u32),
    #[error("reduction fraction {0} outside [0, 1)")]
    InvalidFraction(f64),
    #[error("event at {at} precedes current time {now}")]
    EventInPast { at: SimTime, now: SimTime },
    #[error("integration diverged after {last_valid}")]
    IntegrationDiverged { last_valid: SimTime },
}
