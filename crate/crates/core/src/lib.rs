//! Cyber-physical simulation of a transmission grid supervised through a
//! PMU / PDC / super-PDC communication network.
//!
//! Two coupling strategies are provided on top of the same simulators:
//! the sequential self-consistent iteration ([`orchestrate::self_consistent_simulate`])
//! and the event-synchronised co-simulation ([`orchestrate::cosim_simulate`]).

pub mod desim;
pub mod gridsim;
pub mod netsim;
pub mod orchestrate;
pub mod pmustack;
pub mod scenario;
pub mod time;

pub use desim::{Event, EventId, EventQueue, SimStats};
pub use netsim::{HostId, NetParams, Packet, PacketKind};
pub use time::SimTime;
