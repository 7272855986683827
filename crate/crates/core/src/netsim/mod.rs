//! Discrete-event communication network simulator.

mod engine;
mod packet;
mod routing;
mod topology;
mod trace;

pub use engine::{Application, NetCtx, NetEvent, NetSim, Network};
pub use packet::{BusId, HostId, HostRole, Measurement, Packet, PacketId, PacketKind, Payload};
pub use routing::{compute_routes, RoutingTable};
pub use topology::{
    build_network, line_length_km, propagation_delay, serialization_time, DirId, HostPlacement, LineSpec, Link, LinkId,
    NetParams, NetTopology, SPEED_OF_LIGHT_KM_S,
};
pub use trace::{DelayTrace, DropReason, HopRecord, TraceRecord};

use thiserror::Error;

use crate::desim::DesimError;
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("communication graph is disconnected")]
    DisconnectedGraph,
    #[error("branch {bus_a}-{bus_b} has no usable series reactance")]
    MissingImpedance { bus_a: BusId, bus_b: BusId },
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("no link between buses {bus_a} and {bus_b}")]
    UnknownLink { bus_a: BusId, bus_b: BusId },
    #[error("unreachable destinations: {0:?}")]
    Unreachable(Vec<BusId>),
    #[error("invalid network parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Schedule(#[from] DesimError),
    #[error("fault while processing {label} at {at}: {source}")]
    Fault {
        at: SimTime,
        label: &'static str,
        #[source]
        source: Box<NetError>,
    },
}

impl PartialEq for NetError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}
