//! Packets and their application payloads.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub type BusId = u32;
pub type PacketId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostRole {
    Pmu,
    Pdc,
    Spdc,
    Load,
}

/// An end host, attached to the router of `bus` through an ideal link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostId {
    pub role: HostRole,
    pub bus: BusId,
}

impl HostId {
    pub const fn pmu(bus: BusId) -> Self {
        HostId { role: HostRole::Pmu, bus }
    }
    pub const fn pdc(bus: BusId) -> Self {
        HostId { role: HostRole::Pdc, bus }
    }
    pub const fn spdc(bus: BusId) -> Self {
        HostId { role: HostRole::Spdc, bus }
    }
    pub const fn load(bus: BusId) -> Self {
        HostId { role: HostRole::Load, bus }
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            HostRole::Pmu => "pmu",
            HostRole::Pdc => "pdc",
            HostRole::Spdc => "spdc",
            HostRole::Load => "load",
        };
        write!(f, "{role}{}", self.bus)
    }
}

impl std::str::FromStr for HostId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = s.find(|c: char| c.is_ascii_digit()).ok_or_else(|| format!("bad host id `{s}`"))?;
        let (role, bus) = s.split_at(split);
        let role = match role {
            "pmu" => HostRole::Pmu,
            "pdc" => HostRole::Pdc,
            "spdc" => HostRole::Spdc,
            "load" => HostRole::Load,
            _ => return Err(format!("bad host role in `{s}`")),
        };
        let bus = bus.parse().map_err(|_| format!("bad bus in `{s}`"))?;
        Ok(HostId { role, bus })
    }
}

impl Serialize for HostId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HostId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    PmuMeasurement,
    PdcAggregate,
    ControlCommand,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::PmuMeasurement => "pmu_measurement",
            PacketKind::PdcAggregate => "pdc_aggregate",
            PacketKind::ControlCommand => "control_command",
        }
    }
}

/// One PMU reading: voltage phasor and local frequency at a time tag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub bus: BusId,
    /// Reporting-grid index of the time tag.
    pub k: u64,
    pub v_pu: f64,
    pub theta_rad: f64,
    pub freq_hz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Measurement(Measurement),
    Aggregate { pdc_bus: BusId, k: u64, entries: Vec<Measurement> },
    Command { k: u64, threshold_index: usize, fraction: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub src: HostId,
    pub dst: HostId,
    pub size_bytes: u32,
    pub kind: PacketKind,
    /// Time tag of the measurement this packet relates to.
    pub meas_timestamp: SimTime,
    pub sent_at: SimTime,
    pub payload: Payload,
}
