//! Per-packet delivery and drop records.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::packet::{HostId, PacketId, PacketKind};
use super::topology::DirId;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    NoRoute,
    LinkFailure,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no_route",
            DropReason::LinkFailure => "link_failure",
        }
    }
}

/// One store-and-forward hop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HopRecord {
    pub dir: DirId,
    pub enqueued_at: SimTime,
    pub tx_start: SimTime,
    pub tx_end: SimTime,
    pub arrived_at: SimTime,
}

impl HopRecord {
    pub fn queue_wait(&self) -> SimTime {
        self.tx_start - self.enqueued_at
    }
    pub fn serialization(&self) -> SimTime {
        self.tx_end - self.tx_start
    }
    pub fn propagation(&self) -> SimTime {
        self.arrived_at - self.tx_end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub packet: PacketId,
    pub kind: PacketKind,
    pub src: HostId,
    pub dst: HostId,
    pub meas_timestamp: SimTime,
    pub sent_at: SimTime,
    pub received_at: Option<SimTime>,
    pub dropped: Option<DropReason>,
    pub hops: Vec<HopRecord>,
}

impl TraceRecord {
    pub fn delay(&self) -> Option<SimTime> {
        self.received_at.map(|r| r - self.sent_at)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DelayTrace {
    pub records: Vec<TraceRecord>,
}

impl DelayTrace {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn delivered(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.received_at.is_some())
    }

    pub fn dropped(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.dropped.is_some())
    }

    pub fn of_kind(&self, kind: PacketKind) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn on_path(&self, src: HostId, dst: HostId) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.src == src && r.dst == dst)
    }

    /// Records whose time tag lies in `[from, to]`.
    pub fn in_window(&self, from: SimTime, to: SimTime) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.meas_timestamp >= from && r.meas_timestamp <= to)
    }

    /// Bits offered to link direction `dir` (packets enqueued) in `[from, to)`.
    pub fn offered_bits(&self, dir: DirId, from: SimTime, to: SimTime, packet_bits: u64) -> u64 {
        self.records
            .iter()
            .flat_map(|r| r.hops.iter())
            .filter(|h| h.dir == dir && h.enqueued_at >= from && h.enqueued_at < to)
            .count() as u64
            * packet_bits
    }

    /// `kind,src,dst,meas_timestamp_ns,sent_ns,received_ns,dropped,reason`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "kind,src,dst,meas_timestamp_ns,sent_ns,received_ns,dropped,reason")?;
        for r in &self.records {
            let received = r.received_at.map(|t| t.as_nanos().to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.kind.as_str(),
                r.src,
                r.dst,
                r.meas_timestamp.as_nanos(),
                r.sent_at.as_nanos(),
                received,
                r.dropped.is_some(),
                r.dropped.map(DropReason::as_str).unwrap_or("")
            )?;
        }
        Ok(())
    }
}
