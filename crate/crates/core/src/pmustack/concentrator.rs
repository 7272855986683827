//! Relative-wait aggregation shared by PDCs and the super-PDC.
//!
//! The wait timer of a timestamp starts on the first item received for it.
//! A timestamp is flushed exactly once, either when every expected source
//! has reported or when the timer expires; anything arriving afterwards is
//! disregarded.

use std::collections::{BTreeMap, BTreeSet};

use crate::netsim::BusId;
use crate::time::SimTime;

/// What the hosting node must do with its timer for a timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerAction {
    None,
    Start { deadline: SimTime },
    Cancel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Flush<T> {
    pub k: u64,
    pub at: SimTime,
    pub first_arrival: SimTime,
    /// Received items by source, ascending source id.
    pub items: Vec<(BusId, T)>,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingest<T> {
    pub timer: TimerAction,
    pub flush: Option<Flush<T>>,
    /// The item arrived after its timestamp had already been flushed.
    pub late: bool,
}

#[derive(Clone, Debug)]
struct Buffer<T> {
    first_arrival: SimTime,
    items: BTreeMap<BusId, T>,
}

#[derive(Clone, Debug)]
pub struct Concentrator<T> {
    expected: BTreeSet<BusId>,
    max_wait: SimTime,
    open: BTreeMap<u64, Buffer<T>>,
    flushed: BTreeSet<u64>,
    late: Vec<(u64, BusId, SimTime)>,
}

impl<T: Clone> Concentrator<T> {
    pub fn new(expected: impl IntoIterator<Item = BusId>, max_wait: SimTime) -> Self {
        Concentrator {
            expected: expected.into_iter().collect(),
            max_wait,
            open: BTreeMap::new(),
            flushed: BTreeSet::new(),
            late: Vec::new(),
        }
    }

    pub fn expected(&self) -> &BTreeSet<BusId> {
        &self.expected
    }

    pub fn max_wait(&self) -> SimTime {
        self.max_wait
    }

    pub fn is_flushed(&self, k: u64) -> bool {
        self.flushed.contains(&k)
    }

    pub fn is_open(&self, k: u64) -> bool {
        self.open.contains_key(&k)
    }

    /// Items that arrived after their timestamp was flushed: `(k, source, t)`.
    pub fn late_arrivals(&self) -> &[(u64, BusId, SimTime)] {
        &self.late
    }

    pub fn ingest(&mut self, k: u64, source: BusId, item: T, t: SimTime) -> Ingest<T> {
        if self.flushed.contains(&k) {
            self.late.push((k, source, t));
            return Ingest { timer: TimerAction::None, flush: None, late: true };
        }
        let opened = !self.open.contains_key(&k);
        let buf = self.open.entry(k).or_insert_with(|| Buffer { first_arrival: t, items: BTreeMap::new() });
        buf.items.entry(source).or_insert(item);
        let complete = self.expected.iter().all(|s| buf.items.contains_key(s));
        if complete {
            let flush = self.flush(k, t, true);
            let timer = if opened { TimerAction::None } else { TimerAction::Cancel };
            return Ingest { timer, flush, late: false };
        }
        let timer = if opened { TimerAction::Start { deadline: t + self.max_wait } } else { TimerAction::None };
        Ingest { timer, flush: None, late: false }
    }

    /// Timer expiry for `k`: flushes whatever was received. `None` if the
    /// timestamp was never opened or is already flushed.
    pub fn timeout(&mut self, k: u64, t: SimTime) -> Option<Flush<T>> {
        self.flush(k, t, false)
    }

    fn flush(&mut self, k: u64, t: SimTime, complete: bool) -> Option<Flush<T>> {
        let buf = self.open.remove(&k)?;
        self.flushed.insert(k);
        Some(Flush { k, at: t, first_arrival: buf.first_arrival, items: buf.items.into_iter().collect(), complete })
    }
}
