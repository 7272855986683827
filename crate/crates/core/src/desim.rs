//! Deterministic discrete-event kernel.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is the insertion
//! counter, so simultaneous events fire in the order they were scheduled and
//! two runs with identical inputs produce identical event sequences.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use thiserror::Error;

use crate::time::SimTime;

/// Handle returned by [`EventQueue::schedule`]; usable with [`EventQueue::cancel`].
pub type EventId = u64;

/// Payloads carried by the queue describe themselves for the trace dump.
pub trait EventKind {
    fn label(&self) -> &'static str;

    fn summary(&self) -> String {
        String::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: K,
}

impl<K> Event<K> {
    pub fn id(&self) -> EventId {
        self.seq
    }
}

struct Entry<K>(Event<K>);

impl<K> PartialEq for Entry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<K> Eq for Entry<K> {}

impl<K> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// BinaryHeap is a max-heap; earliest (fire_at, seq) must come out first.
impl<K> Ord for Entry<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Pending,
    Fired,
    Cancelled,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DesimError {
    #[error("event scheduled at {at} is before the current clock {clock}")]
    PastEvent { at: SimTime, clock: SimTime },
    #[error("run end {t_end} is before the current clock {clock}")]
    EndBeforeClock { t_end: SimTime, clock: SimTime },
}

/// A handler failure, with the event that was being processed.
#[derive(Debug, Error)]
#[error("handler fault at {fire_at} (seq {seq}, {label}): {source}")]
pub struct HandlerFault<E: std::error::Error + 'static> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub label: &'static str,
    #[source]
    pub source: E,
}

#[derive(Debug, Error)]
pub enum RunError<E: std::error::Error + 'static> {
    #[error(transparent)]
    Schedule(#[from] DesimError),
    #[error(transparent)]
    Handler(HandlerFault<E>),
}

/// Counters describing a queue's life so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    pub events_in: u64,
    pub events_fired: u64,
    pub events_cancelled: u64,
    pub events_pending: u64,
    pub max_queue_depth: usize,
    /// Events fired by the last `run_until` call only.
    pub processed: u64,
}

pub struct EventQueue<K> {
    heap: BinaryHeap<Entry<K>>,
    status: Vec<Status>,
    clock: SimTime,
    pending: usize,
    fired: u64,
    cancelled: u64,
    max_depth: usize,
    trace: Option<Vec<String>>,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            status: Vec::new(),
            clock: SimTime::ZERO,
            pending: 0,
            fired: 0,
            cancelled: 0,
            max_depth: 0,
            trace: None,
        }
    }

    /// Records one line per fired event (see [`EventQueue::write_trace`]).
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    /// Number of pending (not fired, not cancelled) events.
    pub fn len(&self) -> usize {
        self.pending
    }

    pub fn is_empty(&self) -> bool {
        self.pending == 0
    }

    pub fn schedule(&mut self, fire_at: SimTime, kind: K) -> Result<EventId, DesimError> {
        if fire_at < self.clock {
            return Err(DesimError::PastEvent { at: fire_at, clock: self.clock });
        }
        let seq = self.status.len() as u64;
        self.status.push(Status::Pending);
        self.heap.push(Entry(Event { fire_at, seq, kind }));
        self.pending += 1;
        self.max_depth = self.max_depth.max(self.pending);
        Ok(seq)
    }

    /// Schedules `delay` after the current clock.
    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> Result<EventId, DesimError> {
        let at = self.clock.checked_add(delay).ok_or(DesimError::PastEvent { at: SimTime::MAX, clock: self.clock })?;
        self.schedule(at, kind)
    }

    /// Returns true iff the event was pending and is now removed.
    pub fn cancel(&mut self, id: EventId) -> bool {
        match self.status.get_mut(id as usize) {
            Some(s @ Status::Pending) => {
                *s = Status::Cancelled;
                self.pending -= 1;
                self.cancelled += 1;
                true
            }
            _ => false,
        }
    }

    pub fn is_pending(&self, id: EventId) -> bool {
        self.status.get(id as usize) == Some(&Status::Pending)
    }

    fn drop_cancelled_head(&mut self) {
        while let Some(Entry(ev)) = self.heap.peek() {
            if self.status[ev.seq as usize] == Status::Cancelled {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    /// Fire time of the next pending event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.drop_cancelled_head();
        self.heap.peek().map(|e| e.0.fire_at)
    }

    /// Pops the next pending event if it fires at or before `limit`,
    /// advancing the clock to its fire time.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<Event<K>> {
        self.drop_cancelled_head();
        if self.heap.peek()?.0.fire_at > limit {
            return None;
        }
        let Entry(ev) = self.heap.pop()?;
        self.status[ev.seq as usize] = Status::Fired;
        self.pending -= 1;
        self.fired += 1;
        self.clock = ev.fire_at;
        Some(ev)
    }

    /// Moves the clock forward without firing anything. Fails if an event
    /// earlier than `t` is still pending or `t` is in the past.
    pub fn advance_clock(&mut self, t: SimTime) -> Result<(), DesimError> {
        if t < self.clock {
            return Err(DesimError::EndBeforeClock { t_end: t, clock: self.clock });
        }
        if let Some(next) = self.peek_time() {
            if next < t {
                return Err(DesimError::PastEvent { at: next, clock: t });
            }
        }
        self.clock = t;
        Ok(())
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            events_in: self.status.len() as u64,
            events_fired: self.fired,
            events_cancelled: self.cancelled,
            events_pending: self.pending as u64,
            max_queue_depth: self.max_depth,
            processed: 0,
        }
    }

    pub fn trace_lines(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Writes the trace as `fire_at_ns\tseq\tkind\tsummary` lines.
    pub fn write_trace<W: Write>(&self, mut w: W) -> io::Result<()> {
        for line in self.trace_lines() {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

impl<K: EventKind> EventQueue<K> {
    fn record(&mut self, ev: &Event<K>) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(format!("{}\t{}\t{}\t{}", ev.fire_at.as_nanos(), ev.seq, ev.kind.label(), ev.kind.summary()));
        }
    }

    /// Processes every event with `fire_at <= t_end` in order, then sets the
    /// clock to `t_end`. The handler may schedule and cancel events.
    pub fn run_until<E, F>(&mut self, t_end: SimTime, mut handler: F) -> Result<SimStats, RunError<E>>
    where
        E: std::error::Error + 'static,
        F: FnMut(&mut EventQueue<K>, Event<K>) -> Result<(), E>,
    {
        if t_end < self.clock {
            return Err(DesimError::EndBeforeClock { t_end, clock: self.clock }.into());
        }
        let mut processed = 0;
        while let Some(ev) = self.pop_until(t_end) {
            self.record(&ev);
            processed += 1;
            let (fire_at, seq, label) = (ev.fire_at, ev.seq, ev.kind.label());
            if let Err(source) = handler(self, ev) {
                return Err(RunError::Handler(HandlerFault { fire_at, seq, label, source }));
            }
        }
        self.clock = t_end;
        let mut stats = self.stats();
        stats.processed = processed;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[derive(Debug, Clone, PartialEq)]
    struct Tag(u32);

    impl EventKind for Tag {
        fn label(&self) -> &'static str {
            "tag"
        }
        fn summary(&self) -> String {
            self.0.to_string()
        }
    }

    #[derive(Debug, thiserror::Error)]
    #[error("boom")]
    struct Boom;

    fn drain(q: &mut EventQueue<Tag>, t_end: SimTime) -> Vec<(SimTime, u32)> {
        let mut out = Vec::new();
        q.run_until(t_end, |_, ev| {
            out.push((ev.fire_at, ev.kind.0));
            Ok::<_, Infallible>(())
        })
        .unwrap();
        out
    }

    #[test]
    fn schedule_on_empty_queue() {
        let mut q = EventQueue::new();
        assert_eq!(q.schedule(SimTime::ZERO, Tag(0)).unwrap(), 0);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn ties_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        let t = SimTime::from_millis(3);
        for i in 0..5 {
            q.schedule(t, Tag(i)).unwrap();
        }
        q.schedule(SimTime::from_millis(1), Tag(99)).unwrap();
        let order: Vec<u32> = drain(&mut q, t).into_iter().map(|(_, k)| k).collect();
        assert_eq!(order, vec![99, 0, 1, 2, 3, 4]);
    }

    #[test]
    fn past_event_is_rejected() {
        let mut q: EventQueue<Tag> = EventQueue::new();
        q.run_until(SimTime::from_secs(1), |_, _| Ok::<_, Infallible>(())).unwrap();
        let err = q.schedule(SimTime::from_secs(1) - SimTime::from_nanos(1), Tag(0)).unwrap_err();
        assert!(matches!(err, DesimError::PastEvent { .. }));
    }

    #[test]
    fn cancel_semantics() {
        let mut q = EventQueue::new();
        let a = q.schedule(SimTime::from_millis(1), Tag(1)).unwrap();
        let b = q.schedule(SimTime::from_millis(2), Tag(2)).unwrap();
        assert!(q.cancel(b));
        assert_eq!(q.len(), 1);
        assert!(!q.cancel(b));
        drain(&mut q, SimTime::from_millis(5));
        assert!(!q.cancel(a), "cancel after fire");
        let s = q.stats();
        assert_eq!((s.events_in, s.events_fired, s.events_cancelled, s.events_pending), (2, 1, 1, 0));
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut q: EventQueue<Tag> = EventQueue::new();
        let stats = q.run_until(SimTime::from_secs(5), |_, _| Ok::<_, Infallible>(())).unwrap();
        assert_eq!(stats.processed, 0);
        assert_eq!(q.clock(), SimTime::from_secs(5));
    }

    #[test]
    fn periodic_pmu_ticks_count() {
        // 39 PMUs reporting 30 times per second for 5 s, each tick re-arming itself.
        let mut q = EventQueue::new();
        for bus in 0..39 {
            q.schedule(SimTime::ZERO, Tag(bus)).unwrap();
        }
        let t_end = SimTime::from_secs(5);
        let mut k = vec![0u64; 39];
        let stats = q
            .run_until(t_end, |q, ev| {
                let bus = ev.kind.0 as usize;
                k[bus] += 1;
                let next = crate::time::periodic_tick(k[bus], 30);
                if next < t_end {
                    q.schedule(next, Tag(bus as u32)).unwrap();
                }
                Ok::<_, Infallible>(())
            })
            .unwrap();
        assert_eq!(stats.processed, 5850);
        assert!(k.iter().all(|&n| n == 150));
    }

    #[test]
    fn end_boundary_is_inclusive() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(5), Tag(7)).unwrap();
        assert_eq!(drain(&mut q, SimTime::from_secs(5)).len(), 1);
    }

    #[test]
    fn handler_fault_carries_event() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_millis(4), Tag(42)).unwrap();
        let err = q.run_until(SimTime::from_secs(1), |_, _| Err(Boom)).unwrap_err();
        match err {
            RunError::Handler(f) => {
                assert_eq!(f.fire_at, SimTime::from_millis(4));
                assert_eq!(f.seq, 0);
                assert_eq!(f.label, "tag");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_is_tab_separated() {
        let mut q = EventQueue::new().with_trace();
        q.schedule(SimTime::from_nanos(10), Tag(3)).unwrap();
        drain(&mut q, SimTime::from_nanos(10));
        let mut buf = Vec::new();
        q.write_trace(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "10\t0\ttag\t3\n");
    }
}
