use std::convert::Infallible;

use cpsim_core::desim::{DesimError, EventKind, EventQueue};
use cpsim_core::SimTime;
use proptest::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Job(u64);

impl EventKind for Job {
    fn label(&self) -> &'static str {
        "job"
    }
}

/// Every third job spawns a follower a few ns later.
fn child(j: Job) -> Option<(u64, Job)> {
    (j.0.is_multiple_of(3) && j.0 < 1000).then(|| (j.0 % 7, Job(j.0 + 1000)))
}

/// Linear-scan reference queue: pick the earliest time, then the earliest
/// insertion.
fn reference(initial: &[(u64, bool)], t_end: u64) -> Vec<(u64, u64)> {
    let mut pending: Vec<(u64, u64, Job, bool)> =
        initial.iter().enumerate().map(|(i, &(t, cancel))| (t, i as u64, Job(i as u64), cancel)).collect();
    let mut next_seq = pending.len() as u64;
    let mut fired = Vec::new();
    while let Some(pos) =
        pending.iter().enumerate().filter(|(_, e)| !e.3 && e.0 <= t_end).min_by_key(|(_, e)| (e.0, e.1)).map(|(i, _)| i)
    {
        let (t, _, job, _) = pending.remove(pos);
        fired.push((t, job.0));
        if let Some((d, c)) = child(job) {
            pending.push((t + d, next_seq, c, false));
            next_seq += 1;
        }
    }
    fired
}

fn queue_run(initial: &[(u64, bool)], cuts: &[u64], t_end: u64) -> Vec<(u64, u64)> {
    let mut q = EventQueue::new();
    let ids: Vec<_> = initial
        .iter()
        .enumerate()
        .map(|(i, &(t, _))| q.schedule(SimTime::from_nanos(t), Job(i as u64)).unwrap())
        .collect();
    for (id, &(_, cancel)) in ids.iter().zip(initial) {
        if cancel {
            assert!(q.cancel(*id));
            assert!(!q.cancel(*id));
        }
    }
    let mut fired = Vec::new();
    let mut stops: Vec<u64> = cuts.iter().copied().filter(|&c| c < t_end).collect();
    stops.sort_unstable();
    stops.push(t_end);
    for stop in stops {
        q.run_until(SimTime::from_nanos(stop), |q, ev| {
            assert_eq!(q.clock(), ev.fire_at);
            fired.push((ev.fire_at.as_nanos(), ev.kind.0));
            if let Some((d, c)) = child(ev.kind) {
                q.schedule_in(SimTime::from_nanos(d), c).unwrap();
            }
            Ok::<_, Infallible>(())
        })
        .unwrap();
        assert_eq!(q.clock(), SimTime::from_nanos(stop));
    }
    fired
}

proptest! {
    #[test]
    fn queue_matches_reference_order(
        initial in prop::collection::vec((0u64..60, prop::bool::weighted(0.2)), 0..80),
        cuts in prop::collection::vec(0u64..80, 0..6),
        t_end in 0u64..80,
    ) {
        prop_assert_eq!(queue_run(&initial, &cuts, t_end), reference(&initial, t_end));
    }
}

#[test]
fn simultaneous_events_fire_in_insertion_order() {
    let mut q = EventQueue::new();
    for i in 0..5 {
        q.schedule(SimTime::from_millis(1), Job(i)).unwrap();
    }
    let mut order = Vec::new();
    q.run_until(SimTime::from_millis(1), |_, ev| {
        order.push(ev.kind.0);
        Ok::<_, Infallible>(())
    })
    .unwrap();
    assert_eq!(order, vec![0, 1, 2, 3, 4]);
}

#[test]
fn past_scheduling_and_backwards_runs_fail() {
    let mut q: EventQueue<Job> = EventQueue::new();
    q.run_until(SimTime::from_millis(5), |_, _| Ok::<_, Infallible>(())).unwrap();
    assert_eq!(
        q.schedule(SimTime::from_millis(4), Job(0)),
        Err(DesimError::PastEvent { at: SimTime::from_millis(4), clock: SimTime::from_millis(5) })
    );
    assert!(q.run_until(SimTime::from_millis(3), |_, _| Ok::<_, Infallible>(())).is_err());
}

#[test]
fn stats_account_for_every_event() {
    let mut q = EventQueue::new().with_trace();
    let a = q.schedule(SimTime::from_nanos(10), Job(0)).unwrap();
    q.schedule(SimTime::from_nanos(20), Job(3)).unwrap();
    q.schedule(SimTime::from_nanos(30), Job(1)).unwrap();
    q.cancel(a);
    let stats = q
        .run_until(SimTime::from_nanos(25), |q, ev| {
            if let Some((d, c)) = child(ev.kind) {
                q.schedule_in(SimTime::from_nanos(d), c).unwrap();
            }
            Ok::<_, Infallible>(())
        })
        .unwrap();
    assert_eq!(stats.events_in, 4);
    assert_eq!(stats.events_fired, 2);
    assert_eq!(stats.events_cancelled, 1);
    assert_eq!(stats.events_pending, 1);
    assert_eq!(stats.processed, 2);
    assert_eq!(q.trace_lines(), ["20\t1\tjob\t", "23\t3\tjob\t"]);
}
