mod support;

use std::collections::{BTreeMap, BTreeSet};

use cpsim_core::netsim::{BusId, Measurement, Payload};
use cpsim_core::pmustack::{Aggregate, ControlPolicy, SpdcState, ThresholdControl};
use cpsim_core::SimTime;
use proptest::prelude::*;
use support::pdc::{assignments, check_assignment, run_assignment};

#[test]
fn pdc_wait_matches_oracle_for_every_arrival_assignment() {
    let mut cases = 0usize;
    for offsets in assignments(4) {
        check_assignment(&offsets).unwrap();
        cases += 1;
    }
    assert_eq!(cases, 7 + 49 + 343 + 2401);
}

#[test]
fn arrival_exactly_at_window_close_is_late() {
    let (app, _) = run_assignment(&[Some(0), Some(100)]);
    let f = app.flushes.iter().find(|f| f.k == 0).unwrap();
    assert!(!f.complete);
    assert_eq!(f.entries.len(), 1);
    assert_eq!(app.pdc.concentrator().late_arrivals().len(), 2);
}

fn spdc(policy: ControlPolicy) -> SpdcState {
    SpdcState::new(
        16,
        [2, 6],
        SimTime::from_millis(100),
        ThresholdControl::new(vec![49.96, 49.92, 49.88], 0.02),
        policy,
        vec![39, 8, 23, 8],
    )
}

fn agg(pdc: BusId, k: u64, freqs: &[(BusId, f64)]) -> Aggregate {
    Aggregate {
        pdc_bus: pdc,
        k,
        at: SimTime::ZERO,
        entries: freqs.iter().map(|&(bus, f)| Measurement { bus, k, v_pu: 1.0, theta_rad: 0.0, freq_hz: f }).collect(),
        complete: true,
    }
}

#[test]
fn spdc_releases_all_crossed_thresholds_once() {
    let mut s = spdc(ControlPolicy::Threshold);
    s.ingest(&agg(2, 5, &[(1, 49.90)]), SimTime::from_millis(10));
    let out = s.ingest(&agg(6, 5, &[(4, 49.92), (5, 49.91)]), SimTime::from_millis(20));
    let d = out.decision.unwrap();
    assert_eq!(d.batches, vec![0, 1]);
    assert_eq!(d.included_buses, vec![1, 4, 5]);
    assert!((d.avg_freq_hz.unwrap() - 49.91).abs() < 1e-12);
    let cmds = s.commands(&d, 30, 500);
    let order: Vec<(usize, BusId)> = cmds
        .iter()
        .map(|c| match c.payload {
            Payload::Command { threshold_index, .. } => (threshold_index, c.dst.bus),
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(order, vec![(0, 8), (0, 23), (0, 39), (1, 8), (1, 23), (1, 39)]);
    assert!(cmds.iter().all(|c| c.meas_timestamp == SimTime::from_nanos(166_666_667)));

    s.ingest(&agg(2, 6, &[(1, 49.80)]), SimTime::from_millis(50));
    let d = s.timeout(6, SimTime::from_millis(150)).unwrap();
    assert!(!d.complete);
    assert_eq!(d.batches, vec![2]);
    s.ingest(&agg(2, 7, &[(1, 40.0)]), SimTime::from_millis(90));
    let d = s.timeout(7, SimTime::from_millis(190)).unwrap();
    assert!(d.batches.is_empty());
}

#[test]
fn scripted_policy_replays_batches() {
    let script = BTreeMap::from([(3, vec![0]), (9, vec![1, 2])]);
    let mut s = spdc(ControlPolicy::Scripted(script));
    let mut fired = BTreeMap::new();
    for k in 0..12 {
        s.ingest(&agg(2, k, &[(1, 50.0)]), SimTime::from_millis(10 * k));
        let d = s.ingest(&agg(6, k, &[(4, 50.0)]), SimTime::from_millis(10 * k + 1)).decision.unwrap();
        if !d.batches.is_empty() {
            fired.insert(k, d.batches);
        }
    }
    assert_eq!(fired, BTreeMap::from([(3, vec![0]), (9, vec![1, 2])]));
    assert_eq!(s.control.next_index, 3);
}

proptest! {
    #[test]
    fn thresholds_fire_in_order_at_most_once(readings in prop::collection::vec(49.0f64..50.5, 1..60)) {
        let th = vec![49.96, 49.92, 49.88];
        let mut c = ThresholdControl::new(th.clone(), 0.02);
        let mut all = Vec::new();
        let mut running_min = f64::INFINITY;
        for r in readings {
            running_min = running_min.min(r);
            let fired = c.evaluate(r);
            for &i in &fired {
                prop_assert!(r < th[i]);
            }
            all.extend(fired);
            // thresholds are decreasing, so one reading below th[i] releases 0..=i
            let expected: BTreeSet<usize> = (0..th.len()).filter(|&i| running_min < th[i]).collect();
            prop_assert_eq!(all.iter().copied().collect::<BTreeSet<_>>(), expected);
        }
        prop_assert!(all.windows(2).all(|w| w[1] == w[0] + 1));
        prop_assert!(all.first().is_none_or(|&i| i == 0));
    }
}
