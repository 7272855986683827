use std::path::PathBuf;
use std::sync::OnceLock;

use cpsim_core::orchestrate::{
    convergence_norm, cosim_simulate, interpolate_delay, network_rerun, power_run, probe_pdf0,
    self_consistent_simulate, DelayModel, OrchestrateError, Path,
};
use cpsim_core::scenario::{ConfigError, Scenario, ScenarioConfig};
use cpsim_core::{HostId, SimTime};
use proptest::prelude::*;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> &'static Scenario {
    static C1: OnceLock<Scenario> = OnceLock::new();
    static C2: OnceLock<Scenario> = OnceLock::new();
    let cell = match name {
        "c1" => &C1,
        "c2" => &C2,
        _ => unreachable!(),
    };
    cell.get_or_init(|| Scenario::load(&scenarios().join(format!("{name}.toml"))).unwrap())
}

fn with_config(base: &Scenario, edit: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = base.config.clone();
    edit(&mut cfg);
    Scenario::with_model(cfg, base.model.clone()).unwrap()
}

fn path() -> Path {
    (HostId::spdc(16), HostId::load(8))
}

/// Support points as (trigger ns, delays ns); triggers are made distinct.
fn model_of(points: &[(u64, Vec<u64>)]) -> DelayModel {
    let mut m = DelayModel::new(0);
    for (t, ds) in points {
        for d in ds {
            m.insert(path(), SimTime::from_nanos(*t), SimTime::from_nanos(*d));
        }
    }
    m
}

/// Exact rational reference: mean per trigger, linear between brackets,
/// clamped outside, rounded half-up to the nanosecond.
fn reference(points: &[(u64, Vec<u64>)], tau: u64) -> u64 {
    let mut pts: Vec<(u64, u128, u128)> =
        points.iter().map(|(t, ds)| (*t, ds.iter().map(|&d| d as u128).sum::<u128>(), ds.len() as u128)).collect();
    pts.sort_unstable_by_key(|p| p.0);
    pts.dedup_by_key(|p| p.0);
    let round = |num: u128, den: u128| ((2 * num + den) / (2 * den)) as u64;
    if tau <= pts[0].0 {
        return round(pts[0].1, pts[0].2);
    }
    let last = pts[pts.len() - 1];
    if tau >= last.0 {
        return round(last.1, last.2);
    }
    let i = pts.iter().position(|p| p.0 >= tau).unwrap();
    let ((t0, s0, n0), (t1, s1, n1)) = (pts[i - 1], pts[i]);
    if t1 == tau {
        return round(s1, n1);
    }
    // d0 + (tau - t0) / (t1 - t0) * (d1 - d0), over the common denominator.
    let span = (t1 - t0) as i128;
    let w = (tau - t0) as i128;
    let d0 = s0 as i128 * n1 as i128;
    let d1 = s1 as i128 * n0 as i128;
    let den = n0 as i128 * n1 as i128 * span;
    let num = d0 * span + w * (d1 - d0);
    round(num as u128, den as u128)
}

fn support() -> impl Strategy<Value = Vec<(u64, Vec<u64>)>> {
    prop::collection::btree_map(0u64..5_000_000_000, prop::collection::vec(1_000_000u64..200_000_000, 1..4), 1..6)
        .prop_map(|m| m.into_iter().collect())
}

proptest! {
    #[test]
    fn interpolation_is_exact_at_support_points(points in support()) {
        let m = model_of(&points);
        for (t, ds) in &points {
            let got = interpolate_delay(&m, &path(), SimTime::from_nanos(*t)).unwrap().as_nanos();
            prop_assert_eq!(got, reference(&points, *t));
            if ds.len() == 1 {
                prop_assert_eq!(got, ds[0]);
            }
        }
    }

    #[test]
    fn interpolation_is_linear_between_and_clamped_outside(points in support(), tau in 0u64..6_000_000_000) {
        let m = model_of(&points);
        let got = interpolate_delay(&m, &path(), SimTime::from_nanos(tau)).unwrap().as_nanos();
        let want = reference(&points, tau);
        prop_assert!(got.abs_diff(want) <= 1, "{} vs {}", got, want);
        let lo = points.iter().map(|(t, _)| *t).min().unwrap();
        let hi = points.iter().map(|(t, _)| *t).max().unwrap();
        if tau <= lo || tau >= hi {
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn convergence_norm_is_a_symmetric_distance(a in support(), b in support()) {
        let (ma, mb) = (model_of(&a), model_of(&b));
        let ab = convergence_norm(&ma, &mb).unwrap();
        prop_assert_eq!(ab, convergence_norm(&mb, &ma).unwrap());
        prop_assert_eq!(convergence_norm(&ma, &ma).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        // At a shared trigger the norm bounds the difference of the means.
        for (t, _) in &a {
            let da = interpolate_delay(&ma, &path(), SimTime::from_nanos(*t)).unwrap().as_nanos();
            let db = interpolate_delay(&mb, &path(), SimTime::from_nanos(*t)).unwrap().as_nanos();
            prop_assert!(da.abs_diff(db) as f64 / 1e6 <= ab + 2e-6);
        }
    }

    #[test]
    fn config_round_trips_through_toml(
        t_end_s in 2.0f64..20.0,
        seed in 0u64..=i64::MAX as u64,
        bandwidth_bps in 1u64..10_000_000_000,
        packet_size_bytes in 1u32..9000,
        refractive_index in 1.0f64..2.0,
        thresholds in prop::collection::btree_set(45_000u32..50_000, 0..5),
        reduction_fraction in 0.001f64..0.999,
        epsilon_ms in 1e-6f64..100.0,
        max_iter in 1usize..50,
        min_net_sync_ms in 0.0f64..20.0,
        trip_at in prop::option::of(0.0f64..2.0),
    ) {
        let mut cfg = scenario("c1").config.clone();
        cfg.t_end_s = t_end_s;
        cfg.seed = seed;
        cfg.network.bandwidth_bps = bandwidth_bps;
        cfg.network.packet_size_bytes = packet_size_bytes;
        cfg.network.refractive_index = refractive_index;
        cfg.control.thresholds_hz = thresholds.iter().rev().map(|&t| t as f64 / 1000.0).collect();
        cfg.control.reduction_fraction = reduction_fraction;
        cfg.self_consistent.epsilon_ms = epsilon_ms;
        cfg.self_consistent.max_iter = max_iter;
        cfg.cosim.min_net_sync_ms = min_net_sync_ms;
        match trip_at {
            Some(at) => cfg.events.generator_trips[0].at_s = at,
            None => cfg.events.generator_trips.clear(),
        }
        cfg.validate().unwrap();
        let back = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn disjoint_models_have_no_norm() {
    let a = model_of(&[(0, vec![5])]);
    let mut b = a.clone();
    b.insert((HostId::spdc(16), HostId::load(3)), SimTime::ZERO, SimTime::from_nanos(5));
    assert!(matches!(convergence_norm(&a, &b), Err(OrchestrateError::DisjointPaths)));
    assert!(matches!(
        interpolate_delay(&a, &(HostId::spdc(16), HostId::load(3)), SimTime::ZERO),
        Err(OrchestrateError::UnknownPath { .. })
    ));
}

#[test]
fn config_errors_name_the_field() {
    let text = std::fs::read_to_string(scenarios().join("c1.toml")).unwrap();
    let increasing = text.replace("[49.96, 49.92, 49.88]", "[49.88, 49.92, 49.96]");
    match ScenarioConfig::parse(&increasing) {
        Err(ConfigError::Field { field, message }) => {
            assert_eq!(field, "control.thresholds_hz");
            assert!(message.contains("strictly decreasing"));
        }
        other => panic!("{other:?}"),
    }
    let unknown = text.replace("seed = 0", "seed = 0\nsede = 1");
    assert!(matches!(ScenarioConfig::parse(&unknown), Err(ConfigError::Syntax(_))));
    let mut cfg = scenario("c1").config.clone();
    cfg.seed = u64::MAX;
    assert!(matches!(cfg.validate(), Err(ConfigError::Field { field: "seed", .. })));
    let mut cfg = scenario("c1").config.clone();
    cfg.self_consistent.probe_timestamp_s = 1.01;
    assert!(matches!(cfg.validate(), Err(ConfigError::Field { field: "self_consistent.probe_timestamp_s", .. })));
}

#[test]
fn uncovered_command_path_is_an_error() {
    let res = power_run(scenario("c1"), &DelayModel::new(0));
    assert!(matches!(res, Err(OrchestrateError::UncoveredPath { .. })));
}

#[test]
fn a_quiet_grid_converges_at_once() {
    let sc = with_config(scenario("c2"), |c| {
        c.events.generator_trips.clear();
        c.t_end_s = 2.0;
    });
    let (_, pdf0) = probe_pdf0(&sc).unwrap();
    let pr = power_run(&sc, &pdf0).unwrap();
    assert!(pr.log.is_empty());
    let (_, pdf1) = network_rerun(&sc, &pr.log, &pdf0, 1).unwrap();
    assert_eq!(convergence_norm(&pdf0, &pdf1).unwrap(), 0.0);
    let out = self_consistent_simulate(&sc, 1e-9, 3).unwrap();
    let conv = out.report.convergence.unwrap();
    assert_eq!((conv.iterations, conv.norms_ms), (1, vec![0.0]));
    assert!(out.report.arrivals.is_empty());
}

#[test]
fn zero_sync_spacing_delivers_commands_unquantised() {
    let sc = with_config(scenario("c2"), |c| c.t_end_s = 2.0);
    let out = cosim_simulate(&sc, SimTime::ZERO).unwrap();
    assert!(!out.report.arrivals.is_empty());
    for a in &out.report.arrivals {
        assert_eq!(a.perceived_ns, a.exact_ns, "load {} k {}", a.load_bus, a.k);
    }
}

#[test]
fn one_iteration_is_not_enough_at_800_kbps() {
    let sc = scenario("c1");
    match self_consistent_simulate(sc, sc.epsilon_ms(), 1) {
        Err(OrchestrateError::NotConverged { max_iter, norms }) => {
            assert_eq!(max_iter, 1);
            assert_eq!(norms.len(), 1);
            assert!(norms[0] > sc.epsilon_ms());
        }
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("converged in one iteration"),
    }
}
