//! Per-path, per-trigger delay distributions exchanged between simulators.

use std::collections::BTreeMap;
use std::io::{self, Write};

use super::OrchestrateError;
use crate::netsim::{BusId, HostId};
use crate::time::{div_round_half_up, SimTime};

pub type Path = (HostId, HostId);

/// What the SPDC saw for one timestamp in a network run.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub tau: SimTime,
    /// Decision time minus `tau`.
    pub latency: SimTime,
    pub included_buses: Vec<BusId>,
}

/// Empirical delay distributions keyed by path and trigger timestamp. In the
/// deterministic setting every distribution has a single support point per
/// emitted packet.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DelayModel {
    pub iteration: usize,
    pub paths: BTreeMap<Path, BTreeMap<SimTime, Vec<SimTime>>>,
    /// Measurement-side chain per reporting slot.
    pub decisions: BTreeMap<u64, DecisionRecord>,
}

fn mean_ns(points: &[SimTime]) -> f64 {
    points.iter().map(|p| p.as_nanos() as f64).sum::<f64>() / points.len() as f64
}

impl DelayModel {
    pub fn new(iteration: usize) -> Self {
        DelayModel { iteration, ..Default::default() }
    }

    pub fn insert(&mut self, path: Path, trigger: SimTime, delay: SimTime) {
        self.paths.entry(path).or_default().entry(trigger).or_default().push(delay);
    }

    /// Mean delay of each known trigger on a path, in nanoseconds.
    pub fn means(&self, path: &Path) -> Option<Vec<(SimTime, f64)>> {
        self.paths.get(path).map(|m| m.iter().map(|(t, pts)| (*t, mean_ns(pts))).collect())
    }

    /// `src,dst,trigger_timestamp_ns,mean_delay_ns,support_points`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "src,dst,trigger_timestamp_ns,mean_delay_ns,support_points")?;
        for ((src, dst), entries) in &self.paths {
            for (tau, pts) in entries {
                writeln!(w, "{src},{dst},{},{:.3},{}", tau.as_nanos(), mean_ns(pts), pts.len())?;
            }
        }
        Ok(())
    }

    /// `k,tau_ns,latency_ns,included_buses`
    pub fn write_decisions_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,tau_ns,latency_ns,included_buses")?;
        for (k, d) in &self.decisions {
            let buses: Vec<String> = d.included_buses.iter().map(|b| b.to_string()).collect();
            writeln!(w, "{k},{},{},{}", d.tau.as_nanos(), d.latency.as_nanos(), buses.join("|"))?;
        }
        Ok(())
    }
}

fn interpolate_mean(means: &[(SimTime, f64)], tau: SimTime) -> f64 {
    let pos = means.partition_point(|(t, _)| *t < tau);
    if pos < means.len() && means[pos].0 == tau {
        return means[pos].1;
    }
    if pos == 0 {
        return means[0].1;
    }
    if pos == means.len() {
        return means[means.len() - 1].1;
    }
    let (t0, d0) = means[pos - 1];
    let (t1, d1) = means[pos];
    let w = (tau - t0).as_nanos() as f64 / (t1 - t0).as_nanos() as f64;
    d0 + w * (d1 - d0)
}

/// Mean delay on `path` for a packet triggered at `tau`: exact at known
/// triggers, linear in between, clamped outside.
pub fn interpolate_delay(model: &DelayModel, path: &Path, tau: SimTime) -> Result<SimTime, OrchestrateError> {
    let means = model
        .means(path)
        .filter(|m| !m.is_empty())
        .ok_or(OrchestrateError::UnknownPath { src: path.0, dst: path.1 })?;
    let ns = interpolate_mean(&means, tau);
    // Means of integer support points are multiples of 1/n ns; round half-up.
    let scaled = (ns * 1024.0).round() as u128;
    Ok(SimTime::from_nanos(div_round_half_up(scaled, 1024) as u64))
}

/// Maximum over paths and over the union of trigger grids of the absolute
/// difference between mean delays, in milliseconds.
pub fn convergence_norm(a: &DelayModel, b: &DelayModel) -> Result<f64, OrchestrateError> {
    if a.paths.keys().ne(b.paths.keys()) {
        return Err(OrchestrateError::DisjointPaths);
    }
    let mut worst: f64 = 0.0;
    for (path, ea) in &a.paths {
        let eb = &b.paths[path];
        let (ma, mb) = (a.means(path).expect("present"), b.means(path).expect("present"));
        if ma.is_empty() || mb.is_empty() {
            if ma.len() != mb.len() {
                return Err(OrchestrateError::DisjointPaths);
            }
            continue;
        }
        for tau in ea.keys().chain(eb.keys()) {
            let d = (interpolate_mean(&ma, *tau) - interpolate_mean(&mb, *tau)).abs();
            worst = worst.max(d);
        }
    }
    Ok(worst / 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> Path {
        (HostId::spdc(16), HostId::load(8))
    }

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    fn model(entries: &[(u64, u64)]) -> DelayModel {
        let mut m = DelayModel::new(0);
        for &(t, d) in entries {
            m.insert(path(), ms(t), ms(d));
        }
        m
    }

    #[test]
    fn interpolation_midpoint_exact_and_clamp() {
        let m = model(&[(1100, 10), (1300, 20)]);
        assert_eq!(interpolate_delay(&m, &path(), ms(1200)).unwrap(), ms(15));
        assert_eq!(interpolate_delay(&m, &path(), ms(1100)).unwrap(), ms(10));
        assert_eq!(interpolate_delay(&m, &path(), ms(1500)).unwrap(), ms(20));
        assert_eq!(interpolate_delay(&m, &path(), ms(100)).unwrap(), ms(10));
    }

    #[test]
    fn unknown_path() {
        let m = model(&[(1100, 10)]);
        let other = (HostId::spdc(16), HostId::load(39));
        assert!(matches!(interpolate_delay(&m, &other, ms(1)), Err(OrchestrateError::UnknownPath { .. })));
    }

    #[test]
    fn norm_identical_and_single_difference() {
        let a = model(&[(1100, 10), (1233, 12), (1333, 14)]);
        assert_eq!(convergence_norm(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.paths.get_mut(&path()).unwrap().get_mut(&ms(1333)).unwrap()[0] = SimTime::from_micros(21_500);
        assert!((convergence_norm(&a, &b).unwrap() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn norm_on_union_grid() {
        let a = model(&[(1000, 10)]);
        let b = model(&[(1100, 10), (1300, 30)]);
        // a is flat at 10; b at its own points gives 10 and 30.
        assert!((convergence_norm(&a, &b).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_paths() {
        let a = model(&[(1000, 10)]);
        let b = DelayModel::new(1);
        assert!(matches!(convergence_norm(&a, &b), Err(OrchestrateError::DisjointPaths)));
    }
}
