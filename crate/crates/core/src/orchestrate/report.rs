//! Run reports, timings and artifact files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::delay_model::DelayModel;
use super::network_run::SpdcArrival;
use super::OrchestrateError;
use crate::gridsim::Trajectory;
use crate::netsim::{BusId, DelayTrace};
use crate::scenario::Method;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilon_ms: f64,
    pub norms_ms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub k: u64,
    pub tau_ns: u64,
    pub decision_ns: u64,
    pub batches: Vec<usize>,
}

/// A command reaching its load: when the network delivered it and when the
/// grid acted on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    pub load_bus: BusId,
    pub k: u64,
    pub threshold_index: usize,
    pub tau_ns: u64,
    pub exact_ns: u64,
    pub perceived_ns: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    /// Seconds from the first generator trip (or from zero) to the first
    /// bus frequency below 49 Hz.
    pub crossing_49hz_after_s: Option<f64>,
    pub coi_nadir_hz: f64,
    pub min_bus_frequency_hz: f64,
    pub load_reductions: usize,
}

impl GridSummary {
    pub fn of(traj: &Trajectory) -> Self {
        let origin = traj
            .events
            .iter()
            .find(|e| matches!(e.kind, crate::gridsim::GridEventKind::GeneratorTrip { .. }))
            .map_or(0.0, |e| e.at.as_secs_f64());
        GridSummary {
            crossing_49hz_after_s: traj.first_crossing_below(49.0).map(|t| t - origin),
            coi_nadir_hz: traj.coi_nadir_hz(),
            min_bus_frequency_hz: traj.min_bus_frequency_hz(),
            load_reductions: traj
                .events
                .iter()
                .filter(|e| matches!(e.kind, crate::gridsim::GridEventKind::LoadReduction { .. }))
                .count(),
        }
    }
}

/// Deterministic summary of a run; wall-clock figures live in [`Timings`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub method: Method,
    pub t_end_ns: u64,
    pub bandwidth_bps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_net_sync_ns: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sync_steps: Option<u64>,
    pub triggers: Vec<TriggerRecord>,
    pub arrivals: Vec<ArrivalRecord>,
    pub grid: GridSummary,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_path(path: &Path) -> Result<Self, OrchestrateError> {
        let io = |e: String| OrchestrateError::Io { path: path.to_path_buf(), message: e };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }

    /// `load_bus,k,threshold_index,tau_ns,exact_ns,perceived_ns`
    pub fn write_arrivals_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "load_bus,k,threshold_index,tau_ns,exact_ns,perceived_ns")?;
        for a in &self.arrivals {
            writeln!(w, "{},{},{},{},{},{}", a.load_bus, a.k, a.threshold_index, a.tau_ns, a.exact_ns, a.perceived_ns)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub phases: Vec<PhaseTiming>,
    pub total_ms: f64,
}

impl Timings {
    pub fn push(&mut self, phase: impl Into<String>, elapsed: std::time::Duration) {
        self.phases.push(PhaseTiming { phase: phase.into(), ms: elapsed.as_secs_f64() * 1e3 });
    }
}

/// Everything a run produces.
pub struct RunOutput {
    pub report: RunReport,
    pub timings: Timings,
    pub trajectory: Trajectory,
    /// Per iteration for the self-consistent method; the single extracted
    /// model for co-simulation.
    pub delay_models: Vec<DelayModel>,
    /// One per network run, in execution order.
    pub traces: Vec<DelayTrace>,
    pub spdc_arrivals: Vec<SpdcArrival>,
}

fn create(dir: &Path, name: &str) -> io::Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

impl RunOutput {
    /// Writes the artifact set into `dir` and returns the paths written.
    pub fn write_artifacts(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> io::Result<()>| -> io::Result<()> {
            let (path, mut w) = create(dir, name)?;
            f(&mut w)?;
            w.flush()?;
            written.push(path);
            Ok(())
        };
        emit("report.json", &|w| writeln!(w, "{}", self.report.to_json()))?;
        emit("timings.json", &|w| {
            writeln!(w, "{}", serde_json::to_string_pretty(&self.timings).expect("timings serialize"))
        })?;
        emit("trajectory.csv", &|w| self.trajectory.write_csv(w))?;
        emit("frequency.csv", &|w| write_frequency_csv(&self.trajectory, w))?;
        emit("arrivals.csv", &|w| self.report.write_arrivals_csv(w))?;
        emit("spdc_arrivals.csv", &|w| SpdcArrival::write_csv(&self.spdc_arrivals, w))?;
        for m in &self.delay_models {
            emit(&format!("delay_model_{}.csv", m.iteration), &|w| m.write_csv(w))?;
            emit(&format!("decisions_{}.csv", m.iteration), &|w| m.write_decisions_csv(w))?;
        }
        for (i, t) in self.traces.iter().enumerate() {
            emit(&format!("delay_trace_{i}.csv"), &|w| t.write_csv(w))?;
        }
        Ok(written)
    }
}

/// `t_ns,f_min_hz,f_avg_hz,f_coi_hz` at every integration step.
pub fn write_frequency_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(w, "t_ns,f_min_hz,f_avg_hz,f_coi_hz")?;
    for p in &traj.dense {
        writeln!(w, "{},{:.9},{:.9},{:.9}", p.t.as_nanos(), p.f_min_hz, p.f_avg_hz, p.f_coi_hz)?;
    }
    Ok(())
}

/// Which arrival time of a report to compare.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBase {
    #[default]
    Exact,
    Perceived,
}

impl std::str::FromStr for TimeBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(TimeBase::Exact),
            "perceived" => Ok(TimeBase::Perceived),
            _ => Err(format!("unknown time base `{s}` (expected exact or perceived)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadDelta {
    pub load_bus: BusId,
    pub k: u64,
    pub threshold_index: usize,
    pub a_ns: u64,
    pub b_ns: u64,
    /// `b - a` in milliseconds.
    pub delta_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub deltas: Vec<LoadDelta>,
    pub max_abs_delta_ms: f64,
    pub tolerance_ms: f64,
    pub pass: bool,
}

fn pick(a: &ArrivalRecord, base: TimeBase) -> u64 {
    match base {
        TimeBase::Exact => a.exact_ns,
        TimeBase::Perceived => a.perceived_ns,
    }
}

/// Per-command arrival differences between two reports of one scenario.
pub fn compare_reports(
    a: &RunReport,
    a_base: TimeBase,
    b: &RunReport,
    b_base: TimeBase,
    tolerance_ms: f64,
) -> Result<Comparison, OrchestrateError> {
    if a.scenario != b.scenario {
        return Err(OrchestrateError::ScenarioMismatch(format!("`{}` vs `{}`", a.scenario, b.scenario)));
    }
    let key = |r: &ArrivalRecord| (r.load_bus, r.k, r.threshold_index);
    let ma: BTreeMap<_, _> = a.arrivals.iter().map(|r| (key(r), pick(r, a_base))).collect();
    let mb: BTreeMap<_, _> = b.arrivals.iter().map(|r| (key(r), pick(r, b_base))).collect();
    if ma.len() != mb.len() || ma.keys().ne(mb.keys()) {
        return Err(OrchestrateError::ScenarioMismatch(format!(
            "{} commands vs {} commands with different triggers",
            ma.len(),
            mb.len()
        )));
    }
    let deltas: Vec<LoadDelta> = ma
        .iter()
        .map(|(&(load_bus, k, threshold_index), &a_ns)| {
            let b_ns = mb[&(load_bus, k, threshold_index)];
            LoadDelta { load_bus, k, threshold_index, a_ns, b_ns, delta_ms: (b_ns as i128 - a_ns as i128) as f64 / 1e6 }
        })
        .collect();
    let max_abs_delta_ms = deltas.iter().map(|d| d.delta_ms.abs()).fold(0.0, f64::max);
    Ok(Comparison { deltas, max_abs_delta_ms, tolerance_ms, pass: max_abs_delta_ms <= tolerance_ms })
}

/// `load_bus,k,threshold_index,a_ns,b_ns,delta_ms`
pub fn write_agreement_csv<W: Write>(c: &Comparison, mut w: W) -> io::Result<()> {
    writeln!(w, "load_bus,k,threshold_index,a_ns,b_ns,delta_ms")?;
    for d in &c.deltas {
        writeln!(w, "{},{},{},{},{},{:.6}", d.load_bus, d.k, d.threshold_index, d.a_ns, d.b_ns, d.delta_ms)?;
    }
    Ok(())
}
