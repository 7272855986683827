//! Wall-clock comparison of the two coupling methods.

use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cosim::cosim_simulate;
use super::self_consistent::self_consistent_simulate;
use super::OrchestrateError;
use crate::scenario::{ConfigError, Method, Scenario};
use crate::time::SimTime;

/// One (method, precision) cell. The precision is ε for the self-consistent
/// method and the minimum network sync interval for co-simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub method: Method,
    pub precision_ms: f64,
    /// Median over `samples_s`.
    pub wall_clock_s: f64,
    pub samples_s: Vec<f64>,
    /// Iterations for the self-consistent method, sync steps for co-simulation.
    pub count: u64,
    pub low_confidence: bool,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs both methods at every precision `reps` times, interleaved so that
/// drift in machine load affects both alike.
pub fn bench(sc: &Scenario, precisions_ms: &[f64], reps: usize) -> Result<Vec<BenchResult>, OrchestrateError> {
    if !sc.config.control.enabled {
        return Err(
            ConfigError::Field { field: "control.enabled", message: "bench needs a control scenario".into() }.into()
        );
    }
    if reps == 0 {
        return Err(ConfigError::Field { field: "reps", message: "must be at least 1".into() }.into());
    }
    let mut sc_samples = vec![Vec::with_capacity(reps); precisions_ms.len()];
    let mut co_samples = vec![Vec::with_capacity(reps); precisions_ms.len()];
    let mut counts = vec![(0u64, 0u64); precisions_ms.len()];
    let max_iter = sc.config.self_consistent.max_iter;
    for _ in 0..reps {
        for (i, &p) in precisions_ms.iter().enumerate() {
            let sync = SimTime::try_from_secs_f64(p / 1e3).ok_or_else(|| ConfigError::Field {
                field: "precisions",
                message: format!("invalid precision {p} ms"),
            })?;
            let t = Instant::now();
            let out = self_consistent_simulate(sc, p, max_iter)?;
            sc_samples[i].push(t.elapsed().as_secs_f64());
            counts[i].0 = out.report.convergence.map_or(0, |c| c.iterations as u64);
            let t = Instant::now();
            let out = cosim_simulate(sc, sync)?;
            co_samples[i].push(t.elapsed().as_secs_f64());
            counts[i].1 = out.report.sync_steps.unwrap_or(0);
        }
    }
    let mut rows = Vec::with_capacity(2 * precisions_ms.len());
    for (i, &p) in precisions_ms.iter().enumerate() {
        for (method, samples, count) in
            [(Method::SelfConsistent, &sc_samples[i], counts[i].0), (Method::Cosim, &co_samples[i], counts[i].1)]
        {
            rows.push(BenchResult {
                method,
                precision_ms: p,
                wall_clock_s: median(samples),
                samples_s: samples.clone(),
                count,
                low_confidence: reps < 3,
            });
        }
    }
    Ok(rows)
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::SelfConsistent => "self_consistent",
        Method::Cosim => "cosim",
        Method::Both => "both",
    }
}

/// `method,precision_ms,wall_clock_s,count,reps,low_confidence`
pub fn write_bench_csv<W: Write>(rows: &[BenchResult], mut w: W) -> io::Result<()> {
    writeln!(w, "method,precision_ms,wall_clock_s,count,reps,low_confidence")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{},{},{}",
            method_name(r.method),
            r.precision_ms,
            r.wall_clock_s,
            r.count,
            r.samples_s.len(),
            r.low_confidence
        )?;
    }
    Ok(())
}
