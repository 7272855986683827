//! Sequential fixed-point iteration between network and grid runs.

use std::time::Instant;

use super::delay_model::convergence_norm;
use super::network_run::{network_rerun, probe_pdf0};
use super::power_run::power_run;
use super::report::{ArrivalRecord, ConvergenceReport, GridSummary, RunOutput, RunReport, Timings, TriggerRecord};
use super::OrchestrateError;
use crate::scenario::{Method, Scenario};

/// Network run for the initial delay model, then alternate grid runs with
/// the current model and network reruns with the logged commands until two
/// successive models differ by at most `epsilon_ms`.
pub fn self_consistent_simulate(
    sc: &Scenario,
    epsilon_ms: f64,
    max_iter: usize,
) -> Result<RunOutput, OrchestrateError> {
    let start = Instant::now();
    let mut timings = Timings::default();
    let t = Instant::now();
    let (probe, mut current) = probe_pdf0(sc)?;
    timings.push("network_probe", t.elapsed());
    let mut traces = vec![probe.network.into_trace()];
    let mut models = vec![current.clone()];
    let mut norms = Vec::new();
    let mut outcome = None;
    for i in 1..=max_iter {
        let t = Instant::now();
        let pr = power_run(sc, &current)?;
        timings.push(format!("power_run_{i}"), t.elapsed());
        let t = Instant::now();
        let (run, next) = network_rerun(sc, &pr.log, &current, i)?;
        timings.push(format!("network_rerun_{i}"), t.elapsed());
        let norm = convergence_norm(&current, &next)?;
        norms.push(norm);
        let spdc_arrivals = run.spdc_arrivals();
        traces.push(run.network.into_trace());
        models.push(next.clone());
        if norm <= epsilon_ms {
            outcome = Some((pr, spdc_arrivals));
            break;
        }
        current = next;
    }
    let Some((pr, spdc_arrivals)) = outcome else {
        return Err(OrchestrateError::NotConverged { max_iter, norms });
    };
    timings.total_ms = start.elapsed().as_secs_f64() * 1e3;
    let report = RunReport {
        scenario: sc.config.name.clone(),
        method: Method::SelfConsistent,
        t_end_ns: sc.t_end.as_nanos(),
        bandwidth_bps: sc.net_params.bandwidth_bps,
        convergence: Some(ConvergenceReport { epsilon_ms, iterations: norms.len(), norms_ms: norms, converged: true }),
        min_net_sync_ns: None,
        sync_steps: None,
        triggers: pr
            .triggers
            .iter()
            .map(|t| TriggerRecord {
                k: t.k,
                tau_ns: t.tau.as_nanos(),
                decision_ns: t.decision_at.as_nanos(),
                batches: t.batches.clone(),
            })
            .collect(),
        arrivals: pr
            .reductions
            .iter()
            .map(|r| ArrivalRecord {
                load_bus: r.load_bus,
                k: r.k,
                threshold_index: r.threshold_index,
                tau_ns: r.tau.as_nanos(),
                exact_ns: r.at.as_nanos(),
                perceived_ns: r.at.as_nanos(),
            })
            .collect(),
        grid: GridSummary::of(&pr.trajectory),
    };
    Ok(RunOutput { report, timings, trajectory: pr.trajectory, delay_models: models, traces, spdc_arrivals })
}
