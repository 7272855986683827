//! Swing and governor dynamics, discrete events, PMU sampling.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::model::PowerModel;
use super::GridError;
use crate::netsim::BusId;
use crate::pmustack::PhasorSample;
use crate::time::{first_tick_at_or_after, periodic_tick, SimTime};

pub const STEP: SimTime = SimTime::from_nanos(1_000_000);
pub const WASHOUT_T_S: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridEventKind {
    GeneratorTrip { gen_id: u32 },
    LoadReduction { load_bus: BusId, fraction: f64, threshold_index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEvent {
    pub at: SimTime,
    pub kind: GridEventKind,
}

/// Dynamic state. Machine vectors follow model order; offline machines are
/// frozen. `z` holds the washout filter state of each bus angle.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    pub time: SimTime,
    pub delta: Vec<f64>,
    pub domega: Vec<f64>,
    pub pm: Vec<f64>,
    pub z: Vec<f64>,
    /// Start of the window in which bus frequencies are floored by the
    /// centre-of-inertia value.
    pub floor_from: SimTime,
}

impl GridState {
    fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * self.delta.len() + self.z.len());
        x.extend(&self.delta);
        x.extend(&self.domega);
        x.extend(&self.pm);
        x.extend(&self.z);
        x
    }

    fn unpack(&mut self, x: &[f64]) {
        let g = self.delta.len();
        self.delta.copy_from_slice(&x[..g]);
        self.domega.copy_from_slice(&x[g..2 * g]);
        self.pm.copy_from_slice(&x[2 * g..3 * g]);
        self.z.copy_from_slice(&x[3 * g..]);
    }
}

/// Equilibrium state at the power-flow operating point.
pub fn init_steady_state(model: &PowerModel) -> Result<GridState, GridError> {
    let delta: Vec<f64> = model.machines.iter().map(|m| m.delta0_rad).collect();
    let v = model.bus_voltages(&delta);
    for (i, (vd, vp)) in v.iter().zip(&model.power_flow.v).enumerate() {
        if (vd - vp).norm() > 1e-8 {
            return Err(GridError::NoEquilibrium(format!(
                "bus {} voltage differs from the power flow by {:e} pu",
                model.index.id(i),
                (vd - vp).norm()
            )));
        }
    }
    Ok(GridState {
        time: SimTime::ZERO,
        delta,
        domega: vec![0.0; model.machines.len()],
        pm: model.machines.iter().map(|m| m.pm0_pu).collect(),
        z: v.iter().map(|x| x.arg()).collect(),
        floor_from: SimTime::ZERO,
    })
}

fn wrap(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Buffers reused across integration steps.
#[derive(Clone, Debug, Default)]
struct Scratch {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    e: Vec<Complex64>,
    pe: Vec<f64>,
    v: Vec<Complex64>,
}

fn derivatives(model: &PowerModel, x: &[f64], dx: &mut [f64], s: &mut Scratch) {
    let g = model.machines.len();
    let (delta, rest) = x.split_at(g);
    let (domega, rest) = rest.split_at(g);
    let (pm, z) = rest.split_at(g);
    s.pe.resize(g, 0.0);
    s.v.resize(z.len(), Complex64::new(0.0, 0.0));
    model.eval_into(delta, &mut s.e, &mut s.pe, &mut s.v);
    let gov = &model.governor;
    dx.fill(0.0);
    for (k, m) in model.machines.iter().enumerate() {
        if !m.online {
            continue;
        }
        dx[k] = model.omega_s * domega[k];
        dx[g + k] = (pm[k] - s.pe[k] - m.damping_pu * domega[k]) / (2.0 * m.h_s);
        let mut dpm = (-pm[k] + m.pm0_pu - m.pm0_pu / gov.droop_pu * domega[k]) / gov.time_constant_s;
        if (pm[k] >= m.pm_max_pu && dpm > 0.0) || (pm[k] <= 0.0 && dpm < 0.0) {
            dpm = 0.0;
        }
        dx[2 * g + k] = dpm;
    }
    for (b, vb) in s.v.iter().enumerate() {
        let theta = z[b] + wrap(vb.arg() - z[b]);
        dx[3 * g + b] = (theta - z[b]) / WASHOUT_T_S;
    }
}

fn rk4(model: &PowerModel, x: &mut [f64], h: f64, s: &mut Scratch) {
    let n = x.len();
    let mut k = std::mem::take(&mut s.k);
    let mut tmp = std::mem::take(&mut s.tmp);
    for v in k.iter_mut().chain(std::iter::once(&mut tmp)) {
        v.resize(n, 0.0);
    }
    derivatives(model, x, &mut k[0], s);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k[0][i];
    }
    derivatives(model, &tmp, &mut k[1], s);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k[1][i];
    }
    derivatives(model, &tmp, &mut k[2], s);
    for i in 0..n {
        tmp[i] = x[i] + h * k[2][i];
    }
    derivatives(model, &tmp, &mut k[3], s);
    for i in 0..n {
        x[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
    s.k = k;
    s.tmp = tmp;
}

/// Centre-of-inertia speed deviation over online machines.
pub fn coi_speed(model: &PowerModel, state: &GridState) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, m) in model.machines.iter().enumerate() {
        if m.online {
            num += m.h_s * state.domega[k];
            den += m.h_s;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Phasor and frequency estimate at every bus, bus-index order.
pub fn sample_all(model: &PowerModel, state: &GridState) -> Vec<PhasorSample> {
    let v = model.bus_voltages(&state.delta);
    let coi = coi_speed(model, state);
    let floor = state.time.saturating_sub(state.floor_from) < SimTime::from_secs_f64(2.0 * WASHOUT_T_S);
    let f0 = model.case.nominal_frequency_hz;
    v.iter()
        .zip(&state.z)
        .map(|(vb, &z)| {
            let theta = vb.arg();
            let mut dw = wrap(theta - z) / (WASHOUT_T_S * model.omega_s);
            if floor {
                dw = dw.max(coi);
            }
            PhasorSample { v_pu: vb.norm(), theta_rad: theta, freq_hz: f0 * (1.0 + dw) }
        })
        .collect()
}

pub fn sample_phasor(model: &PowerModel, state: &GridState, bus: BusId) -> Option<PhasorSample> {
    let i = model.index.of(bus)?;
    Some(sample_all(model, state)[i])
}

/// One row of the PMU-grid sample series.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub k: u64,
    pub t: SimTime,
    /// Bus-index order.
    pub buses: Vec<PhasorSample>,
}

impl SampleRow {
    pub fn average_frequency(&self) -> f64 {
        self.buses.iter().map(|s| s.freq_hz).sum::<f64>() / self.buses.len() as f64
    }
}

/// Frequency summary after every integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensePoint {
    pub t: SimTime,
    pub f_min_hz: f64,
    pub f_avg_hz: f64,
    pub f_coi_hz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub bus_ids: Vec<BusId>,
    pub samples: Vec<SampleRow>,
    pub dense: Vec<DensePoint>,
    pub events: Vec<GridEvent>,
}

impl Trajectory {
    /// First time the lowest bus frequency falls below `hz`, interpolated
    /// between integration points.
    pub fn first_crossing_below(&self, hz: f64) -> Option<f64> {
        let mut prev: Option<&DensePoint> = None;
        for p in &self.dense {
            if p.f_min_hz < hz {
                return Some(match prev {
                    Some(q) => {
                        let (t0, t1) = (q.t.as_secs_f64(), p.t.as_secs_f64());
                        t0 + (q.f_min_hz - hz) / (q.f_min_hz - p.f_min_hz) * (t1 - t0)
                    }
                    None => p.t.as_secs_f64(),
                });
            }
            prev = Some(p);
        }
        None
    }

    /// Lowest centre-of-inertia frequency reached.
    pub fn coi_nadir_hz(&self) -> f64 {
        self.dense.iter().map(|p| p.f_coi_hz).fold(f64::INFINITY, f64::min)
    }

    /// Lowest bus frequency reached.
    pub fn min_bus_frequency_hz(&self) -> f64 {
        self.dense.iter().map(|p| p.f_min_hz).fold(f64::INFINITY, f64::min)
    }

    pub fn max_deviation_hz(&self, f0: f64) -> f64 {
        self.samples.iter().flat_map(|r| r.buses.iter().map(move |s| (s.freq_hz - f0).abs())).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_ns,bus,V_pu,theta_rad,f_hz")?;
        for row in &self.samples {
            for (bus, s) in self.bus_ids.iter().zip(&row.buses) {
                writeln!(w, "{},{},{:.9},{:.9},{:.9}", row.t.as_nanos(), bus, s.v_pu, s.theta_rad, s.freq_hz)?;
            }
        }
        Ok(())
    }
}

/// Incremental integrator: advances from sample to sample so a driver can
/// react to PMU samples by scheduling further events.
#[derive(Clone, Debug)]
pub struct GridSim {
    model: PowerModel,
    state: GridState,
    report_rate_hz: u32,
    next_k: u64,
    pending: BTreeMap<(SimTime, u64), GridEvent>,
    seq: u64,
    traj: Trajectory,
    scratch: Scratch,
}

impl GridSim {
    pub fn new(model: &PowerModel, state: GridState, report_rate_hz: u32) -> Self {
        let next_k = first_tick_at_or_after(state.time, report_rate_hz);
        let traj = Trajectory { bus_ids: model.index.ids().to_vec(), samples: vec![], dense: vec![], events: vec![] };
        let mut sim = GridSim {
            model: model.clone(),
            state,
            report_rate_hz,
            next_k,
            pending: BTreeMap::new(),
            seq: 0,
            traj,
            scratch: Scratch::default(),
        };
        sim.record_dense();
        sim
    }

    pub fn now(&self) -> SimTime {
        self.state.time
    }

    pub fn model(&self) -> &PowerModel {
        &self.model
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.traj
    }

    pub fn next_sample_time(&self) -> SimTime {
        periodic_tick(self.next_k, self.report_rate_hz)
    }

    /// Queues an event. Events at the current time are applied before the
    /// next step and act on later times only.
    pub fn schedule(&mut self, ev: GridEvent) -> Result<(), GridError> {
        if ev.at < self.state.time {
            return Err(GridError::EventInPast { at: ev.at, now: self.state.time });
        }
        if let GridEventKind::LoadReduction { fraction, .. } = ev.kind {
            if !(0.0..1.0).contains(&fraction) {
                return Err(GridError::InvalidFraction(fraction));
            }
        }
        self.pending.insert((ev.at, self.seq), ev);
        self.seq += 1;
        Ok(())
    }

    fn apply_due_events(&mut self) -> Result<(), GridError> {
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > self.state.time {
                break;
            }
            let ev = entry.remove();
            match ev.kind {
                GridEventKind::GeneratorTrip { gen_id } => self.model.trip_generator(gen_id)?,
                GridEventKind::LoadReduction { load_bus, fraction, .. } => {
                    self.model.apply_load_reduction(load_bus, fraction)?
                }
            }
            self.state.floor_from = self.state.time;
            self.traj.events.push(ev);
        }
        Ok(())
    }

    fn record_dense(&mut self) {
        let s = sample_all(&self.model, &self.state);
        let f_min = s.iter().map(|p| p.freq_hz).fold(f64::INFINITY, f64::min);
        let f_avg = s.iter().map(|p| p.freq_hz).sum::<f64>() / s.len() as f64;
        let f_coi = self.model.case.nominal_frequency_hz * (1.0 + coi_speed(&self.model, &self.state));
        self.traj.dense.push(DensePoint { t: self.state.time, f_min_hz: f_min, f_avg_hz: f_avg, f_coi_hz: f_coi });
    }

    /// Integrates up to `limit`, stopping early at the next PMU sample time.
    /// Returns the sample if one was taken.
    pub fn step_to_next_sample(&mut self, limit: SimTime) -> Result<Option<SampleRow>, GridError> {
        if limit < self.state.time {
            return Err(GridError::EventInPast { at: limit, now: self.state.time });
        }
        let target = limit.min(self.next_sample_time());
        let mut x = self.state.pack();
        while self.state.time < target {
            self.apply_due_events()?;
            let t = self.state.time;
            let grid = SimTime::from_nanos((t.as_nanos() / STEP.as_nanos() + 1) * STEP.as_nanos());
            let mut next = target.min(grid);
            if let Some(((at, _), _)) = self.pending.first_key_value() {
                next = next.min(*at);
            }
            rk4(&self.model, &mut x, (next - t).as_secs_f64(), &mut self.scratch);
            if x.iter().any(|v| !v.is_finite()) || self.state.delta.iter().any(|d| d.abs() > 1e6) {
                return Err(GridError::IntegrationDiverged { last_valid: t });
            }
            self.state.unpack(&x);
            for (k, m) in self.model.machines.iter().enumerate() {
                if m.online {
                    self.state.pm[k] = self.state.pm[k].clamp(0.0, m.pm_max_pu);
                }
            }
            x = self.state.pack();
            self.state.time = next;
            self.record_dense();
        }
        if self.state.time == self.next_sample_time() {
            let row = SampleRow { k: self.next_k, t: self.state.time, buses: sample_all(&self.model, &self.state) };
            self.next_k += 1;
            self.traj.samples.push(row.clone());
            return Ok(Some(row));
        }
        Ok(None)
    }

    /// Integrates to `t_end`, handing every PMU sample to `on_sample`.
    pub fn advance_to(
        &mut self,
        t_end: SimTime,
        mut on_sample: impl FnMut(&mut GridSim, &SampleRow) -> Result<(), GridError>,
    ) -> Result<(), GridError> {
        loop {
            if let Some(row) = self.step_to_next_sample(t_end)? {
                on_sample(self, &row)?;
            }
            if self.state.time >= t_end && self.next_sample_time() > t_end {
                return Ok(());
            }
        }
    }
}

/// Runs the model from `state` to `t_end` with a fixed event list.
pub fn integrate(
    model: &PowerModel,
    state: GridState,
    t_end: SimTime,
    events: &[GridEvent],
    report_rate_hz: u32,
    mut sampler: impl FnMut(&SampleRow),
) -> Result<Trajectory, GridError> {
    let mut sim = GridSim::new(model, state, report_rate_hz);
    for ev in events {
        sim.schedule(ev.clone())?;
    }
    sim.advance_to(t_end, |_, row| {
        sampler(row);
        Ok(())
    })?;
    Ok(sim.into_trajectory())
}

/// Voltage phasors for a state, keyed by bus id.
pub fn bus_voltage_map(model: &PowerModel, state: &GridState) -> BTreeMap<BusId, Complex64> {
    model.index.ids().iter().copied().zip(model.bus_voltages(&state.delta)).collect()
}
