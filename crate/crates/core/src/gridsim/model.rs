//! Dynamic network model: classical machines behind transient reactance,
//! constant-admittance loads, and the reduction to machine internal nodes.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::{CaseSpec, GovernorSpec};
use super::powerflow::{build_ybus, solve_power_flow, solve_with_target_generation, BusIndex, PowerFlowSolution};
use super::GridError;
use crate::netsim::BusId;

#[derive(Clone, Debug, PartialEq)]
pub struct Machine {
    pub id: u32,
    pub bus: BusId,
    pub bus_idx: usize,
    pub h_s: f64,
    pub xd_prime_pu: f64,
    pub damping_pu: f64,
    /// Internal EMF magnitude, held constant.
    pub e_pu: f64,
    /// Rotor angle at the power-flow operating point.
    pub delta0_rad: f64,
    /// Initial electrical output, also the governor reference.
    pub pm0_pu: f64,
    pub pm_max_pu: f64,
    pub online: bool,
}

/// Network seen from the internal nodes of the online machines.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedNetwork {
    /// Machine indices, in the order of the reduced matrix.
    pub online: Vec<usize>,
    pub y_red: DMatrix<Complex64>,
    /// Bus voltages as a linear map of internal EMFs: `V = m · E`.
    pub m: DMatrix<Complex64>,
}

#[derive(Clone, Debug)]
pub struct PowerModel {
    pub case: CaseSpec,
    pub index: BusIndex,
    pub ybus: DMatrix<Complex64>,
    pub power_flow: PowerFlowSolution,
    /// Load admittance per bus, bus-index order.
    pub load_y: Vec<Complex64>,
    pub machines: Vec<Machine>,
    pub governor: GovernorSpec,
    pub omega_s: f64,
    network: ReducedNetwork,
}

fn reduce(ybus: &DMatrix<Complex64>, load_y: &[Complex64], machines: &[Machine]) -> Result<ReducedNetwork, GridError> {
    let n = ybus.nrows();
    let online: Vec<usize> = (0..machines.len()).filter(|&i| machines[i].online).collect();
    let g = online.len();
    let mut ybb = ybus.clone();
    for (i, y) in load_y.iter().enumerate() {
        ybb[(i, i)] += y;
    }
    let mut ybg = DMatrix::from_element(n, g, Complex64::new(0.0, 0.0));
    let mut ygg = DMatrix::from_element(g, g, Complex64::new(0.0, 0.0));
    for (c, &mi) in online.iter().enumerate() {
        let mach = &machines[mi];
        let y = Complex64::new(0.0, -1.0 / mach.xd_prime_pu);
        ybb[(mach.bus_idx, mach.bus_idx)] += y;
        ybg[(mach.bus_idx, c)] = -y;
        ygg[(c, c)] = y;
    }
    let m = -ybb.lu().solve(&ybg).ok_or(GridError::SingularNetwork)?;
    let y_red = ygg + ybg.transpose() * &m;
    Ok(ReducedNetwork { online, y_red, m })
}

impl PowerModel {
    /// Solves the power flow (scaling loads to the target generation if the
    /// case asks for it) and converts loads and machines to the dynamic model.
    pub fn from_case(case: CaseSpec) -> Result<Self, GridError> {
        case.validate()?;
        let pf = match case.target_total_generation_mw {
            Some(target) => solve_with_target_generation(&case, target)?,
            None => solve_power_flow(&case, 1.0)?,
        };
        let index = BusIndex::new(&case);
        let ybus = build_ybus(&case, &index);
        let load_y: Vec<Complex64> = pf.load_pu.iter().zip(&pf.v).map(|(s, v)| s.conj() / v.norm_sqr()).collect();
        let gov = case.governor;
        let mut machines = Vec::with_capacity(case.generators.len());
        for (k, g) in case.generators.iter().enumerate() {
            let bus_idx = index.of(g.bus).expect("validated");
            let v = pf.v[bus_idx];
            let s = Complex64::new(pf.pg_pu[k], pf.qg_pu[k]);
            let i = (s / v).conj();
            let e = v + Complex64::new(0.0, g.xd_prime_pu) * i;
            machines.push(Machine {
                id: g.id,
                bus: g.bus,
                bus_idx,
                h_s: g.h_s,
                xd_prime_pu: g.xd_prime_pu,
                damping_pu: g.damping_pu,
                e_pu: e.norm(),
                delta0_rad: e.arg(),
                pm0_pu: pf.pg_pu[k],
                pm_max_pu: pf.pg_pu[k] * (1.0 + gov.max_increase_fraction),
                online: true,
            });
        }
        let omega_s = 2.0 * std::f64::consts::PI * case.nominal_frequency_hz;
        let mut model = PowerModel {
            index,
            ybus,
            power_flow: pf,
            load_y,
            machines,
            governor: gov,
            omega_s,
            network: ReducedNetwork { online: vec![], y_red: DMatrix::zeros(0, 0), m: DMatrix::zeros(0, 0) },
            case,
        };
        model.rebuild()?;
        // Pin the governor reference to the reduced network's own electrical
        // output so the initial point is an exact equilibrium.
        let deltas: Vec<f64> = model.machines.iter().map(|m| m.delta0_rad).collect();
        let pe = model.electrical_power(&deltas);
        for (k, m) in model.machines.iter_mut().enumerate() {
            let mismatch = (pe[k] - m.pm0_pu).abs();
            if mismatch > 1e-8 {
                return Err(GridError::NoEquilibrium(format!("machine {} power mismatch {mismatch:e} pu", m.id)));
            }
            m.pm0_pu = pe[k];
            m.pm_max_pu = pe[k] * (1.0 + gov.max_increase_fraction);
        }
        Ok(model)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, GridError> {
        Self::from_case(CaseSpec::from_path(path)?)
    }

    pub fn network(&self) -> &ReducedNetwork {
        &self.network
    }

    pub(crate) fn rebuild(&mut self) -> Result<(), GridError> {
        self.network = reduce(&self.ybus, &self.load_y, &self.machines)?;
        Ok(())
    }

    pub fn machine_index(&self, gen_id: u32) -> Option<usize> {
        self.machines.iter().position(|m| m.id == gen_id)
    }

    pub fn total_generation_mw(&self) -> f64 {
        self.power_flow.total_generation_mw(self.case.base_mva)
    }

    /// Internal EMF phasors of every machine (zero when offline).
    pub fn emfs(&self, deltas: &[f64]) -> Vec<Complex64> {
        self.machines
            .iter()
            .zip(deltas)
            .map(|(m, &d)| if m.online { Complex64::from_polar(m.e_pu, d) } else { Complex64::new(0.0, 0.0) })
            .collect()
    }

    /// Electrical output of every machine (zero when offline).
    pub fn electrical_power(&self, deltas: &[f64]) -> Vec<f64> {
        let net = &self.network;
        let e: Vec<Complex64> =
            net.online.iter().map(|&k| Complex64::from_polar(self.machines[k].e_pu, deltas[k])).collect();
        let mut pe = vec![0.0; self.machines.len()];
        for (r, &k) in net.online.iter().enumerate() {
            let mut i = Complex64::new(0.0, 0.0);
            for (c, ec) in e.iter().enumerate() {
                i += net.y_red[(r, c)] * ec;
            }
            pe[k] = (e[r] * i.conj()).re;
        }
        pe
    }

    /// Electrical output and bus voltages for one set of rotor angles,
    /// written into caller-provided buffers.
    pub(crate) fn eval_into(&self, deltas: &[f64], e: &mut Vec<Complex64>, pe: &mut [f64], v: &mut [Complex64]) {
        let net = &self.network;
        e.clear();
        e.extend(net.online.iter().map(|&k| Complex64::from_polar(self.machines[k].e_pu, deltas[k])));
        pe.fill(0.0);
        let (g, nb) = (e.len(), v.len());
        let y = net.y_red.as_slice();
        for (r, &k) in net.online.iter().enumerate() {
            let mut i = Complex64::new(0.0, 0.0);
            for (c, ec) in e.iter().enumerate() {
                i += y[c * g + r] * ec;
            }
            pe[k] = (e[r] * i.conj()).re;
        }
        v.fill(Complex64::new(0.0, 0.0));
        for (col, ec) in net.m.as_slice().chunks_exact(nb).zip(e.iter()) {
            for (vb, mb) in v.iter_mut().zip(col) {
                *vb += mb * ec;
            }
        }
    }

    /// Bus voltage phasors in bus-index order.
    pub fn bus_voltages(&self, deltas: &[f64]) -> Vec<Complex64> {
        let net = &self.network;
        let e: Vec<Complex64> =
            net.online.iter().map(|&k| Complex64::from_polar(self.machines[k].e_pu, deltas[k])).collect();
        (0..self.index.len()).map(|b| e.iter().enumerate().map(|(c, ec)| net.m[(b, c)] * ec).sum()).collect()
    }

    pub fn trip_generator(&mut self, gen_id: u32) -> Result<(), GridError> {
        let k = self.machine_index(gen_id).ok_or(GridError::UnknownTarget(format!("generator {gen_id}")))?;
        if !self.machines[k].online {
            return Err(GridError::AlreadyTripped(gen_id));
        }
        self.machines[k].online = false;
        self.rebuild()
    }

    /// Scales the load admittance at `bus` by `1 - fraction`.
    pub fn apply_load_reduction(&mut self, bus: BusId, fraction: f64) -> Result<(), GridError> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(GridError::InvalidFraction(fraction));
        }
        let i = self.index.of(bus).ok_or(GridError::UnknownTarget(format!("bus {bus}")))?;
        if self.load_y[i] == Complex64::new(0.0, 0.0) {
            return Err(GridError::UnknownTarget(format!("load at bus {bus}")));
        }
        if fraction == 0.0 {
            return Ok(());
        }
        self.load_y[i] *= 1.0 - fraction;
        self.rebuild()
    }

    /// Active power drawn by the load at `bus` under voltage `v`.
    pub fn load_power_pu(&self, bus: BusId, v: Complex64) -> Option<Complex64> {
        let i = self.index.of(bus)?;
        Some((self.load_y[i] * v).conj() * v)
    }
}
