//! Newton-Raphson AC power flow in polar coordinates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::case::CaseSpec;
use super::GridError;
use crate::netsim::BusId;

const TOLERANCE_PU: f64 = 1e-11;
const MAX_ITER: usize = 30;

/// Dense bus index for a case: ascending bus id.
#[derive(Clone, Debug, PartialEq)]
pub struct BusIndex {
    ids: Vec<BusId>,
}

impl BusIndex {
    pub fn new(case: &CaseSpec) -> Self {
        BusIndex { ids: case.bus_ids() }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn of(&self, bus: BusId) -> Option<usize> {
        self.ids.binary_search(&bus).ok()
    }

    pub fn id(&self, i: usize) -> BusId {
        self.ids[i]
    }

    pub fn ids(&self) -> &[BusId] {
        &self.ids
    }
}

/// Branch admittance matrix (no loads, no machines).
pub fn build_ybus(case: &CaseSpec, idx: &BusIndex) -> DMatrix<Complex64> {
    let n = idx.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in &case.branches {
        let (f, t) = (idx.of(br.from).expect("validated"), idx.of(br.to).expect("validated"));
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r_pu, br.x_pu);
        let bc = Complex64::new(0.0, br.b_pu / 2.0);
        let tap = br.tap.filter(|&a| a != 0.0).unwrap_or(1.0);
        y[(f, f)] += (ys + bc) / (tap * tap);
        y[(t, t)] += ys + bc;
        y[(f, t)] -= ys / tap;
        y[(t, f)] -= ys / tap;
    }
    y
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    /// Bus voltages in bus-index order.
    pub v: Vec<Complex64>,
    /// Active output per generator in case order, per unit.
    pub pg_pu: Vec<f64>,
    pub qg_pu: Vec<f64>,
    /// Loads actually served (after scaling), per unit, bus-index order.
    pub load_pu: Vec<Complex64>,
    pub load_scale: f64,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
}

impl PowerFlowSolution {
    pub fn total_generation_mw(&self, base_mva: f64) -> f64 {
        self.pg_pu.iter().sum::<f64>() * base_mva
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Slack,
    Pv,
    Pq,
}

/// Solves the case with every load multiplied by `load_scale`.
pub fn solve_power_flow(case: &CaseSpec, load_scale: f64) -> Result<PowerFlowSolution, GridError> {
    let idx = BusIndex::new(case);
    let n = idx.len();
    let ybus = build_ybus(case, &idx);
    let base = case.base_mva;

    let mut kind = vec![Kind::Pq; n];
    let mut vm = vec![1.0; n];
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    let mut load = vec![Complex64::new(0.0, 0.0); n];
    for b in &case.buses {
        let i = idx.of(b.id).expect("validated");
        load[i] = Complex64::new(b.pd_mw, b.qd_mvar) * load_scale / base;
        p_spec[i] -= load[i].re;
        q_spec[i] -= load[i].im;
    }
    for g in &case.generators {
        let i = idx.of(g.bus).expect("validated");
        vm[i] = g.vset_pu;
        if g.bus == case.slack_bus {
            kind[i] = Kind::Slack;
        } else {
            if kind[i] != Kind::Slack {
                kind[i] = Kind::Pv;
            }
            p_spec[i] += g.pg_mw / base;
        }
    }
    let pvpq: Vec<usize> = (0..n).filter(|&i| kind[i] != Kind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| kind[i] == Kind::Pq).collect();
    let mut va = vec![0.0; n];

    let voltages = |vm: &[f64], va: &[f64]| -> DVector<Complex64> {
        DVector::from_iterator(n, (0..n).map(|i| Complex64::from_polar(vm[i], va[i])))
    };
    let injections = |v: &DVector<Complex64>| -> DVector<Complex64> {
        let i = &ybus * v;
        v.zip_map(&i, |vk, ik| vk * ik.conj())
    };
    let mismatch = |s: &DVector<Complex64>| -> DVector<f64> {
        let mut f = DVector::zeros(pvpq.len() + pq.len());
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s[i].re - p_spec[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[pvpq.len() + r] = s[i].im - q_spec[i];
        }
        f
    };

    let mut iterations = 0;
    let mut v = voltages(&vm, &va);
    let mut f = mismatch(&injections(&v));
    loop {
        let norm = f.amax();
        if !norm.is_finite() {
            return Err(GridError::PowerFlowDiverged { iterations, mismatch_pu: norm });
        }
        if norm <= TOLERANCE_PU {
            break;
        }
        if iterations == MAX_ITER {
            return Err(GridError::PowerFlowDiverged { iterations, mismatch_pu: norm });
        }
        iterations += 1;

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V));
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        let ibus = &ybus * &v;
        let vn: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        let j = Complex64::new(0.0, 1.0);
        let d_va = |r: usize, c: usize| -> Complex64 {
            let diag = if r == c { ibus[r] } else { Complex64::new(0.0, 0.0) };
            j * v[r] * (diag - ybus[(r, c)] * v[c]).conj()
        };
        let d_vm = |r: usize, c: usize| -> Complex64 {
            let mut s = v[r] * (ybus[(r, c)] * vn[c]).conj();
            if r == c {
                s += ibus[r].conj() * vn[r];
            }
            s
        };
        let (a, b) = (pvpq.len(), pq.len());
        let mut jac = DMatrix::zeros(a + b, a + b);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(r, c)] = d_va(i, k).re;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, a + c)] = d_vm(i, k).re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(a + r, c)] = d_va(i, k).im;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(a + r, a + c)] = d_vm(i, k).im;
            }
        }
        let dx = jac.lu().solve(&(-&f)).ok_or(GridError::PowerFlowDiverged { iterations, mismatch_pu: norm })?;
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += dx[a + r];
        }
        v = voltages(&vm, &va);
        f = mismatch(&injections(&v));
    }

    let s = injections(&v);
    let mut pg_pu = Vec::with_capacity(case.generators.len());
    let mut qg_pu = Vec::with_capacity(case.generators.len());
    for g in &case.generators {
        let i = idx.of(g.bus).expect("validated");
        let at_bus = case.generators.iter().filter(|o| o.bus == g.bus).count() as f64;
        let p = if g.bus == case.slack_bus { s[i].re + load[i].re } else { g.pg_mw / base };
        pg_pu.push(p);
        qg_pu.push((s[i].im + load[i].im) / at_bus);
    }
    Ok(PowerFlowSolution {
        v: v.iter().copied().collect(),
        pg_pu,
        qg_pu,
        load_pu: load,
        load_scale,
        iterations,
        max_mismatch_pu: f.amax(),
    })
}

/// Finds the uniform load scale at which total generation meets `target_mw`.
pub fn solve_with_target_generation(case: &CaseSpec, target_mw: f64) -> Result<PowerFlowSolution, GridError> {
    let base = case.base_mva;
    let gen_at = |s: f64| solve_power_flow(case, s).map(|pf| (pf.total_generation_mw(base) - target_mw, pf));
    let (mut s0, (mut e0, mut pf)) = (1.0, gen_at(1.0)?);
    let total_load: f64 = case.buses.iter().map(|b| b.pd_mw).sum();
    if total_load <= 0.0 {
        return Err(GridError::Parse("case has no load to scale".into()));
    }
    let mut s1 = 1.0 - e0 / total_load;
    for _ in 0..50 {
        if e0.abs() < 1e-9 {
            return Ok(pf);
        }
        let (e1, pf1) = gen_at(s1)?;
        if e1.abs() < 1e-9 {
            return Ok(pf1);
        }
        let next = s1 - e1 * (s1 - s0) / (e1 - e0);
        (s0, e0, pf) = (s1, e1, pf1);
        s1 = next;
    }
    Err(GridError::PowerFlowDiverged { iterations: 50, mismatch_pu: e0 / base })
}
