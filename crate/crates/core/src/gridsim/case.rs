//! Case file: buses, branches, dispatch and machine constants.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GridError;
use crate::netsim::{BusId, LineSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: BusId,
    #[serde(default)]
    pub pd_mw: f64,
    #[serde(default)]
    pub qd_mvar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub from: BusId,
    pub to: BusId,
    pub r_pu: f64,
    pub x_pu: f64,
    #[serde(default)]
    pub b_pu: f64,
    /// Off-nominal ratio on the `from` side; absent for lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: u32,
    pub bus: BusId,
    /// Scheduled output; ignored for the slack machine.
    pub pg_mw: f64,
    pub vset_pu: f64,
    pub h_s: f64,
    pub xd_prime_pu: f64,
    #[serde(default)]
    pub damping_pu: f64,
}

/// Uniform first-order governor constants. The droop is expressed on each
/// machine's initial dispatch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernorSpec {
    pub droop_pu: f64,
    pub time_constant_s: f64,
    /// Upper output limit as a fraction of initial dispatch above it.
    pub max_increase_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    pub base_mva: f64,
    pub base_kv: f64,
    pub nominal_frequency_hz: f64,
    pub slack_bus: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_total_generation_mw: Option<f64>,
    pub governor: GovernorSpec,
    #[serde(rename = "bus")]
    pub buses: Vec<BusSpec>,
    #[serde(rename = "branch")]
    pub branches: Vec<BranchSpec>,
    #[serde(rename = "generator")]
    pub generators: Vec<GeneratorSpec>,
}

impl CaseSpec {
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let case: CaseSpec = toml::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    pub fn from_path(path: &Path) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path).map_err(|e| GridError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |m: String| Err(GridError::Parse(m));
        if !(self.base_mva > 0.0 && self.base_kv > 0.0 && self.nominal_frequency_hz > 0.0) {
            return bad("base_mva, base_kv and nominal_frequency_hz must be positive".into());
        }
        let ids: BTreeSet<BusId> = self.buses.iter().map(|b| b.id).collect();
        if ids.len() != self.buses.len() {
            return bad("duplicate bus id".into());
        }
        for br in &self.branches {
            if !ids.contains(&br.from) || !ids.contains(&br.to) {
                return bad(format!("branch {}-{} references an unknown bus", br.from, br.to));
            }
            if br.r_pu == 0.0 && br.x_pu == 0.0 {
                return bad(format!("branch {}-{} has zero impedance", br.from, br.to));
            }
        }
        let mut gen_ids = BTreeSet::new();
        for g in &self.generators {
            if !ids.contains(&g.bus) {
                return bad(format!("generator {} at unknown bus {}", g.id, g.bus));
            }
            if !gen_ids.insert(g.id) {
                return bad(format!("duplicate generator id {}", g.id));
            }
            if !(g.h_s > 0.0 && g.xd_prime_pu > 0.0 && g.vset_pu > 0.0) {
                return bad(format!("generator {}: h_s, xd_prime_pu and vset_pu must be positive", g.id));
            }
        }
        if !self.generators.iter().any(|g| g.bus == self.slack_bus) {
            return bad(format!("slack bus {} has no generator", self.slack_bus));
        }
        let gov = &self.governor;
        if !(gov.droop_pu > 0.0 && gov.time_constant_s > 0.0 && gov.max_increase_fraction >= 0.0) {
            return bad("governor constants must be positive".into());
        }
        Ok(())
    }

    /// Series reactance of every branch in ohms, for laying the fibre.
    pub fn line_specs(&self) -> Vec<LineSpec> {
        let z_base = self.base_kv * self.base_kv / self.base_mva;
        self.branches
            .iter()
            .map(|b| LineSpec { bus_a: b.from, bus_b: b.to, x_ohm: Some(b.x_pu.abs() * z_base) })
            .collect()
    }

    pub fn bus_ids(&self) -> Vec<BusId> {
        let mut v: Vec<BusId> = self.buses.iter().map(|b| b.id).collect();
        v.sort_unstable();
        v
    }

    /// Buses with a positive active load.
    pub fn load_buses(&self) -> Vec<BusId> {
        let mut v: Vec<BusId> = self.buses.iter().filter(|b| b.pd_mw > 0.0).map(|b| b.id).collect();
        v.sort_unstable();
        v
    }
}
