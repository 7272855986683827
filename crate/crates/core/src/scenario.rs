//! Scenario configuration: the on-disk format with unit-suffixed fields and
//! its resolution into simulation inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridsim::{GridError, GridEvent, GridEventKind, PowerModel};
use crate::netsim::{build_network, compute_routes, BusId, HostPlacement, LineSpec, NetError, NetParams};
use crate::time::{periodic_tick, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("grid case: {0}")]
    Case(#[from] GridError),
    #[error("network: {0}")]
    Network(String),
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SelfConsistent,
    Cosim,
    #[default]
    Both,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "self_consistent" => Ok(Method::SelfConsistent),
            "cosim" => Ok(Method::Cosim),
            "both" => Ok(Method::Both),
            _ => Err(format!("unknown method `{s}` (expected self_consistent, cosim or both)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub bandwidth_bps: u64,
    pub packet_size_bytes: u32,
    pub refractive_index: f64,
    pub ohm_per_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    pub pdc: BusId,
    pub pmus: Vec<BusId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostsConfig {
    pub pdc_buses: Vec<BusId>,
    pub spdc_bus: BusId,
    pub pmu_rate_hz: u32,
    pub pdc_max_wait_ms: f64,
    pub spdc_max_wait_ms: f64,
    /// Explicit PMU zones; when empty every PMU reports to its nearest PDC
    /// under the routing metric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zones: Vec<ZoneConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub enabled: bool,
    pub thresholds_hz: Vec<f64>,
    pub reduction_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorTripConfig {
    pub gen_id: u32,
    pub at_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFailureConfig {
    pub bus_a: BusId,
    pub bus_b: BusId,
    pub at_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generator_trips: Vec<GeneratorTripConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub link_failures: Vec<LinkFailureConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfConsistentConfig {
    pub epsilon_ms: f64,
    pub max_iter: usize,
    /// Measurement timestamp at which the SPDC is assumed to fire when
    /// probing the command paths.
    pub probe_timestamp_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosimConfig {
    pub min_net_sync_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Relative paths are taken from the directory of the scenario file.
    pub case_path: PathBuf,
    pub t_end_s: f64,
    #[serde(default)]
    pub method: Method,
    /// Reserved for stochastic delay sampling; unused by deterministic runs.
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkConfig,
    pub hosts: HostsConfig,
    pub control: ControlConfig,
    #[serde(default)]
    pub events: EventsConfig,
    pub self_consistent: SelfConsistentConfig,
    pub cosim: CosimConfig,
    pub output: OutputConfig,
}

fn positive(name: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be strictly positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("t_end_s", self.t_end_s)?;
        let toml_int = |name: &'static str, v: u64| {
            if v > i64::MAX as u64 {
                Err(field(name, format!("{v} exceeds the largest TOML integer")))
            } else {
                Ok(())
            }
        };
        toml_int("seed", self.seed)?;
        toml_int("network.bandwidth_bps", self.network.bandwidth_bps)?;
        toml_int("self_consistent.max_iter", self.self_consistent.max_iter as u64)?;
        if self.network.bandwidth_bps == 0 {
            return Err(field("network.bandwidth_bps", "must be strictly positive"));
        }
        if self.network.packet_size_bytes == 0 {
            return Err(field("network.packet_size_bytes", "must be strictly positive"));
        }
        positive("network.refractive_index", self.network.refractive_index)?;
        positive("network.ohm_per_km", self.network.ohm_per_km)?;
        if self.hosts.pmu_rate_hz == 0 {
            return Err(field("hosts.pmu_rate_hz", "must be strictly positive"));
        }
        positive("hosts.pdc_max_wait_ms", self.hosts.pdc_max_wait_ms)?;
        positive("hosts.spdc_max_wait_ms", self.hosts.spdc_max_wait_ms)?;
        if self.hosts.pdc_buses.is_empty() {
            return Err(field("hosts.pdc_buses", "at least one PDC is required"));
        }
        let pdcs: BTreeSet<BusId> = self.hosts.pdc_buses.iter().copied().collect();
        if pdcs.len() != self.hosts.pdc_buses.len() {
            return Err(field("hosts.pdc_buses", "duplicate PDC bus"));
        }
        let mut seen = BTreeSet::new();
        for z in &self.hosts.zones {
            if !pdcs.contains(&z.pdc) {
                return Err(field("hosts.zones", format!("zone PDC {} is not in hosts.pdc_buses", z.pdc)));
            }
            for &p in &z.pmus {
                if !seen.insert(p) {
                    return Err(field("hosts.zones", format!("PMU {p} assigned twice")));
                }
            }
        }
        let th = &self.control.thresholds_hz;
        if th.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(field("control.thresholds_hz", "thresholds must be strictly positive"));
        }
        if th.windows(2).any(|w| w[1] >= w[0]) {
            return Err(field("control.thresholds_hz", "thresholds must be strictly decreasing"));
        }
        let f = self.control.reduction_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(field("control.reduction_fraction", format!("must lie in (0, 1), got {f}")));
        }
        for t in &self.events.generator_trips {
            if !(t.at_s.is_finite() && t.at_s >= 0.0 && t.at_s < self.t_end_s) {
                return Err(field("events.generator_trips", format!("trip time {} outside [0, t_end_s)", t.at_s)));
            }
        }
        for l in &self.events.link_failures {
            if !(l.at_s.is_finite() && l.at_s >= 0.0 && l.at_s < self.t_end_s) {
                return Err(field("events.link_failures", format!("failure time {} outside [0, t_end_s)", l.at_s)));
            }
        }
        positive("self_consistent.epsilon_ms", self.self_consistent.epsilon_ms)?;
        if self.self_consistent.max_iter == 0 {
            return Err(field("self_consistent.max_iter", "must be at least 1"));
        }
        let p = self.self_consistent.probe_timestamp_s;
        if !(p.is_finite() && p >= 0.0 && p < self.t_end_s) {
            return Err(field("self_consistent.probe_timestamp_s", "must lie inside [0, t_end_s)"));
        }
        let slot = p * self.hosts.pmu_rate_hz as f64;
        if (slot - slot.round()).abs() > 1e-6 {
            return Err(field("self_consistent.probe_timestamp_s", "must be a PMU reporting instant"));
        }
        let s = self.cosim.min_net_sync_ms;
        if !(s.is_finite() && s >= 0.0) {
            return Err(field("cosim.min_net_sync_ms", "must be non-negative"));
        }
        Ok(())
    }
}

/// A validated scenario with its grid model and derived network inputs.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: PowerModel,
    pub lines: Vec<LineSpec>,
    pub buses: Vec<BusId>,
    pub load_buses: Vec<BusId>,
    pub net_params: NetParams,
    /// PMU bus to PDC bus.
    pub zones: BTreeMap<BusId, BusId>,
    pub t_end: SimTime,
    pub pdc_max_wait: SimTime,
    pub spdc_max_wait: SimTime,
    pub probe_k: u64,
    pub min_net_sync: SimTime,
    pub grid_events: Vec<GridEvent>,
    pub link_failures: Vec<(BusId, BusId, SimTime)>,
}

impl Scenario {
    /// Reads a scenario file and everything it references.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg = ScenarioConfig::from_path(path)?;
        Self::resolve(cfg, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(config: ScenarioConfig, base_dir: &Path) -> Result<Self, ConfigError> {
        config.validate()?;
        let case_path =
            if config.case_path.is_absolute() { config.case_path.clone() } else { base_dir.join(&config.case_path) };
        let model = PowerModel::load(&case_path)?;
        Self::with_model(config, model)
    }

    pub fn with_model(config: ScenarioConfig, model: PowerModel) -> Result<Self, ConfigError> {
        config.validate()?;
        let lines = model.case.line_specs();
        let buses = model.case.bus_ids();
        let load_buses = model.case.load_buses();
        let net_params = NetParams {
            bandwidth_bps: config.network.bandwidth_bps,
            packet_size_bytes: config.network.packet_size_bytes,
            refractive_index: config.network.refractive_index,
            ohm_per_km: config.network.ohm_per_km,
        };
        let bus_set: BTreeSet<BusId> = buses.iter().copied().collect();
        let known = |name: &'static str, b: BusId| {
            if bus_set.contains(&b) {
                Ok(())
            } else {
                Err(field(name, format!("bus {b} is not in the grid case")))
            }
        };
        for &b in &config.hosts.pdc_buses {
            known("hosts.pdc_buses", b)?;
        }
        known("hosts.spdc_bus", config.hosts.spdc_bus)?;
        for z in &config.hosts.zones {
            for &p in &z.pmus {
                known("hosts.zones", p)?;
            }
        }
        for t in &config.events.generator_trips {
            if model.machine_index(t.gen_id).is_none() {
                return Err(field("events.generator_trips", format!("unknown generator {}", t.gen_id)));
            }
        }
        let zones = if config.hosts.zones.is_empty() {
            nearest_zones(&lines, &buses, &net_params, &config.hosts.pdc_buses)
                .map_err(|e| ConfigError::Network(e.to_string()))?
        } else {
            let z: BTreeMap<BusId, BusId> =
                config.hosts.zones.iter().flat_map(|z| z.pmus.iter().map(move |&p| (p, z.pdc))).collect();
            if let Some(missing) = buses.iter().find(|b| !z.contains_key(b)) {
                return Err(field("hosts.zones", format!("PMU at bus {missing} has no zone")));
            }
            z
        };
        let rate = config.hosts.pmu_rate_hz;
        let probe_k = (config.self_consistent.probe_timestamp_s * rate as f64).round() as u64;
        let mut grid_events: Vec<GridEvent> = config
            .events
            .generator_trips
            .iter()
            .map(|t| GridEvent {
                at: SimTime::from_secs_f64(t.at_s),
                kind: GridEventKind::GeneratorTrip { gen_id: t.gen_id },
            })
            .collect();
        grid_events.sort_by_key(|e| e.at);
        let link_failures =
            config.events.link_failures.iter().map(|l| (l.bus_a, l.bus_b, SimTime::from_secs_f64(l.at_s))).collect();
        Ok(Scenario {
            t_end: SimTime::from_secs_f64(config.t_end_s),
            pdc_max_wait: SimTime::from_millis_f64(config.hosts.pdc_max_wait_ms),
            spdc_max_wait: SimTime::from_millis_f64(config.hosts.spdc_max_wait_ms),
            min_net_sync: SimTime::from_millis_f64(config.cosim.min_net_sync_ms),
            probe_k,
            config,
            model,
            lines,
            buses,
            load_buses,
            net_params,
            zones,
            grid_events,
            link_failures,
        })
    }

    pub fn report_rate_hz(&self) -> u32 {
        self.config.hosts.pmu_rate_hz
    }

    pub fn probe_timestamp(&self) -> SimTime {
        periodic_tick(self.probe_k, self.report_rate_hz())
    }

    pub fn epsilon_ms(&self) -> f64 {
        self.config.self_consistent.epsilon_ms
    }

    pub fn placement(&self) -> HostPlacement {
        HostPlacement {
            pdc_buses: self.config.hosts.pdc_buses.clone(),
            spdc_bus: Some(self.config.hosts.spdc_bus),
            load_buses: self.load_buses.clone(),
        }
    }
}

/// Assigns every PMU to the PDC with the smallest routing distance, lowest
/// PDC bus on ties.
pub fn nearest_zones(
    lines: &[LineSpec],
    buses: &[BusId],
    params: &NetParams,
    pdc_buses: &[BusId],
) -> Result<BTreeMap<BusId, BusId>, NetError> {
    let placement = HostPlacement { pdc_buses: pdc_buses.to_vec(), spdc_bus: None, load_buses: vec![] };
    let topo = build_network(lines, buses, params, &placement)?;
    let routes = compute_routes(&topo)?;
    let mut pdcs = pdc_buses.to_vec();
    pdcs.sort_unstable();
    let mut zones = BTreeMap::new();
    for &b in buses {
        let n = topo.node_of(b).expect("bus in topology");
        let best = pdcs
            .iter()
            .copied()
            .min_by_key(|&p| (routes.distance(n, topo.node_of(p).expect("pdc in topology")).unwrap_or(u64::MAX), p))
            .expect("at least one PDC");
        zones.insert(b, best);
    }
    Ok(zones)
}
