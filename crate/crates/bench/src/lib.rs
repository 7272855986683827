//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use cpsim_core::scenario::Scenario;

/// Directory holding the shipped scenario files.
pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Loads a shipped scenario by name, e.g. `"c1"`.
pub fn scenario(name: &str) -> Scenario {
    let path = scenarios_dir().join(format!("{name}.toml"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
