#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use omega_core::graph::{load_graph, RoadGraph};
use omega_core::scenario::Scenario;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn graph(name: &str) -> RoadGraph {
    load_graph(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

/// The known-strategy border scenario, resolved once per test binary.
pub fn known() -> &'static Scenario {
    static SCN: OnceLock<Scenario> = OnceLock::new();
    SCN.get_or_init(|| Scenario::load(&fixture("known.toml")).unwrap())
}
