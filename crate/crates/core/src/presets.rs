//! Bundled example systems, available to the CLI and to tests.

use crate::config::{ConfigError, SystemConfig};

pub const PAPER_SEC5: &str = include_str!("presets/paper_sec5.toml");
pub const REMARK_COUNTEREXAMPLE: &str = include_str!("presets/remark_counterexample.toml");
pub const SWITCHED_DEMO: &str = include_str!("presets/switched_demo.toml");

/// Preset identifiers accepted by the reproduction command.
pub const IDS: [&str; 3] = ["paper-sec5", "remark-counterexample", "switched-demo"];

pub fn source(id: &str) -> Option<&'static str> {
    match id {
        "paper-sec5" => Some(PAPER_SEC5),
        "remark-counterexample" => Some(REMARK_COUNTEREXAMPLE),
        "switched-demo" => Some(SWITCHED_DEMO),
        _ => None,
    }
}

pub fn load(id: &str) -> Option<Result<SystemConfig, ConfigError>> {
    source(id).map(SystemConfig::from_toml_str)
}
