//! System definition files.
//!
//! A single TOML document with an explicit schema version describes the
//! system (segments of expression entries, optional period), the
//! perturbation envelopes, and the analysis options. Expression strings use
//! the grammar of [`crate::expr`]. Parsing is strict: unknown fields and
//! malformed expressions are rejected with the offending location.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{self, Expr, ExprError};
use crate::lyapunov::ConstantsMode;
use crate::simulate::PerturbationModel;
use crate::trajectory::{MatrixTrajectory, Segment, TrajectoryError};

/// Schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported schema version {found} (this build reads {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("{path}: {source}")]
    Expression { path: String, source: ExprError },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub schema: u32,
    pub system: SystemSection,
    #[serde(default)]
    pub perturbation: Option<PerturbationSection>,
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub dimension: usize,
    #[serde(default)]
    pub period: Option<f64>,
    pub segments: Vec<SegmentSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub t_start: f64,
    pub t_end: f64,
    /// Row-major grid of expression strings, one row per state component.
    pub entries: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    #[serde(default)]
    pub gamma: Option<String>,
    #[serde(default)]
    pub delta: Option<String>,
    /// Explicit perturbation map, one expression per state component over
    /// `t, x1..xn`.
    #[serde(default)]
    pub g: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub kappa: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub constants_mode: Option<String>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub grid_points_per_period: Option<usize>,
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Search depth for the decay envelope factor in formula mode.
    #[serde(default)]
    pub s_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub trace: Option<String>,
}

impl SystemConfig {
    pub fn from_toml_str(source: &str) -> Result<Self, ConfigError> {
        let cfg: SystemConfig = toml::from_str(source)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema { found: cfg.schema, expected: SCHEMA_VERSION });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.system.dimension == 0 {
            return Err(ConfigError::Field {
                path: "system.dimension".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.system.segments.is_empty() {
            return Err(ConfigError::Field {
                path: "system.segments".into(),
                message: "at least one segment is required".into(),
            });
        }
        if !(self.analysis.kappa > 0.0) {
            return Err(ConfigError::Field {
                path: "analysis.kappa".into(),
                message: format!("must be positive, got {}", self.analysis.kappa),
            });
        }
        if let Some(beta) = self.analysis.beta {
            if !(beta > 0.0 && beta < self.analysis.kappa) {
                return Err(ConfigError::Field {
                    path: "analysis.beta".into(),
                    message: format!(
                        "must lie in (0, kappa = {}), got {beta}",
                        self.analysis.kappa
                    ),
                });
            }
        }
        if let Some(mode) = &self.analysis.constants_mode {
            if mode != "spectral" && mode != "formula" {
                return Err(ConfigError::Field {
                    path: "analysis.constants_mode".into(),
                    message: format!("expected \"spectral\" or \"formula\", got \"{mode}\""),
                });
            }
        }
        Ok(())
    }

    /// Build the matrix path, parsing every entry expression.
    pub fn build_trajectory(&self) -> Result<MatrixTrajectory, ConfigError> {
        let dim = self.system.dimension;
        let mut segments = Vec::with_capacity(self.system.segments.len());
        for (si, seg) in self.system.segments.iter().enumerate() {
            if seg.entries.len() != dim {
                return Err(ConfigError::Field {
                    path: format!("system.segments[{si}].entries"),
                    message: format!("expected {dim} rows, found {}", seg.entries.len()),
                });
            }
            let mut entries = Vec::with_capacity(dim * dim);
            for (ri, row) in seg.entries.iter().enumerate() {
                if row.len() != dim {
                    return Err(ConfigError::Field {
                        path: format!("system.segments[{si}].entries[{ri}]"),
                        message: format!("expected {dim} columns, found {}", row.len()),
                    });
                }
                for (ci, text) in row.iter().enumerate() {
                    let e = expr::parse(text).map_err(|source| ConfigError::Expression {
                        path: format!("system.segments[{si}].entries[{ri}][{ci}]"),
                        source,
                    })?;
                    entries.push(e);
                }
            }
            segments.push(Segment::new(seg.t_start, seg.t_end, entries));
        }
        Ok(MatrixTrajectory::new(dim, segments, self.system.period)?)
    }

    /// Build the perturbation model; absent sections mean no perturbation.
    pub fn build_perturbation(&self) -> Result<PerturbationModel, ConfigError> {
        let dim = self.system.dimension;
        let Some(p) = &self.perturbation else {
            return Ok(PerturbationModel::zero());
        };
        let parse_env = |field: &str, text: &Option<String>| -> Result<Expr, ConfigError> {
            match text {
                None => Ok(Expr::Const(0.0)),
                Some(s) => expr::parse(s).map_err(|source| ConfigError::Expression {
                    path: format!("perturbation.{field}"),
                    source,
                }),
            }
        };
        let gamma = parse_env("gamma", &p.gamma)?;
        let delta = parse_env("delta", &p.delta)?;
        let g_explicit = match &p.g {
            None => None,
            Some(rows) => {
                if rows.len() != dim {
                    return Err(ConfigError::Field {
                        path: "perturbation.g".into(),
                        message: format!("expected {dim} components, found {}", rows.len()),
                    });
                }
                let mut out = Vec::with_capacity(dim);
                for (i, text) in rows.iter().enumerate() {
                    let e = expr::parse_with_state(text, dim).map_err(|source| {
                        ConfigError::Expression { path: format!("perturbation.g[{i}]"), source }
                    })?;
                    out.push(e);
                }
                Some(out)
            }
        };
        Ok(PerturbationModel::new(gamma, delta, g_explicit))
    }

    pub fn beta(&self) -> f64 {
        self.analysis.beta.unwrap_or(self.analysis.kappa / 2.0)
    }

    pub fn constants_mode(&self) -> ConstantsMode {
        match self.analysis.constants_mode.as_deref() {
            Some("formula") => ConstantsMode::Formula,
            _ => ConstantsMode::Spectral,
        }
    }

    pub fn grid_points(&self) -> usize {
        self.analysis
            .grid_points_per_period
            .unwrap_or(crate::certify::GRID_CELLS_PER_PERIOD)
    }

    /// Grid step over one period (or the horizon).
    pub fn grid_step(&self, traj: &MatrixTrajectory) -> f64 {
        let span = traj.period().unwrap_or(traj.domain_end());
        span / self.grid_points() as f64
    }

    /// Envelope search depth for formula mode.
    pub fn s_max(&self) -> f64 {
        self.analysis.s_max.unwrap_or(20.0 / self.beta())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const EXAMPLE: &str = r#"
schema = 1

[system]
dimension = 2
period = 6.283185307179586

[[system.segments]]
t_start = 0.0
t_end = 6.283185307179586
entries = [
    ["1.1*cos(t/2) - 1", "1"],
    ["-1", "1.1*cos(t/2) - 1"],
]

[perturbation]
gamma = "0.1*(abs(cos(t)) + abs(sin(t)))"
delta = "0"
g = ["0.1*(sin(t)*x1 + cos(t)*x2)", "0.1*(cos(t)*x1 + sin(t)*x2)"]

[analysis]
kappa = 1.0
lambda = 0.238
"#;

    #[test]
    fn parses_and_builds_the_example() {
        let cfg = SystemConfig::from_toml_str(EXAMPLE).unwrap();
        let traj = cfg.build_trajectory().unwrap();
        assert_eq!(traj.dim(), 2);
        assert_eq!(traj.period(), Some(2.0 * PI));
        let a0 = traj.value_at(0.0).unwrap();
        assert!((a0[(0, 0)] - 0.1).abs() < 1e-12);
        let pert = cfg.build_perturbation().unwrap();
        assert!(pert.g_explicit.is_some());
        assert_eq!(cfg.beta(), 0.5);
        assert_eq!(cfg.constants_mode(), ConstantsMode::Spectral);
    }

    #[test]
    fn rejects_unknown_schema() {
        let text = EXAMPLE.replace("schema = 1", "schema = 9");
        assert!(matches!(
            SystemConfig::from_toml_str(&text),
            Err(ConfigError::Schema { found: 9, .. })
        ));
    }

    #[test]
    fn rejects_unknown_fields_with_location() {
        let text = EXAMPLE.replace("[analysis]", "[analysis]\nbogus = 3");
        let err = SystemConfig::from_toml_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn rejects_overlapping_segments_with_index() {
        let text = r#"
schema = 1
[system]
dimension = 1
[[system.segments]]
t_start = 0.0
t_end = 1.0
entries = [["0"]]
[[system.segments]]
t_start = 0.5
t_end = 2.0
entries = [["1"]]
[analysis]
kappa = 1.0
"#;
        let cfg = SystemConfig::from_toml_str(text).unwrap();
        let err = cfg.build_trajectory().unwrap_err();
        assert!(err.to_string().contains("segment 1"), "{err}");
    }

    #[test]
    fn rejects_bad_expression_with_path() {
        let text = EXAMPLE.replace("\"-1\", \"1.1*cos(t/2) - 1\"", "\"-1\", \"1.1*cosine(t)\"");
        let cfg = SystemConfig::from_toml_str(&text).unwrap();
        let err = cfg.build_trajectory().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("entries[1][1]"), "{msg}");
        assert!(msg.contains("cosine"), "{msg}");
    }

    #[test]
    fn missing_perturbation_is_zero() {
        let text = r#"
schema = 1
[system]
dimension = 1
[[system.segments]]
t_start = 0.0
t_end = 1.0
entries = [["-1"]]
[analysis]
kappa = 0.5
"#;
        let cfg = SystemConfig::from_toml_str(text).unwrap();
        let pert = cfg.build_perturbation().unwrap();
        assert!(pert.g_explicit.is_none());
        assert_eq!(pert.gamma_at(0.3).unwrap(), 0.0);
        assert_eq!(pert.delta_at(0.3).unwrap(), 0.0);
    }

    #[test]
    fn rejects_gamma_with_state_symbols() {
        let text = EXAMPLE.replace(
            "gamma = \"0.1*(abs(cos(t)) + abs(sin(t)))\"",
            "gamma = \"0.1*x1\"",
        );
        let cfg = SystemConfig::from_toml_str(&text).unwrap();
        let err = cfg.build_perturbation().unwrap_err();
        assert!(err.to_string().contains("perturbation.gamma"), "{err}");
    }
}
