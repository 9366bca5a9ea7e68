//! Run configuration: the JSON config-file schema, merged with CLI flags.
//!
//! Precedence is flags over config file over built-in defaults. After a
//! command runs, every parameter it used is written back so the envelope
//! echoes the complete effective configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use torus_gvs::system::{make_constant_system, make_sine_system};
use torus_gvs::{SystemDefinition, Vector};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
    #[serde(default)]
    pub params: Params,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub builtin: String,
    #[serde(default)]
    pub params: SystemParams,
    /// Replace the built-in interpolant with `x + t (psi(x) - x)`.
    #[serde(default)]
    pub auto_interpolant: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

/// Command parameters; each command reads the subset it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus_b: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::usage_at(field, format!("invalid config: {}", e.inner()))
        })
    }

    /// Read a config file, or stdin when `path` is `-`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = if path == Path::new("-") {
            std::io::read_to_string(std::io::stdin())
        } else {
            std::fs::read_to_string(path)
        }
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn build_system(&self) -> Result<SystemDefinition, CliError> {
        let spec = &self.system;
        let sys = match spec.builtin.as_str() {
            "constant" => {
                let g = spec
                    .params
                    .g
                    .clone()
                    .ok_or_else(|| CliError::usage_at("system.params.G", "constant system needs G"))?;
                let g = Vector::new(g).map_err(|e| CliError::usage_at("system.params.G", e.to_string()))?;
                make_constant_system(&g)
            }
            "sine" => {
                let r = spec
                    .params
                    .r
                    .ok_or_else(|| CliError::usage_at("system.params.r", "sine system needs r"))?;
                make_sine_system(r).map_err(|e| CliError::usage_at("system.params.r", e.to_string()))?
            }
            other => {
                return Err(CliError::usage_at(
                    "system.builtin",
                    format!("unknown builtin '{other}' (expected 'constant' or 'sine')"),
                ))
            }
        };
        Ok(if spec.auto_interpolant {
            sys.into_auto_interpolant()
        } else {
            sys
        })
    }
}

/// Check helpers: each records the resolved value and validates it.
pub fn positive(field: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::usage_at(format!("params.{field}"), format!("must be positive, got {value}")))
    }
}

pub fn at_least(field: &str, value: usize, min: usize) -> Result<usize, CliError> {
    if value >= min {
        Ok(value)
    } else {
        Err(CliError::usage_at(format!("params.{field}"), format!("must be at least {min}, got {value}")))
    }
}

pub fn vector(field: &str, entries: Vec<f64>, dim: usize) -> Result<Vector, CliError> {
    let path = format!("params.{field}");
    let v = Vector::new(entries).map_err(|e| CliError::usage_at(path.clone(), e.to_string()))?;
    if v.dim() != dim {
        return Err(CliError::usage_at(
            path,
            format!("expected {dim} components, got {}", v.dim()),
        ));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        RunConfig {
            system: SystemSpec {
                builtin: "sine".into(),
                params: SystemParams {
                    g: None,
                    r: Some(0.1),
                },
                auto_interpolant: false,
            },
            rng_seed: 7,
            params: Params {
                eta: Some(vec![0.25, 0.0]),
                n: Some(1000),
                epsilon: Some(1e-3),
                seeds: Some(vec![vec![0.0, 0.0], vec![0.5, 0.5]]),
                ..Params::default()
            },
        }
    }

    #[test]
    fn round_trip() {
        let cfg = sample();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn minimal_config_gets_default_seed() {
        let cfg = RunConfig::from_json(r#"{"system": {"builtin": "constant", "params": {"G": [0.5]}}}"#).unwrap();
        assert_eq!(cfg.rng_seed, DEFAULT_SEED);
        assert_eq!(cfg.build_system().unwrap().dim(), 1);
    }

    #[test]
    fn errors_carry_field_path() {
        let err = RunConfig::from_json(r#"{"system": {"builtin": "sine", "params": {"r": "x"}}}"#).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("system.params.r"));

        let err = RunConfig::from_json(r#"{"system": {"builtin": "sine"}, "params": {"bogus": 1}}"#).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("params.bogus"));

        let cfg = RunConfig::from_json(r#"{"system": {"builtin": "torus"}}"#).unwrap();
        let err = cfg.build_system().unwrap_err();
        assert_eq!(err.field.as_deref(), Some("system.builtin"));

        assert!(RunConfig::from_json("{").is_err());
    }

    #[test]
    fn range_checks() {
        assert!(positive("tol", 0.0).is_err());
        assert_eq!(at_least("grid", 1, 2).unwrap_err().field.as_deref(), Some("params.grid"));
        assert!(vector("eta", vec![0.0], 2).is_err());
    }
}
