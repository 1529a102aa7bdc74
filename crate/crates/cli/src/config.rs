//! Run configuration: one JSON document, every section optional.

use std::path::{Path, PathBuf};

use nhgeo_core::extremal::ExtremalState;
use nhgeo_core::models::ModelSpec;
use nhgeo_core::IntegratorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_DELTAS: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A bare id string or a tagged object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "serde_json::Value")]
pub enum ModelField {
    Id(String),
    Spec(ModelSpec),
}

impl TryFrom<serde_json::Value> for ModelField {
    type Error = String;
    fn try_from(v: serde_json::Value) -> Result<Self, String> {
        match v {
            serde_json::Value::String(s) => Ok(Self::Id(s)),
            v @ serde_json::Value::Object(_) => {
                serde_json::from_value(v).map(Self::Spec).map_err(|e| format!("model: {e}"))
            }
            _ => Err("model: expected an id string or an object with an `id` tag".into()),
        }
    }
}

impl ModelField {
    pub fn spec(&self) -> Result<ModelSpec, CliError> {
        match self {
            Self::Id(id) => ModelSpec::from_id(id).map_err(|e| CliError::Model(e.to_string())),
            Self::Spec(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, alias = "x0")]
    pub x: Option<Vec<f64>>,
    #[serde(default, alias = "alpha0")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, alias = "nu0")]
    pub nu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelField>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Penalty parameter for `integrate`; 0 runs the limit system.
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Byte offset of a 1-based (line, column) position.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut off = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (off + column.saturating_sub(1)).min(text.len());
        }
        off += l.len();
    }
    text.len()
}

impl RunConfig {
    pub fn from_str(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            let off = byte_offset(text, e.line(), e.column());
            let kind = match e.classify() {
                serde_json::error::Category::Data => "schema violation",
                _ => "malformed JSON",
            };
            CliError::Config(format!("{origin}: {kind} at byte offset {off} (line {}, column {}): {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text, &path.display().to_string())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("model: missing (set it in the config or pass --model)".into()))?
            .spec()
    }

    /// Initial state with missing parts taken from the model default.
    pub fn initial_state(&self, spec: &ModelSpec, m: usize, n: usize, l: usize) -> Result<ExtremalState, CliError> {
        let d = spec.default_state().map_err(|e| CliError::Model(e.to_string()))?;
        let pick = |name: &str, v: &Option<Vec<f64>>, def: Vec<f64>, want: usize| -> Result<Vec<f64>, CliError> {
            let v = v.clone().unwrap_or(def);
            if v.len() != want {
                return Err(CliError::Config(format!("initial.{name}: length {} does not match model ({want})", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config(format!("initial.{name}: non-finite entry")));
            }
            Ok(v)
        };
        Ok(ExtremalState::new(
            pick("x", &self.initial.x, d.x, m)?,
            pick("alpha", &self.initial.alpha, d.alpha, n)?,
            pick("nu", &self.initial.nu, d.nu, l)?,
        ))
    }

    pub fn point_for(&self, m: usize) -> Result<Vec<f64>, CliError> {
        let p = self.point.clone().unwrap_or_else(|| vec![0.0; m]);
        if p.len() != m {
            return Err(CliError::Config(format!("point: length {} does not match model dimension {m}", p.len())));
        }
        Ok(p)
    }

    pub fn deltas(&self) -> Result<Vec<f64>, CliError> {
        let d = self.deltas.clone().unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
        if d.is_empty() {
            return Err(CliError::Config("deltas: empty list".into()));
        }
        if let Some(bad) = d.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(CliError::Config(format!("deltas: {bad} is not a finite non-negative number")));
        }
        Ok(d)
    }

    pub fn validate_integrator(&self) -> Result<(), CliError> {
        self.integrator.validate().map_err(|e| CliError::Config(format!("integrator: {e}")))?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(CliError::Config(format!("delta: {} is not a finite non-negative number", self.delta)));
        }
        Ok(())
    }

    /// SHA-256 of the resolved config without the output section.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSpec::default();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses `"v1,v2,..."`.
pub fn parse_point(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("--point: cannot parse `{t}` as a number")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets() {
        let t = "{\n  \"a\": ,\n}";
        assert_eq!(byte_offset(t, 2, 8), 9);
        assert_eq!(&t[9..10], ",");
    }

    #[test]
    fn minimal() {
        let c = RunConfig::from_str(r#"{"model": "free_3", "integrator": {"t_end": 2.0}}"#, "x").unwrap();
        assert_eq!(c.integrator.t_end, 2.0);
        assert_eq!(c.integrator.sample_count, 101);
        let c = RunConfig::from_str(r#"{"model": {"id": "contact5", "lambda": "exp_z"}}"#, "x").unwrap();
        assert_eq!(c.model_spec().unwrap().id(), "contact5:exp_z");
    }

    #[test]
    fn unknown_field_named() {
        let e = RunConfig::from_str(r#"{"modle": "free_3"}"#, "x").unwrap_err();
        assert!(e.to_string().contains("modle"), "{e}");
        let e = RunConfig::from_str(r#"{"integrator": {"stpes": 3}}"#, "x").unwrap_err();
        assert!(e.to_string().contains("stpes"), "{e}");
    }

    #[test]
    fn points() {
        assert_eq!(parse_point("1, 2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
        assert!(parse_point("1,,2").is_err());
    }
}
