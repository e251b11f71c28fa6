//! Experiment configuration: defaults, JSON file, then dotted overrides.

use hyperql::fidelity::CsProtocol;
use hyperql::hypernet::PrimaryConfig;
use hyperql::meta::MetaTrainConfig;
use hyperql::prop1::Prop1Config;
use hyperql::trainer::TrainerConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config: {path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("config: unknown key `{0}`")]
    UnknownKey(String),
    #[error("config: malformed override `{0}`")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    #[default]
    Lqr,
    /// Single goal-reaching point-mass task with goal `(1, 0)`.
    PointMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub primary: PrimaryConfig,
    pub samples: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            state_dim: 17,
            action_dim: 6,
            hidden: 256,
            primary: PrimaryConfig::desk(),
            samples: 20,
            bins: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// Trailing moving-average window; 1 disables smoothing.
    pub window: usize,
    /// Shade the interquartile range of rows sharing an x value.
    pub iqr: bool,
    pub title: String,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            x: "step".into(),
            y: "eval_return_mean".into(),
            window: 20,
            iqr: true,
            title: String::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub trainer: TrainerConfig,
    pub protocol: CsProtocol,
    pub prop1: Prop1Config,
    pub meta: MetaTrainConfig,
    pub audit: AuditConfig,
    pub plot: PlotSpec,
}

/// Paths every `--seed` flag writes to.
pub const SEED_PATHS: [&str; 4] = ["trainer.seed", "prop1.seed", "meta.seed", "audit.seed"];

/// Parses an override value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, patch: Value, path: &str) -> Result<(), ConfigError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let sub = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &sub)?,
                    None => return Err(ConfigError::UnknownKey(sub)),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Sets `dotted.path` in `root`; every segment must already exist.
pub fn set_path(root: &mut Value, dotted: &str, value: Value) -> Result<(), ConfigError> {
    if dotted.is_empty() || dotted.split('.').any(str::is_empty) {
        return Err(ConfigError::Malformed(dotted.to_string()));
    }
    let mut cur = root;
    for seg in dotted.split('.') {
        let obj: &mut Map<String, Value> = cur
            .as_object_mut()
            .ok_or_else(|| ConfigError::UnknownKey(dotted.to_string()))?;
        cur = obj
            .get_mut(seg)
            .ok_or_else(|| ConfigError::UnknownKey(dotted.to_string()))?;
    }
    *cur = value;
    Ok(())
}

/// Defaults, then the optional file, then overrides in order.
pub fn resolve(file: Option<&str>, overrides: &[(String, Value)]) -> Result<ExperimentConfig, ConfigError> {
    let mut root = serde_json::to_value(ExperimentConfig::default()).expect("defaults serialize");
    if let Some(text) = file {
        let patch: Value = serde_json::from_str(text).map_err(|e| ConfigError::Invalid {
            path: "<file>".into(),
            msg: e.to_string(),
        })?;
        merge(&mut root, patch, "")?;
    }
    for (path, value) in overrides {
        set_path(&mut root, path, value.clone())?;
    }
    serde_path_to_error::deserialize(root).map_err(|e| ConfigError::Invalid {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        assert_eq!(resolve(None, &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn file_then_overrides() {
        let file = r#"{"trainer": {"batch": 64, "seed": 3}}"#;
        let cfg = resolve(Some(file), &[("trainer.batch".into(), parse_value("100"))]).unwrap();
        assert_eq!(cfg.trainer.batch, Some(100));
        assert_eq!(cfg.trainer.seed, 3);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = resolve(Some(r#"{"trainer": {"bogus": 1}}"#), &[]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("trainer.bogus".into()));
        let err = resolve(None, &[("meta.nope".into(), Value::Null)]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("meta.nope".into()));
    }

    #[test]
    fn type_errors_name_the_key() {
        let err = resolve(None, &[("trainer.tau".into(), parse_value("fast"))]).unwrap_err();
        match err {
            ConfigError::Invalid { path, .. } => assert_eq!(path, "trainer.tau"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn enum_values_parse_from_bare_strings() {
        let cfg = resolve(None, &[("trainer.critic".into(), parse_value("mlp-concat"))]).unwrap();
        assert_eq!(cfg.trainer.critic, hyperql::critic::CriticKind::MlpConcat);
    }
}
