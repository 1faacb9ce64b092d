//! Flat `key = value` run configuration. Precedence: defaults, then the
//! config file, then command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::miner::DEFAULT_NEIGHBOR_CAP;
use crate::rewards::{DEFAULT_BETA, DEFAULT_FORMAT_REWARD};
use crate::runtime::{TraversalMode, DEFAULT_BATCH_BUDGET, DEFAULT_D_MAX};

pub const DEFAULT_L_MAX: usize = 2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("{path}:{line}: expected key = value")]
    Syntax { path: String, line: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kg_path: Option<PathBuf>,
    pub questions_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub l_max: usize,
    pub d_max: usize,
    pub batch_budget: usize,
    pub neighbor_cap: usize,
    pub beta: f64,
    pub format_value: f64,
    pub split_seed: u64,
    pub mode: TraversalMode,
    pub policy_spec: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kg_path: None,
            questions_path: None,
            output_path: None,
            l_max: DEFAULT_L_MAX,
            d_max: DEFAULT_D_MAX,
            batch_budget: DEFAULT_BATCH_BUDGET,
            neighbor_cap: DEFAULT_NEIGHBOR_CAP,
            beta: DEFAULT_BETA,
            format_value: DEFAULT_FORMAT_REWARD,
            split_seed: 0,
            mode: TraversalMode::default(),
            policy_spec: "oracle".into(),
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

fn positive(key: &str, value: &str) -> Result<usize, ConfigError> {
    match value.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        Ok(_) => Err(invalid(key, "must be >= 1")),
        Err(e) => Err(invalid(key, e.to_string())),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "kg_path" => self.kg_path = Some(value.into()),
            "questions_path" => self.questions_path = Some(value.into()),
            "output_path" => self.output_path = Some(value.into()),
            "l_max" => self.l_max = positive(key, value)?,
            "d_max" => self.d_max = positive(key, value)?,
            "batch_budget" => self.batch_budget = positive(key, value)?,
            "neighbor_cap" => self.neighbor_cap = positive(key, value)?,
            "beta" => {
                let b: f64 = value.parse().map_err(|_| invalid(key, "not a number"))?;
                if b.is_nan() || b < 0.0 || b.is_infinite() {
                    return Err(invalid(key, "must be a finite value >= 0"));
                }
                self.beta = b;
            }
            "format_value" => {
                let v: f64 = value.parse().map_err(|_| invalid(key, "not a number"))?;
                if !v.is_finite() {
                    return Err(invalid(key, "must be finite"));
                }
                self.format_value = v;
            }
            "split_seed" => {
                self.split_seed = value.parse().map_err(|_| invalid(key, "not an integer"))?
            }
            "mode" => self.mode = value.parse().map_err(|e: String| invalid(key, e))?,
            "policy" | "policy_spec" => self.policy_spec = value.to_string(),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every effective parameter as `key=value`, in a fixed order.
    pub fn echo(&self) -> Vec<String> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or_else(|| "-".to_string(), |p| p.display().to_string())
        };
        vec![
            format!("kg_path={}", path(&self.kg_path)),
            format!("questions_path={}", path(&self.questions_path)),
            format!("output_path={}", path(&self.output_path)),
            format!("l_max={}", self.l_max),
            format!("d_max={}", self.d_max),
            format!("batch_budget={}", self.batch_budget),
            format!("neighbor_cap={}", self.neighbor_cap),
            format!("beta={}", self.beta),
            format!("format_value={}", self.format_value),
            format!("split_seed={}", self.split_seed),
            format!("mode={}", self.mode),
            format!("policy_spec={}", self.policy_spec),
        ]
    }
}

pub fn parse_config_text(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: origin.to_string(),
            line: i + 1,
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolves defaults, then `path` (if given), then `overrides`.
pub fn load_config(
    path: Option<&Path>,
    overrides: &BTreeMap<String, String>,
) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = path {
        let origin = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: origin.clone(),
            source,
        })?;
        for (k, v) in parse_config_text(&text, &origin)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    for line in cfg.echo() {
        log::info!("config {line}");
    }
    Ok(cfg)
}
