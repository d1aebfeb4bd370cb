//! Flat `key = value` settings with CLI > file > default precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every key a config file may contain.
pub const KNOWN_KEYS: &[&str] = &[
    "input",
    "model",
    "output",
    "calibration",
    "trace",
    "summary",
    "k",
    "alpha",
    "fraction",
    "far",
    "threshold",
    "n_end",
    "seed",
    "empty_frame_policy",
    "phi_convention",
    "weights",
    "force",
    "dim",
    "d_alpha_pow",
    "phi",
    "periods",
    "runs",
    "max_steps",
];

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = normalize(key);
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Resolved string settings for one command.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Overlays `cli` on top of `file`; keys absent from both fall back to per-key defaults at lookup.
    pub fn merge(file: BTreeMap<String, String>, cli: Vec<(&'static str, Option<String>)>) -> Self {
        let mut values = file;
        for (key, value) in cli {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Self { values }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.optional(key)?.unwrap_or(default))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("invalid value {s:?} for {}: {e}", flag(key)))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.optional(key)?.ok_or_else(|| CliError::Usage(format!("{} is required", flag(key))))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key).ok_or_else(|| CliError::Usage(format!("{} is required", flag(key))))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        self.get(key, false)
    }

    pub fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Usage(format!("invalid value {s:?} for {}: {e}", flag(key))))
                })
                .collect(),
        }
    }
}

fn flag(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}
