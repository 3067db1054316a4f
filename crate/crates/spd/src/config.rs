//! Flat `key = value` configuration files.
//!
//! Keys use the long flag names with `-` or `_` (`batch-size`, `batch_size`).
//! Blank lines and lines starting with `#` are ignored. Command-line flags
//! override file values, which override built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, CliError, Result};

/// Every key any subcommand understands.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "eta",
    "tau",
    "k",
    "runs",
    "protocol",
    "mode",
    "steps",
    "batch_size",
    "lr",
    "momentum",
    "input_size",
    "pool_seed",
    "run",
    "object",
    "epsilon",
    "max_channels",
    "smooth_sigma",
    "count",
    "size",
    "anomaly_fraction",
    "defect_min",
    "defect_max",
    "textures",
    "defects",
    "spd_cosine",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid!("line {}: expected key=value", i + 1))?;
            let key = normalize(k);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(invalid!("line {}: unknown key '{}'", i + 1, k.trim()));
            }
            if values.insert(key, v.trim().to_string()).is_some() {
                return Err(invalid!("line {}: duplicate key '{}'", i + 1, k.trim()));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    /// Parsed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| invalid!("config value '{v}' for '{key}' is not valid")),
        }
    }

    /// Flag if given, else the file value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Like [`pick`](Self::pick) with no default: a missing value is a usage
    /// error.
    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => self
                .get(key)?
                .ok_or_else(|| invalid!("missing --{} (flag or config key '{key}')", key.replace('_', "-"))),
        }
    }
}
