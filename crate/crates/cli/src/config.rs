//! `key = value` run-configuration files.
//!
//! Any flag of any subcommand can live in a config file instead; explicit
//! command-line flags win over file values, which win over built-in
//! defaults. Keys a command does not know are rejected outright.

use std::collections::BTreeMap;
use std::path::Path;

use crbm_bp::{Error, Result};

/// Parsed config file: a flat key/value map plus consumption tracking so
/// leftovers can be rejected.
#[derive(Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "config line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("config line {}: empty key", lineno + 1)));
            }
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!("duplicate config key '{key}'")));
            }
        }
        Ok(RunConfig { values })
    }

    /// Takes a raw value, removing it from the map.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    /// Takes and parses a value.
    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("config key '{key}': {e}"))),
        }
    }

    /// Errors on any key no one consumed.
    pub fn reject_unknown(&self) -> Result<()> {
        if let Some(key) = self.values.keys().next() {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        Ok(())
    }
}

/// Flag beats file beats default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag beats file; no default exists.
pub fn resolve_required<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::Config(format!("missing required option '{what}'")))
}
