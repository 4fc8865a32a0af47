//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique;
//! later layers (command-line flags) override earlier ones via [`KeyValues::set`].

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{0}`: {1}")]
    Value(String, String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax(i + 1));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: k.to_string(),
                });
            }
        }
        Ok(Self { map })
    }

    pub fn read_file(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Fails on the first key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError::Value(key.to_string(), e.to_string()))
            })
            .transpose()
    }

    pub fn set_f64(&self, key: &str, slot: &mut f64) -> Result<(), ConfigError> {
        if let Some(v) = self.parse_value::<f64>(key)? {
            if !v.is_finite() {
                return Err(ConfigError::Value(key.into(), "must be finite".into()));
            }
            *slot = v;
        }
        Ok(())
    }

    pub fn set_u64(&self, key: &str, slot: &mut u64) -> Result<(), ConfigError> {
        if let Some(v) = self.parse_value::<u64>(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn set_usize(&self, key: &str, slot: &mut usize) -> Result<(), ConfigError> {
        if let Some(v) = self.parse_value::<usize>(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Comma-separated list of exactly `len` numbers.
    pub fn get_f64_list(&self, key: &str, len: usize) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        let vals: Result<Vec<f64>, _> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == len && v.iter().all(|x| x.is_finite()) => Ok(Some(v)),
            _ => Err(ConfigError::Value(
                key.to_string(),
                format!("expected {len} comma-separated numbers"),
            )),
        }
    }
}
