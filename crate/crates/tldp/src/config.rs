//! Flat `key = value` experiment config files.
//!
//! One assignment per line, `#` starts a comment, arrays are comma-separated.
//! Keys mirror the CLI flags; flags override file values. Example:
//!
//! ```text
//! scenario = s1c1
//! policy   = tldp
//! n_q      = 10000
//! n_p      = 20000
//! gamma    = 1.0
//! kappa    = 0.6
//! reps     = 20
//! seed     = 7
//! out      = results/run1
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("key '{key}': cannot parse '{value}' as {wanted}")]
    BadValue {
        key: String,
        value: String,
        wanted: &'static str,
    },
}

const KNOWN_KEYS: [&str; 14] = [
    "scenario",
    "policy",
    "n_q",
    "n_p",
    "gamma",
    "kappa",
    "c_i",
    "c_r",
    "min_radius",
    "reps",
    "seed",
    "out",
    "axis",
    "values",
];

/// A parsed config file: raw string values keyed by normalised names.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    text: content.to_string(),
                });
            };
            let key = key.trim().to_ascii_lowercase().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { line, key });
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get_parsed<T: std::str::FromStr>(
        &self,
        key: &str,
        wanted: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.clone(),
                wanted,
            }),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get_parsed(key, "an unsigned integer")
    }

    pub fn get_u32(&self, key: &str) -> Result<Option<u32>, ConfigError> {
        self.get_parsed(key, "an unsigned integer")
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get_parsed(key, "a number")
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|piece| {
                    piece.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
                        key: key.to_string(),
                        value: v.clone(),
                        wanted: "a comma-separated list of numbers",
                    })
                })
                .collect::<Result<Vec<f64>, _>>()
                .map(Some),
        }
    }
}
