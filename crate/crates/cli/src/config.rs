//! `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored.
//! Lists are comma separated.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::BadInput(format!("config line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(CliError::BadInput(format!("config line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::BadInput(format!("config line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::BadInput(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// Command-line values take precedence over the file.
    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.entries.insert(key.to_string(), v);
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.entries.get(key).cloned().unwrap_or_else(|| default.to_string())
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.entries
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::BadInput(format!("config `{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.opt(key)?.ok_or_else(|| CliError::BadInput(format!("config is missing `{key}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        let Some(v) = self.entries.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|_| CliError::BadInput(format!("config `{key}`: cannot parse `{s}`"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_overrides() {
        let mut c = KvConfig::parse("# header\nseed = 7\nmethods = mv, ds-em # trailing\n\n").unwrap();
        assert_eq!(c.require::<u64>("seed").unwrap(), 7);
        assert_eq!(c.list::<String>("methods").unwrap().unwrap(), vec!["mv", "ds-em"]);
        c.set("seed", Some("9".into()));
        assert_eq!(c.get_or("seed", 0u64).unwrap(), 9);
        assert_eq!(c.get_or("missing", 1.5f64).unwrap(), 1.5);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvConfig::parse("seed 7").is_err());
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        assert!(KvConfig::parse("seed = x").unwrap().require::<u64>("seed").is_err());
    }
}
