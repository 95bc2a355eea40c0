//! Flat `key=value` config files. Keys are the long flag names without the
//! leading dashes; `#` starts a comment. Command-line flags override file
//! values, which override built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::Failure;

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        if let Some(bad) = cfg.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Failure::Usage(format!("unknown config key {bad:?}")).into());
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Failure::Usage(format!("config line {}: expected key=value", i + 1))
            })?;
            let key = k.trim().trim_start_matches("--").to_owned();
            values.insert(key, v.trim().to_owned());
        }
        Ok(ConfigFile { values })
    }

    /// Flag value, else file value, else `None`.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| Failure::Usage(format!("config key {key}: {e}")).into()),
        }
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    /// Boolean switches: set by the flag or by `key=true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> anyhow::Result<bool> {
        Ok(flag || self.get::<bool>(None, key)?.unwrap_or(false))
    }
}
