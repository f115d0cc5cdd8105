//! Line-oriented `key = value` config files with `[section]` headers.

use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::{Error, Result};

/// A parsed config file with typed, error-reporting getters.
pub struct ConfigFile {
    origin: String,
    ini: Ini,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            origin: origin.to_string(),
            ini,
        })
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    /// Named sections in file order.
    pub fn sections(&self) -> impl Iterator<Item = &str> {
        self.ini.sections().flatten()
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.ini.section(Some(section)).is_some()
    }

    pub fn keys(&self, section: &str) -> Vec<String> {
        self.ini
            .section(Some(section))
            .map(|p| p.iter().map(|(k, _)| k.to_string()).collect())
            .unwrap_or_default()
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.get_from(Some(section), key).map(str::trim)
    }

    pub fn require_str(&self, section: &str, key: &str) -> Result<&str> {
        self.get_str(section, key)
            .ok_or_else(|| self.err(format!("[{section}] missing field `{key}`")))
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get_str(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(format!("[{section}] field `{key}` has invalid value {v:?}"))),
        }
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get(section, key)?
            .ok_or_else(|| self.err(format!("[{section}] missing field `{key}`")))
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    /// Comma-separated list; empty items are dropped.
    pub fn get_list(&self, section: &str, key: &str) -> Option<Vec<String>> {
        self.get_str(section, key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }

    pub fn err(&self, reason: impl Into<String>) -> Error {
        Error::Config {
            path: self.origin.clone(),
            reason: reason.into(),
        }
    }
}
