//! Flat `key = value` configuration with flag overrides.
//!
//! Values are kept as text together with where they came from, so a bad value
//! can be reported against its key and source line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "space.kind",
    "space.sides",
    "space.radius",
    "space.angle",
    "space.lambda2",
    "domain.kind",
    "domain.u",
    "domain.k",
    "domain.b",
    "field.ell",
    "field.spacing",
    "field.k",
    "field.mesh_level",
    "field.binary",
    "expect.i",
    "gmf.jmax",
    "gmf.numeric",
    "gmf.samples",
    "mc.replicates",
    "mc.seed",
    "mc.workers",
    "mc.z_gate",
    "kff.alpha",
    "kff.beta",
    "poincare.n",
    "sup.tail",
    "tube.rho",
    "tube.jmax",
    "tube.numeric",
    "tube.euclid",
    "tube.euclid_rho",
    "out.format",
    "out.path",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(usize),
    Flag,
    Env(&'static str),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::File(line) => write!(f, "config line {line}"),
            Source::Flag => write!(f, "command line"),
            Source::Env(var) => write!(f, "environment variable {var}"),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Params {
    values: BTreeMap<String, (String, Source)>,
}

impl Params {
    pub fn parse_config(text: &str) -> Result<Self, CliError> {
        let mut p = Params::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {line_no}: expected 'key = value'"))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Config(format!(
                    "config line {line_no}: unknown key '{key}'"
                )));
            }
            p.values.insert(
                key.to_string(),
                (value.trim().to_string(), Source::File(line_no)),
            );
        }
        Ok(p)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Params::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                Params::parse_config(&text)
            }
        }
    }

    /// Flags win over file values.
    pub fn flag(&mut self, key: &str, value: Option<impl ToString>) {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        if let Some(v) = value {
            self.values
                .insert(key.to_string(), (v.to_string(), Source::Flag));
        }
    }

    /// Fills `key` from an environment variable when neither flag nor file set it.
    pub fn env_fallback(&mut self, key: &str, var: &'static str) {
        if self.values.contains_key(key) {
            return;
        }
        if let Ok(v) = std::env::var(var) {
            self.values.insert(key.to_string(), (v, Source::Env(var)));
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn bad(&self, key: &str, what: &str) -> CliError {
        let (value, source) = &self.values[key];
        CliError::Config(format!("{key} = '{value}' ({source}): {what}"))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.bad(key, "cannot parse value")),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str, hint: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("{key} is required ({hint})")))
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|t| t.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| self.bad(key, "expected a comma-separated list")),
        }
    }

    pub fn list_or<T: std::str::FromStr>(
        &self,
        key: &str,
        default: Vec<T>,
    ) -> Result<Vec<T>, CliError> {
        Ok(self.list(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(_) => Err(self.bad(key, "expected true or false")),
        }
    }

    /// Describes a rejected value (used once the key is known to be set).
    pub fn invalid(&self, key: &str, what: impl fmt::Display) -> CliError {
        match self.values.get(key) {
            Some(_) => self.bad(key, &what.to_string()),
            None => CliError::Config(format!("{key}: {what}")),
        }
    }
}
