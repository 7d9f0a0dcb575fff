use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use guides_core::access::{AccessPolicy, Grant, PolicyError, Role};
use serde::Deserialize;
use thiserror::Error;

/// Environment variable that overrides the configured listen address.
pub const LISTEN_ENV: &str = "GUIDES_LISTEN";

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_AREA_CAP_KM2: f64 = 25.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{}`: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config `{}`: {message}", .path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("area cap must be positive, got {0}")]
    AreaCap(f64),
}

fn default_listen() -> String {
    DEFAULT_LISTEN.to_string()
}

fn default_area_cap() -> f64 {
    DEFAULT_AREA_CAP_KM2
}

/// Service config file (JSON, or TOML when the extension is `.toml`).
/// Without a `grants` table the built-in grant table is used.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Dataset manifest; relative paths resolve against the config file.
    pub dataset: PathBuf,
    #[serde(default)]
    pub tokens: BTreeMap<String, Role>,
    #[serde(default)]
    pub grants: Option<BTreeMap<Role, BTreeSet<Grant>>>,
    #[serde(default = "default_area_cap")]
    pub area_cap_km2: f64,
}

impl ServiceConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        Self {
            listen: default_listen(),
            dataset: dataset.into(),
            tokens: BTreeMap::new(),
            grants: None,
            area_cap_km2: DEFAULT_AREA_CAP_KM2,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut config: ServiceConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        if config.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                config.dataset = dir.join(&config.dataset);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.area_cap_km2 > 0.0 && self.area_cap_km2.is_finite()) {
            return Err(ConfigError::AreaCap(self.area_cap_km2));
        }
        self.policy().map(|_| ())
    }

    pub fn policy(&self) -> Result<AccessPolicy, ConfigError> {
        Ok(match &self.grants {
            Some(g) => AccessPolicy::new(g.clone(), self.tokens.clone())?,
            None => AccessPolicy::default().with_tokens(self.tokens.clone()),
        })
    }

    /// The listen address, with `env` (the value of [`LISTEN_ENV`]) taking
    /// precedence when set and non-empty.
    pub fn listen_addr(&self, env: Option<String>) -> String {
        env.filter(|v| !v.trim().is_empty()).unwrap_or_else(|| self.listen.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("svc.json");
        let toml_path = dir.path().join("svc.toml");
        std::fs::write(&json, r#"{"dataset": "data/manifest.json", "tokens": {"abc": "crew"}}"#).unwrap();
        std::fs::write(&toml_path, "dataset = \"data/manifest.json\"\n[tokens]\nabc = \"crew\"\n").unwrap();
        let a = ServiceConfig::load(&json).unwrap();
        let b = ServiceConfig::load(&toml_path).unwrap();
        assert_eq!(a.dataset, dir.path().join("data/manifest.json"));
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.listen, DEFAULT_LISTEN);
        assert_eq!(a.area_cap_km2, 25.0);
        assert_eq!(a.policy().unwrap().session(Some("abc")).role, Role::Crew);
    }

    #[test]
    fn env_overrides_listen() {
        let c = ServiceConfig::new("m.json");
        assert_eq!(c.listen_addr(None), DEFAULT_LISTEN);
        assert_eq!(c.listen_addr(Some("0.0.0.0:9000".into())), "0.0.0.0:9000");
        assert_eq!(c.listen_addr(Some(" ".into())), DEFAULT_LISTEN);
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("svc.json");
        std::fs::write(&p, r#"{"dataset": "m.json", "area_cap_km2": 0}"#).unwrap();
        assert!(matches!(ServiceConfig::load(&p), Err(ConfigError::AreaCap(_))));
        std::fs::write(&p, r#"{"dataset": "m.json", "grants": {"public": ["update:*"]}}"#).unwrap();
        assert!(matches!(ServiceConfig::load(&p), Err(ConfigError::Policy(_))));
        std::fs::write(&p, r#"{"dataset": "m.json", "port": 1}"#).unwrap();
        assert!(matches!(ServiceConfig::load(&p), Err(ConfigError::Parse { .. })));
    }
}
