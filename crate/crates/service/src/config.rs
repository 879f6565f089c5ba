use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use prokno_core::kg::TreeConfig;
use prokno_core::metrics::RiskConfig;
use prokno_core::qgen::EntailmentConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {path} is not a readable directory")]
    NotADirectory { field: &'static str, path: PathBuf },
    #[error("session_idle_timeout_secs must be greater than zero")]
    ZeroTimeout,
    #[error("semantic_threshold must lie in [0, 1], got {0}")]
    Threshold(f64),
}

fn default_semantic_threshold() -> f64 {
    0.5
}

/// Defaults applied when a metric or explanation request leaves a knob unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDefaults {
    #[serde(default = "default_semantic_threshold")]
    pub semantic_threshold: f64,
    #[serde(default)]
    pub entailment: EntailmentConfig,
    #[serde(default)]
    pub risk: RiskConfig,
    #[serde(default)]
    pub tree: TreeConfig,
}

impl Default for MetricDefaults {
    fn default() -> Self {
        MetricDefaults {
            semantic_threshold: default_semantic_threshold(),
            entailment: EntailmentConfig::default(),
            risk: RiskConfig::default(),
            tree: TreeConfig::default(),
        }
    }
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_timeout() -> u64 {
    1800
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    pub pk_dir: PathBuf,
    pub lexicon_dir: PathBuf,
    pub kg_dir: PathBuf,
    pub rules_dir: PathBuf,
    #[serde(default)]
    pub metrics: MetricDefaults,
    #[serde(default = "default_timeout")]
    pub session_idle_timeout_secs: u64,
}

impl ServiceConfig {
    /// Read a config file. Relative directories are resolved against the
    /// directory holding the file.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: ServiceConfig = serde_json::from_slice(&bytes).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for dir in [
            &mut config.pk_dir,
            &mut config.lexicon_dir,
            &mut config.kg_dir,
            &mut config.rules_dir,
        ] {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, dir) in [
            ("pk_dir", &self.pk_dir),
            ("lexicon_dir", &self.lexicon_dir),
            ("kg_dir", &self.kg_dir),
            ("rules_dir", &self.rules_dir),
        ] {
            if std::fs::read_dir(dir).is_err() {
                return Err(ConfigError::NotADirectory {
                    field,
                    path: dir.clone(),
                });
            }
        }
        if self.session_idle_timeout_secs == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        let t = self.metrics.semantic_threshold;
        if !(0.0..=1.0).contains(&t) {
            return Err(ConfigError::Threshold(t));
        }
        Ok(())
    }

    pub fn idle_timeout(&self) -> Duration {
        Duration::from_secs(self.session_idle_timeout_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_dirs_resolve_against_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("data")).unwrap();
        let path = dir.path().join("svc.json");
        std::fs::write(
            &path,
            r#"{"pk_dir":"data","lexicon_dir":"data","kg_dir":"data","rules_dir":"data"}"#,
        )
        .unwrap();
        let config = ServiceConfig::from_file(&path).unwrap();
        assert_eq!(config.pk_dir, dir.path().join("data"));
        assert_eq!(config.session_idle_timeout_secs, 1800);
        assert_eq!(config.metrics, MetricDefaults::default());
    }

    #[test]
    fn zero_timeout_and_missing_dir_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.json");
        std::fs::write(
            &path,
            r#"{"pk_dir":".","lexicon_dir":".","kg_dir":".","rules_dir":".","session_idle_timeout_secs":0}"#,
        )
        .unwrap();
        assert!(matches!(ServiceConfig::from_file(&path), Err(ConfigError::ZeroTimeout)));

        std::fs::write(
            &path,
            r#"{"pk_dir":"nope","lexicon_dir":".","kg_dir":".","rules_dir":"."}"#,
        )
        .unwrap();
        assert!(matches!(
            ServiceConfig::from_file(&path),
            Err(ConfigError::NotADirectory { field: "pk_dir", .. })
        ));
    }
}
