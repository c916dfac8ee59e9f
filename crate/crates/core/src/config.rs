//! TOML deployment configuration.
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::census::CensusParams;
use crate::ingest::{ReplaySpeed, DEFAULT_QUEUE_CAPACITY};
use crate::polarity::TrainConfig;

pub const TOKEN_ENV: &str = "MONITOR_TOKEN";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    /// SQLite database file; `:memory:` for a throwaway store.
    pub path: PathBuf,
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig { path: "monitor.db".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceConfig {
    /// Resource directory; the bundled resources when absent.
    pub dir: Option<PathBuf>,
    /// Morphological analyzer backend.
    pub backend: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarityConfig {
    /// Model file per language. Missing files are created on retraining.
    pub models: BTreeMap<String, PathBuf>,
    /// Base training dataset per language, used by retraining together
    /// with the stored corrections.
    pub training: BTreeMap<String, PathBuf>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workers: usize,
    pub queue_capacity: usize,
    /// Messages per store transaction.
    pub batch_size: usize,
    /// `max`, `realtime` or a rate in messages per second.
    pub replay_speed: String,
    /// Seconds between aggregate view rebuilds.
    pub refresh_period: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workers: 4,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            batch_size: 256,
            replay_speed: "max".into(),
            refresh_period: 900,
        }
    }
}

impl PipelineConfig {
    pub fn speed(&self) -> Result<ReplaySpeed, ConfigError> {
        self.replay_speed
            .parse()
            .map_err(|e: crate::ingest::IngestError| ConfigError::Invalid(e.to_string()))
    }

    pub fn refresh_interval(&self) -> Duration {
        Duration::from_secs(self.refresh_period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    pub token: Option<String>,
    /// Seconds between aggregate view rebuilds while serving.
    pub refresh_period: u64,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            token: None,
            refresh_period: 900,
        }
    }
}

impl ApiConfig {
    /// The environment variable wins over the file.
    pub fn effective_token(&self) -> Option<String> {
        std::env::var(TOKEN_ENV)
            .ok()
            .filter(|t| !t.is_empty())
            .or_else(|| self.token.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusConfig {
    /// Census file (`user_id<TAB>provenance<TAB>score`).
    pub path: Option<PathBuf>,
    pub params: CensusParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub storage: StorageConfig,
    /// Taxonomy file; the last stored taxonomy when absent.
    pub taxonomy: Option<PathBuf>,
    /// Sources file.
    pub sources: Option<PathBuf>,
    pub resources: ResourceConfig,
    pub polarity: PolarityConfig,
    pub pipeline: PipelineConfig,
    pub api: ApiConfig,
    pub census: CensusConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && p.as_os_str() != ":memory:" {
        *p = base.join(&*p);
    }
}

impl MonitorConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: MonitorConfig = toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.storage.path);
        for p in [&mut self.taxonomy, &mut self.sources, &mut self.resources.dir, &mut self.census.path]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for p in self.polarity.models.values_mut().chain(self.polarity.training.values_mut()) {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        if p.workers == 0 {
            return Err(ConfigError::Invalid("pipeline.workers must be positive".into()));
        }
        if p.queue_capacity == 0 || p.batch_size == 0 {
            return Err(ConfigError::Invalid("queue_capacity and batch_size must be positive".into()));
        }
        if p.refresh_period == 0 || self.api.refresh_period == 0 {
            return Err(ConfigError::Invalid("refresh periods must be positive".into()));
        }
        p.speed()?;
        Ok(())
    }
}
