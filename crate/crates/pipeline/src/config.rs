//! Pipeline configuration, read from a TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backends, HttpTransport, RetryPolicy, Transport};
use crate::cassette::{Cassette, CassetteError, CassetteMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Needed unless every call is replayed from a cassette.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub version: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_workers() -> usize {
    1
}

fn default_batch() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Documents processed at once.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Most depictions sent in one coreference request.
    #[serde(default = "default_batch")]
    pub coreference_batch: usize,
    /// Look up protein mentions in the protein database backend.
    #[serde(default)]
    pub enrich_proteins: bool,
    /// Extra abbreviation table (TSV) merged over the built-in one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abbreviations: Option<PathBuf>,
    #[serde(default)]
    pub backends: BTreeMap<String, EndpointConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workers: default_workers(),
            retry: RetryPolicy::default(),
            coreference_batch: default_batch(),
            enrich_proteins: false,
            abbreviations: None,
            backends: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("backend {0} has no url and no cassette replays it")]
    MissingUrl(String),
    #[error(transparent)]
    Cassette(#[from] CassetteError),
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), source: e })?;
        toml::from_str(&text).map_err(|e| ConfigError::Toml { path: path.into(), source: e })
    }

    /// Builds the backend set; with a cassette, calls go through it in the
    /// given mode.
    pub fn backends(&self, cassette: Option<(&Path, CassetteMode)>) -> Result<Backends, ConfigError> {
        let versions: BTreeMap<String, String> = self.backends.iter().map(|(k, v)| (k.clone(), v.version.clone())).collect();
        let live = || -> Result<Arc<dyn Transport>, ConfigError> {
            let mut endpoints = BTreeMap::new();
            for (name, ep) in &self.backends {
                let url = ep.url.clone().ok_or_else(|| ConfigError::MissingUrl(name.clone()))?;
                endpoints.insert(name.clone(), (url, Duration::from_millis(ep.timeout_ms)));
            }
            Ok(Arc::new(HttpTransport::new(endpoints)))
        };
        let transport: Arc<dyn Transport> = match cassette {
            None => live()?,
            Some((dir, CassetteMode::Replay)) => Arc::new(Cassette::open(dir, CassetteMode::Replay, None)?),
            Some((dir, mode)) => Arc::new(Cassette::open(dir, mode, Some(live()?))?),
        };
        Ok(Backends::new(transport, versions, self.retry))
    }
}
