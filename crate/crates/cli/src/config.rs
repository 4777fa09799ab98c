//! Flat TOML configuration.
//!
//! Every key is optional. Relative paths resolve against the directory of
//! the configuration file. Credentials are never read from here: the API
//! key comes from `LOGICSCAN_API_KEY` alone.

use std::path::{Path, PathBuf};

use logicscan::llm::{RemoteConfig, API_KEY_ENV};
use logicscan::store::{DEFAULT_K, DEFAULT_MIN_SIM, DETERMINISTIC_DIM, REMOTE_DIM};
use serde::Deserialize;

/// Looked up in the working directory when `--config` is not given.
pub const DEFAULT_CONFIG: &str = "logicscan.toml";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    store: Option<PathBuf>,
    category_map: Option<PathBuf>,
    dictionary: Option<PathBuf>,
    miner_endpoint: Option<String>,
    miner_model: Option<String>,
    checker_endpoint: Option<String>,
    checker_model: Option<String>,
    temperature: Option<f64>,
    timeout_ms: Option<u64>,
    max_attempts: Option<u32>,
    embedder: Option<String>,
    embedding_endpoint: Option<String>,
    embedding_dim: Option<usize>,
    k: Option<usize>,
    min_sim: Option<f64>,
    parallelism: Option<usize>,
    include_writers: Option<bool>,
    aggregate: Option<bool>,
    percentile: Option<f64>,
    top_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedderConfig {
    Deterministic { dim: usize },
    Remote { endpoint: String, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub store: PathBuf,
    pub category_map: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub miner: Option<RemoteConfig>,
    pub checker: Option<RemoteConfig>,
    pub embedder: EmbedderConfig,
    pub timeout_ms: u64,
    pub k: usize,
    pub min_sim: f64,
    pub parallelism: usize,
    pub include_writers: bool,
    pub aggregate: bool,
    pub percentile: f64,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

const SECRET_KEYS: &[&str] = &["api_key", "apikey", "key", "token", "secret", "password"];

impl Config {
    /// Reads `path`, or `logicscan.toml` in the working directory, or falls
    /// back to defaults when neither was asked for nor found.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| err(format!("{}: {e}", p.display())))?;
                let base = p.parent().filter(|b| !b.as_os_str().is_empty()).unwrap_or(Path::new("."));
                Self::parse(&text, base).map_err(|e| err(format!("{}: {e}", p.display())))
            }
            None if Path::new(DEFAULT_CONFIG).is_file() => Self::load(Some(Path::new(DEFAULT_CONFIG))),
            None => Self::parse("", Path::new(".")),
        }
    }

    /// Parses configuration text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| err(e.message().to_owned()))?;
        for key in table.keys() {
            let lower = key.to_ascii_lowercase();
            if SECRET_KEYS.iter().any(|s| lower == *s || lower.ends_with(&format!("_{s}"))) {
                return Err(err(format!("key `{key}` is not accepted; set {API_KEY_ENV} in the environment instead")));
            }
        }
        let raw: RawConfig = table.try_into().map_err(|e: toml::de::Error| err(e.message().to_owned()))?;
        let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };

        let timeout_ms = raw.timeout_ms.unwrap_or(120_000);
        let remote = |endpoint: Option<String>, model: Option<String>, slot: &str| -> Result<_, ConfigError> {
            match (endpoint, model) {
                (None, None) => Ok(None),
                (Some(endpoint), model) => {
                    let mut c = RemoteConfig::new(endpoint, model.unwrap_or_default());
                    c.temperature = raw.temperature.unwrap_or(0.0);
                    c.timeout_ms = timeout_ms;
                    if let Some(n) = raw.max_attempts {
                        if n == 0 {
                            return Err(err("max_attempts must be at least 1"));
                        }
                        c.max_attempts = n;
                    }
                    Ok(Some(c))
                }
                (None, Some(_)) => Err(err(format!("{slot}_model is set but {slot}_endpoint is not"))),
            }
        };
        let miner = remote(raw.miner_endpoint.clone(), raw.miner_model.clone(), "miner")?;
        let checker = remote(raw.checker_endpoint.clone(), raw.checker_model.clone(), "checker")?.or_else(|| miner.clone());

        let embedder = match raw.embedder.as_deref().unwrap_or("deterministic") {
            "deterministic" => {
                if raw.embedding_endpoint.is_some() {
                    return Err(err("embedding_endpoint requires embedder = \"remote\""));
                }
                EmbedderConfig::Deterministic { dim: raw.embedding_dim.unwrap_or(DETERMINISTIC_DIM) }
            }
            "remote" => EmbedderConfig::Remote {
                endpoint: raw.embedding_endpoint.clone().ok_or_else(|| err("embedder = \"remote\" needs embedding_endpoint"))?,
                dim: raw.embedding_dim.unwrap_or(REMOTE_DIM),
            },
            other => return Err(err(format!("unknown embedder {other:?} (expected \"deterministic\" or \"remote\")"))),
        };
        if matches!(embedder, EmbedderConfig::Deterministic { dim: 0 } | EmbedderConfig::Remote { dim: 0, .. }) {
            return Err(err("embedding_dim must be positive"));
        }

        let k = raw.k.unwrap_or(DEFAULT_K);
        if k < 1 {
            return Err(err("k must be at least 1"));
        }
        let min_sim = raw.min_sim.unwrap_or(DEFAULT_MIN_SIM);
        if !(min_sim > 0.0 && min_sim <= 1.0) {
            return Err(err(format!("min_sim must lie in (0, 1], got {min_sim}")));
        }
        let percentile = raw.percentile.unwrap_or(logicscan::corpus::DEFAULT_PERCENTILE);
        if !(percentile > 0.0 && percentile <= 1.0) {
            return Err(err(format!("percentile must lie in (0, 1], got {percentile}")));
        }

        let config = Config {
            store: resolve(raw.store.unwrap_or_else(|| "store".into())),
            category_map: raw.category_map.map(resolve),
            dictionary: raw.dictionary.map(resolve),
            miner,
            checker,
            embedder,
            timeout_ms,
            k,
            min_sim,
            parallelism: raw.parallelism.unwrap_or(1).max(1),
            include_writers: raw.include_writers.unwrap_or(true),
            aggregate: raw.aggregate.unwrap_or(true),
            percentile,
            top_n: raw.top_n.unwrap_or(logicscan::knowledge::DEFAULT_TOP_N),
        };
        config.check_paths()?;
        Ok(config)
    }

    fn check_paths(&self) -> Result<(), ConfigError> {
        for (key, path) in [("category_map", &self.category_map), ("dictionary", &self.dictionary)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(err(format!("{key}: {} is not a readable file", p.display())));
                }
            }
        }
        if self.store.exists() && !self.store.is_dir() {
            return Err(err(format!("store: {} is not a directory", self.store.display())));
        }
        Ok(())
    }
}
