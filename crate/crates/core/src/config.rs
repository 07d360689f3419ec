//! Run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::allocator::StrategyConfig;
use crate::backend::{HttpConfig, PromptTemplate, SamplingParams};
use crate::grader::GraderConfig;
use crate::scheduler::SchedulerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Sim,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub backend: BackendKind,
    /// Seeds the simulated backend; required when `backend = "sim"`.
    pub seed: Option<u64>,
    /// JSONL of `{query_id, p}` for the simulated backend.
    pub profile: Option<PathBuf>,
    pub sampling: SamplingParams,
    pub http: HttpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfilingConfig {
    pub n_d: u64,
    pub batch_size: u32,
}

impl Default for ProfilingConfig {
    fn default() -> Self {
        Self { n_d: 192, batch_size: 16 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub queries: Option<PathBuf>,
    pub originals: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub grader: GraderConfig,
    pub template: PromptTemplate,
    pub profiling: ProfilingConfig,
    pub strategy: StrategyConfig,
    pub scheduler: SchedulerConfig,
    pub shuffle_seed: u64,
    pub paths: PathsConfig,
}

/// Fields that only affect where files live or how fast a run goes.
const NON_SEMANTIC: &[&[&str]] = &[
    &["paths"],
    &["scheduler", "workers"],
    &["scheduler", "batch_size"],
    &["profiling", "batch_size"],
    &["generator", "profile"],
    &["generator", "http", "api_key_env"],
    &["generator", "http", "timeout_secs"],
    &["generator", "http", "retry"],
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text).map_err(|message| ConfigError::Parse { path: path.to_path_buf(), message })
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// SHA-256 of the canonical JSON of every output-relevant field.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable config");
        for path in NON_SEMANTIC {
            remove_path(&mut v, path);
        }
        // serde_json maps are ordered by key, so this encoding is canonical
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("serializable value")))
    }

    /// The snapshot stored next to every output.
    pub fn snapshot(&self) -> Value {
        serde_json::json!({ "config_hash": self.hash(), "config": self })
    }

    pub fn write_snapshot(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("run_config.json");
        let text = serde_json::to_string_pretty(&self.snapshot()).expect("serializable snapshot");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

fn remove_path(v: &mut Value, path: &[&str]) {
    match path {
        [] => {}
        [last] => {
            if let Value::Object(m) = v {
                m.remove(*last);
            }
        }
        [head, rest @ ..] => {
            if let Some(child) = v.get_mut(*head) {
                remove_path(child, rest);
            }
        }
    }
}
