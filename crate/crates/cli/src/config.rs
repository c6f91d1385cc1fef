//! Run configuration: file values, command-line overrides, path resolution.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use skg_core::disambiguate::DEFAULT_BATCH_SIZE;
use skg_core::ingest::DEFAULT_CHUNK_BUDGET;
use skg_core::llm::{
    Completion, LiveBackend, LiveConfig, LlmSettings, Recorder, ReplayStore, API_KEY_ENV, DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_TEMPERATURE,
};
use skg_core::schema::{default_schema, load_schema, SchemaConfig};

use crate::CliError;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const DEFAULT_OUTPUT_DIR: &str = "out";
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    /// Live calls, appended to the fixture file.
    Record,
}

/// Run configuration as written. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))
    }

    /// Fields set in `over` replace fields here.
    pub fn overlay(&mut self, over: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            schema_path,
            corpus_path,
            backend,
            fixture_path,
            model,
            temperature,
            max_output_tokens,
            chunk_budget,
            batch_size,
            parallelism,
            output_dir,
            run_id,
            endpoint
        );
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.schema_path, &mut self.corpus_path, &mut self.fixture_path, &mut self.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// `run-` plus the first 12 hex digits of the sha256 of the config JSON
    /// without its run id.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.run_id = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = hex::encode(Sha256::digest(json.as_bytes()));
        format!("run-{}", &digest[..12])
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub schema: SchemaConfig,
    pub corpus_path: Option<PathBuf>,
    pub backend: BackendKind,
    pub fixture_path: Option<PathBuf>,
    pub llm: LlmSettings,
    pub chunk_budget: usize,
    pub batch_size: usize,
    pub parallelism: usize,
    pub run_id: String,
    pub run_dir: PathBuf,
    pub endpoint: String,
}

impl Settings {
    /// Reads `config_path` (if any), applies `overrides` (paths relative to
    /// the working directory), and validates.
    pub fn load(config_path: Option<&Path>, overrides: RunConfig) -> Result<Self, CliError> {
        let (written, mut resolved) = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                let written = RunConfig::parse(&text)?;
                let mut resolved = written.clone();
                resolved.resolve_paths(path.parent().unwrap_or(Path::new(".")));
                (written, resolved)
            }
            None => (RunConfig::default(), RunConfig::default()),
        };
        let mut hashed = written;
        hashed.overlay(overrides.clone());
        resolved.overlay(overrides);
        let run_id = match &resolved.run_id {
            Some(id) => id.clone(),
            None => hashed.content_hash(),
        };
        Self::from_config(resolved, run_id)
    }

    fn from_config(c: RunConfig, run_id: String) -> Result<Self, CliError> {
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(CliError::Config(format!("run_id {run_id:?} is not a valid directory name")));
        }
        let schema = match &c.schema_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read schema {}: {e}", p.display())))?;
                load_schema(&text).map_err(|e| CliError::Config(format!("schema {}: {e}", p.display())))?
            }
            None => default_schema(),
        };
        let parallelism = c.parallelism.unwrap_or(DEFAULT_PARALLELISM);
        if parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        let chunk_budget = c.chunk_budget.unwrap_or(DEFAULT_CHUNK_BUDGET);
        if chunk_budget == 0 {
            return Err(CliError::Config("chunk_budget must be positive".into()));
        }
        let batch_size = c.batch_size.unwrap_or(DEFAULT_BATCH_SIZE);
        if batch_size == 0 {
            return Err(CliError::Config("batch_size must be positive".into()));
        }
        let temperature = c.temperature.unwrap_or(DEFAULT_TEMPERATURE);
        if !(0.0..=2.0).contains(&temperature) {
            return Err(CliError::Config(format!("temperature {temperature} is outside 0..=2")));
        }
        let defaults = LlmSettings::default();
        let llm = LlmSettings {
            model: c.model.unwrap_or(defaults.model),
            temperature,
            max_output_tokens: c.max_output_tokens.unwrap_or(DEFAULT_MAX_OUTPUT_TOKENS),
        };
        if llm.model.trim().is_empty() || llm.max_output_tokens == 0 {
            return Err(CliError::Config("model must be named and max_output_tokens positive".into()));
        }
        let output_dir = c.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        Ok(Settings {
            schema,
            corpus_path: c.corpus_path,
            backend: c.backend.unwrap_or(BackendKind::Replay),
            fixture_path: c.fixture_path,
            llm,
            chunk_budget,
            batch_size,
            parallelism,
            run_dir: output_dir.join(&run_id),
            run_id,
            endpoint: c.endpoint.unwrap_or_else(|| DEFAULT_ENDPOINT.to_string()),
        })
    }

    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        self.corpus_path.as_deref().ok_or_else(|| CliError::Config("no corpus_path configured".into()))
    }

    fn fixture_path(&self) -> Result<&Path, CliError> {
        self.fixture_path
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("backend {:?} needs fixture_path", self.backend)))
    }

    fn live(&self) -> Result<LiveBackend, CliError> {
        let cfg = LiveConfig::from_env(self.endpoint.clone());
        if cfg.api_key.is_none() {
            return Err(CliError::Config(format!("backend {:?} needs {API_KEY_ENV} to be set", self.backend)));
        }
        Ok(LiveBackend::new(LiveConfig { max_in_flight: self.parallelism, ..cfg }))
    }

    /// Backend reading or writing the fixture file at `fixtures`.
    fn backend_at(&self, fixtures: Option<&Path>) -> Result<Box<dyn Completion>, CliError> {
        match self.backend {
            BackendKind::Live => Ok(Box::new(self.live()?)),
            BackendKind::Replay => {
                let path = fixtures.ok_or_else(|| CliError::Config("backend replay needs fixture_path".into()))?;
                if !path.is_file() {
                    return Err(CliError::Config(format!("fixture file {} does not exist", path.display())));
                }
                let store = ReplayStore::load(path).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(Box::new(store))
            }
            BackendKind::Record => {
                let path = fixtures.ok_or_else(|| CliError::Config("backend record needs fixture_path".into()))?;
                Ok(Box::new(Recorder::new(self.live()?, path)))
            }
        }
    }

    pub fn backend(&self) -> Result<Box<dyn Completion>, CliError> {
        match self.backend {
            BackendKind::Live => self.backend_at(None),
            _ => self.backend_at(Some(self.fixture_path()?)),
        }
    }

    /// Backend for consistency run `k`; fixture_path names a directory of
    /// per-run namespaces.
    pub fn run_backend(&self, k: usize) -> Result<Box<dyn Completion>, CliError> {
        match self.backend {
            BackendKind::Live => self.backend_at(None),
            _ => {
                let dir = self.fixture_path()?;
                if self.backend == BackendKind::Replay && !dir.is_dir() {
                    return Err(CliError::Config(format!("fixture directory {} does not exist", dir.display())));
                }
                let ns = ReplayStore::namespace_path(dir, &skg_core::eval::run_namespace(k));
                self.backend_at(Some(&ns))
            }
        }
    }
}
