//! TOML run configuration.
//!
//! ```toml
//! [backend]
//! model = "groundloop-7b"
//! locator = "http://127.0.0.1:8000/v1/chat"   # or: script = "replies.jsonl"
//!
//! [agents.grounding]
//! fixture = "grounding.jsonl"                 # or: url = "http://..."
//!
//! [agents.ocr]
//! url = "http://127.0.0.1:8002/ocr"
//!
//! [run]
//! parallelism = 4
//!
//! [paths]
//! dataset = "dataset.jsonl"
//! output = "out"
//! ```
//!
//! Relative paths resolve against the config file's directory. Unknown keys
//! are rejected. `GROUNDLOOP_MODEL` and `GROUNDLOOP_BACKEND_URL` override the
//! backend block; command-line flags override everything.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    load_fixture_agent, AgentEndpoint, AgentKind, FixtureParseError, DEFAULT_AGENT_TIMEOUT_MS,
    DEFAULT_MAX_PER_CLASS, DEFAULT_SCORE_THRESHOLD,
};
use crate::orchestrator::{Agents, Backend, BackendEndpoint, RunConfig, ScriptedBackend};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config error at `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub locator: Option<String>,
    /// Scripted replies instead of a live backend.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    #[serde(default)]
    pub retry_limit: Option<u32>,
    #[serde(default)]
    pub backoff_base_ms: Option<u64>,
    #[serde(default)]
    pub sampling: BTreeMap<String, serde_json::Value>,
}

fn default_model() -> String {
    "scripted".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_threshold")]
    pub score_threshold: f64,
    #[serde(default = "default_cap")]
    pub max_per_class: usize,
}

fn default_timeout() -> u64 {
    DEFAULT_AGENT_TIMEOUT_MS
}
fn default_threshold() -> f64 {
    DEFAULT_SCORE_THRESHOLD
}
fn default_cap() -> usize {
    DEFAULT_MAX_PER_CLASS
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    #[serde(default)]
    pub grounding: Option<AgentConfig>,
    #[serde(default)]
    pub ocr: Option<AgentConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub candidates: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub backend: BackendConfig,
    #[serde(default)]
    pub agents: AgentsConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

/// Command-line values that win over the file and the environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub parallelism: Option<usize>,
    pub no_positions: bool,
    pub budget: Option<usize>,
    pub output: Option<PathBuf>,
}

impl AppConfig {
    /// Parse, resolve relative paths against `base`, apply environment
    /// overrides and check that every referenced input exists.
    pub fn parse(
        text: &str,
        base: &Path,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let mut cfg: AppConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::new(field, e.into_inner().message().trim().to_string())
        })?;
        if let Some(model) = env("GROUNDLOOP_MODEL") {
            cfg.backend.model = model;
        }
        if let Some(url) = env("GROUNDLOOP_BACKEND_URL") {
            cfg.backend.locator = Some(url);
            cfg.backend.script = None;
        }
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, |k| std::env::var(k).ok())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.backend.script);
        for agent in [&mut self.agents.grounding, &mut self.agents.ocr]
            .into_iter()
            .flatten()
        {
            fix(&mut agent.fixture);
        }
        fix(&mut self.paths.dataset);
        fix(&mut self.paths.candidates);
        fix(&mut self.paths.output);
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let exists = |field: &str, p: &Option<PathBuf>| match p {
            Some(path) if !path.exists() => Err(ConfigError::new(
                field,
                format!("{} does not exist", path.display()),
            )),
            _ => Ok(()),
        };
        match (&self.backend.script, &self.backend.locator) {
            (None, None) => {
                return Err(ConfigError::new(
                    "backend",
                    "set either `locator` or `script`",
                ))
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "backend",
                    "`locator` and `script` are exclusive",
                ))
            }
            _ => {}
        }
        exists("backend.script", &self.backend.script)?;
        for (name, agent) in [
            ("grounding", &self.agents.grounding),
            ("ocr", &self.agents.ocr),
        ] {
            let Some(agent) = agent else { continue };
            let field = format!("agents.{name}");
            if agent.fixture.is_some() == agent.url.is_some() {
                return Err(ConfigError::new(
                    field,
                    "set exactly one of `fixture` or `url`",
                ));
            }
            exists(&format!("{field}.fixture"), &agent.fixture)?;
            if !(0.0..=1.0).contains(&agent.score_threshold) {
                return Err(ConfigError::new(
                    format!("{field}.score_threshold"),
                    "must lie in [0, 1]",
                ));
            }
            if agent.max_per_class == 0 {
                return Err(ConfigError::new(
                    format!("{field}.max_per_class"),
                    "must be positive",
                ));
            }
        }
        exists("paths.dataset", &self.paths.dataset)?;
        exists("paths.candidates", &self.paths.candidates)?;
        self.check_run()
    }

    fn check_run(&self) -> Result<(), ConfigError> {
        if self.run.parallelism == 0 {
            return Err(ConfigError::new("run.parallelism", "must be positive"));
        }
        if self.run.budget.context_limit == 0 {
            return Err(ConfigError::new(
                "run.budget.context_limit",
                "must be positive",
            ));
        }
        if !(self.run.budget.chars_per_token.is_finite() && self.run.budget.chars_per_token > 0.0) {
            return Err(ConfigError::new(
                "run.budget.chars_per_token",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(p) = o.parallelism {
            self.run.parallelism = p;
        }
        if o.no_positions {
            self.run.composer.include_positions = false;
        }
        if let Some(b) = o.budget {
            self.run.budget.context_limit = b;
        }
        if let Some(out) = &o.output {
            self.paths.output = Some(out.clone());
        }
        self.check_run()
    }

    pub fn backend_endpoint(&self) -> BackendEndpoint {
        let b = &self.backend;
        let locator = match (&b.script, &b.locator) {
            (Some(script), _) => format!("scripted://{}", script.display()),
            (None, Some(url)) => url.clone(),
            (None, None) => String::new(),
        };
        let mut ep = BackendEndpoint::new(locator, b.model.clone());
        if let Some(v) = b.max_output_tokens {
            ep.max_output_tokens = v;
        }
        if let Some(v) = b.timeout_ms {
            ep.timeout_ms = v;
        }
        if let Some(v) = b.retry_limit {
            ep.retry_limit = v;
        }
        if let Some(v) = b.backoff_base_ms {
            ep.backoff_base_ms = v;
        }
        ep.sampling = b.sampling.clone();
        ep
    }

    pub fn build_backend(&self) -> Result<Backend, ConfigError> {
        let endpoint = self.backend_endpoint();
        endpoint
            .validate()
            .map_err(|e| ConfigError::new("backend", e.to_string()))?;
        match &self.backend.script {
            Some(script) => {
                let scripted = ScriptedBackend::load(script)
                    .map_err(|e| ConfigError::new("backend.script", e))?;
                Ok(Backend::new(endpoint, Arc::new(scripted)))
            }
            None => Ok(Backend::http(endpoint)),
        }
    }

    pub fn build_agents(&self) -> Result<Agents, FixtureParseError> {
        let build = |kind: AgentKind,
                     cfg: &Option<AgentConfig>|
         -> Result<Option<AgentEndpoint>, FixtureParseError> {
            let Some(cfg) = cfg else { return Ok(None) };
            let ep = match (&cfg.fixture, &cfg.url) {
                (Some(path), _) => load_fixture_agent(path, kind)?,
                (None, Some(url)) => AgentEndpoint::remote(kind, url.clone()),
                (None, None) => return Ok(None),
            };
            Ok(Some(
                ep.with_timeout_ms(cfg.timeout_ms)
                    .with_score_threshold(cfg.score_threshold)
                    .with_max_per_class(cfg.max_per_class),
            ))
        };
        Ok(Agents {
            grounding: build(AgentKind::Grounding, &self.agents.grounding)?,
            ocr: build(AgentKind::Ocr, &self.agents.ocr)?,
        })
    }
}
