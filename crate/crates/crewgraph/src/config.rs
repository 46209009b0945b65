//! Declarative workflow configuration.
//!
//! One JSON document per workflow drives the CLI (and is equally usable as a
//! library entry point). Secrets never live in the file: the API key comes
//! from `CREWGRAPH_API_KEY`, and `CREWGRAPH_BASE_URL` supplies a default
//! base URL. File paths are resolved relative to the config file's
//! directory, so a config tree can be copied wholesale.
//!
//! ```json
//! {
//!   "workflow": "email",
//!   "model": {"provider": "mock", "model": "scripted"},
//!   "mock_script": "script.json",
//!   "paths": {"inbox": "inbox.jsonl", "outbox": "outbox.jsonl"},
//!   "params": {"wait_seconds": 300}
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crew::AgentSpec;
use crate::gateway::{ApiKey, ModelRef, Provider};
use crate::workflows::{
    self, CodegenConfig, EmailConfig, TicketConfig, AUDITOR_ROLE, DRAFTER_ROLE, GENERATOR_ROLE,
    REVIEWER_ROLE,
};

pub const ENV_API_KEY: &str = "CREWGRAPH_API_KEY";
pub const ENV_BASE_URL: &str = "CREWGRAPH_BASE_URL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// serde_json errors carry line and column positions.
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config field {field:?}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowKind {
    Email,
    Codegen,
    Ticket,
}

impl fmt::Display for WorkflowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkflowKind::Email => "email",
            WorkflowKind::Codegen => "codegen",
            WorkflowKind::Ticket => "ticket",
        })
    }
}

/// A model reference as written in config (no secrets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub provider: Provider,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
}

impl ModelEntry {
    /// Resolve against the environment: explicit base_url, else
    /// `CREWGRAPH_BASE_URL`, else the provider's conventional default.
    pub fn to_model_ref(&self) -> ModelRef {
        let base_url = self
            .base_url
            .clone()
            .or_else(|| std::env::var(ENV_BASE_URL).ok())
            .unwrap_or_else(|| match self.provider {
                Provider::Ollama => "http://localhost:11434".to_string(),
                Provider::OpenAiCompat => "https://api.openai.com".to_string(),
                Provider::Mock => String::new(),
            });
        let mut model = ModelRef {
            provider: self.provider,
            model: self.model.clone(),
            base_url,
            api_key: None,
        };
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            if !key.is_empty() {
                model = model.with_api_key(ApiKey::new(key));
            }
        }
        model
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inbox: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outbox: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_out: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_revisions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing_table: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wait_seconds: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticket_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticket_text: Option<String>,
}

/// Optional per-role prompt overrides for the built-in agents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backstory: Option<String>,
}

/// The whole declarative document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    pub workflow: WorkflowKind,
    /// Default model for every agent role.
    pub model: ModelEntry,
    /// Per-role overrides keyed by role name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub models: BTreeMap<String, ModelEntry>,
    /// Path to a scripted-provider response file; required when any model
    /// uses the mock provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<String>,
    #[serde(default)]
    pub paths: PathsEntry,
    #[serde(default)]
    pub params: ParamsEntry,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub agents: BTreeMap<String, AgentOverride>,
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: WorkflowConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: WorkflowConfig = serde_json::from_str(&text)?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let path = Path::new(relative);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn resolved(&self, field: &str, value: &Option<String>) -> Result<PathBuf, ConfigError> {
        value
            .as_ref()
            .map(|v| self.resolve(v))
            .ok_or_else(|| invalid(field, "required for this workflow"))
    }

    pub fn uses_mock(&self) -> bool {
        self.config.model.provider == Provider::Mock
            || self
                .config
                .models
                .values()
                .any(|m| m.provider == Provider::Mock)
    }

    pub fn mock_script_path(&self) -> Option<PathBuf> {
        self.config.mock_script.as_deref().map(|p| self.resolve(p))
    }

    /// Schema- and filesystem-level validation; graph compilation is the
    /// caller's second gate.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let cfg = &self.config;
        if cfg.model.model.is_empty() {
            return Err(invalid("model.model", "must be non-empty"));
        }
        if self.uses_mock() {
            let script = self
                .mock_script_path()
                .ok_or_else(|| invalid("mock_script", "required when provider is mock"))?;
            if !script.is_file() {
                return Err(invalid(
                    "mock_script",
                    format!("file not found: {}", script.display()),
                ));
            }
        }
        match cfg.workflow {
            WorkflowKind::Email => {
                let inbox = self.resolved("paths.inbox", &cfg.paths.inbox)?;
                if !inbox.is_file() {
                    return Err(invalid(
                        "paths.inbox",
                        format!("file not found: {}", inbox.display()),
                    ));
                }
                self.resolved("paths.outbox", &cfg.paths.outbox)?;
            }
            WorkflowKind::Codegen => {
                if cfg
                    .params
                    .requirement
                    .as_deref()
                    .is_none_or(|r| r.is_empty())
                {
                    return Err(invalid("params.requirement", "required for codegen"));
                }
                if cfg.params.max_revisions == Some(0) {
                    return Err(invalid("params.max_revisions", "must be at least 1"));
                }
            }
            WorkflowKind::Ticket => {
                let index = self.resolved("paths.index", &cfg.paths.index)?;
                if !index.is_file() {
                    return Err(invalid(
                        "paths.index",
                        format!("file not found: {}", index.display()),
                    ));
                }
                self.resolved("paths.decisions", &cfg.paths.decisions)?;
                match &cfg.params.routing_table {
                    None => return Err(invalid("params.routing_table", "required for ticket")),
                    Some(table) if table.is_empty() => {
                        return Err(invalid("params.routing_table", "must be non-empty"));
                    }
                    Some(_) => {}
                }
                if cfg.params.ticket_id.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid("params.ticket_id", "required for ticket"));
                }
                if cfg.params.ticket_text.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid("params.ticket_text", "required for ticket"));
                }
                if cfg.params.k == Some(0) {
                    return Err(invalid("params.k", "must be at least 1"));
                }
            }
        }
        if cfg.params.step_budget == Some(0) {
            return Err(invalid("params.step_budget", "must be at least 1"));
        }
        if cfg.params.checkpoint_every == Some(0) {
            return Err(invalid("params.checkpoint_every", "must be at least 1"));
        }
        Ok(())
    }

    fn model_for(&self, role: &str) -> ModelRef {
        self.config
            .models
            .get(role)
            .unwrap_or(&self.config.model)
            .to_model_ref()
    }

    fn apply_override(&self, mut agent: AgentSpec) -> AgentSpec {
        if let Some(over) = self.config.agents.get(&agent.role) {
            if let Some(goal) = &over.goal {
                agent.goal = goal.clone();
            }
            if let Some(backstory) = &over.backstory {
                agent.backstory = backstory.clone();
            }
        }
        agent
    }

    pub fn email_config(&self) -> Result<EmailConfig, ConfigError> {
        let cfg = &self.config;
        let drafter = self.apply_override(workflows::default_drafter(self.model_for(DRAFTER_ROLE)));
        let mut email = EmailConfig::new(
            self.resolved("paths.inbox", &cfg.paths.inbox)?,
            self.resolved("paths.outbox", &cfg.paths.outbox)?,
            drafter,
        );
        if let Some(wait) = cfg.params.wait_seconds {
            email.wait_ms = wait * 1000;
        }
        Ok(email)
    }

    pub fn codegen_config(&self) -> Result<CodegenConfig, ConfigError> {
        let cfg = &self.config;
        let requirement = cfg
            .params
            .requirement
            .clone()
            .ok_or_else(|| invalid("params.requirement", "required for codegen"))?;
        let generator =
            self.apply_override(workflows::default_generator(self.model_for(GENERATOR_ROLE)));
        let reviewer =
            self.apply_override(workflows::default_reviewer(self.model_for(REVIEWER_ROLE)));
        let mut codegen = CodegenConfig::new(generator, reviewer, requirement);
        if let Some(max) = cfg.params.max_revisions {
            codegen = codegen.with_max_revisions(max);
        }
        Ok(codegen)
    }

    pub fn ticket_config(&self) -> Result<TicketConfig, ConfigError> {
        let cfg = &self.config;
        let routing = cfg
            .params
            .routing_table
            .clone()
            .ok_or_else(|| invalid("params.routing_table", "required for ticket"))?;
        let auditor = self.apply_override(workflows::default_auditor(self.model_for(AUDITOR_ROLE)));
        let embed_model = self.model_for("embedder");
        let mut ticket = TicketConfig::new(
            auditor,
            embed_model,
            self.resolved("paths.decisions", &cfg.paths.decisions)?,
            routing,
        );
        if let Some(k) = cfg.params.k {
            ticket = ticket.with_k(k);
        }
        Ok(ticket)
    }
}
