use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::exec::OrchestratorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub ttl_s: u64,
    pub enabled: bool,
}

impl Default for CacheSection {
    fn default() -> Self {
        CacheSection {
            ttl_s: 3600,
            enabled: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplanSection {
    pub budget: u32,
}

impl Default for ReplanSection {
    fn default() -> Self {
        ReplanSection { budget: 3 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSection {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    /// Stub only: fixed delay per call.
    pub latency_ms: f64,
    /// Stub only: extra delay per four output characters.
    pub token_latency_ms: f64,
}

impl Default for LmSection {
    fn default() -> Self {
        LmSection {
            backend: BackendKind::Stub,
            endpoint: None,
            timeout_ms: 30_000,
            latency_ms: 0.0,
            token_latency_ms: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsSection {
    pub k: usize,
    pub include_current_title: bool,
    pub timeout_ms: u64,
}

impl Default for ToolsSection {
    fn default() -> Self {
        ToolsSection {
            k: 20,
            include_current_title: true,
            timeout_ms: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    /// One of the named orchestrator variants.
    pub variant: String,
    pub history_window: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            variant: "adapt".into(),
            history_window: 10,
        }
    }
}

/// Service configuration, usually read from TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub cache: CacheSection,
    pub replan: ReplanSection,
    pub lm: LmSection,
    pub tools: ToolsSection,
    pub agent: AgentSection,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if OrchestratorConfig::by_name(&self.agent.variant).is_none() {
            return Err(ServiceError::Config(format!(
                "unknown variant `{}`",
                self.agent.variant
            )));
        }
        if self.tools.k == 0 {
            return Err(ServiceError::Config("tools.k must be positive".into()));
        }
        if self.lm.backend == BackendKind::Remote && self.lm.endpoint.is_none() {
            return Err(ServiceError::Config(
                "lm.endpoint is required for the remote backend".into(),
            ));
        }
        if !(self.lm.latency_ms >= 0.0 && self.lm.token_latency_ms >= 0.0) {
            return Err(ServiceError::Config("stub latencies must be non-negative".into()));
        }
        Ok(())
    }

    pub fn orchestrator(&self) -> OrchestratorConfig {
        let base = OrchestratorConfig::by_name(&self.agent.variant).unwrap_or_default();
        OrchestratorConfig {
            replan_budget: if base.rag_like { 0 } else { self.replan.budget },
            history_window: self.agent.history_window,
            ..base
        }
    }

    pub fn tool_timeout(&self) -> Duration {
        Duration::from_millis(self.tools.timeout_ms)
    }
}
