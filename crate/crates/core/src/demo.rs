//! A small hand-built world bundled with the crate: sixteen titles across
//! retail, merchandising, technology, design and eCommerce, their openings,
//! skills, mentors, four user profiles and an application fixture.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;

use crate::agent::{UserProfile, Verdict};
use crate::exec::{Executor, Orchestrator, OrchestratorConfig, Strategy, ToolRegistry};
use crate::kgraph::KnowledgeGraph;
use crate::lm::{LanguageModel, StubBackend};
use crate::service::{
    Clock, ConversationStore, InMemoryProfiles, InProcessBus, Service, ServiceConfig, ServiceDeps, ServiceError,
};
use crate::tools::{builtin_registry, ApplicationStore, ToolSettings};

pub const GRAPH: &str = include_str!("../data/demo/graph.jsonl");
pub const PROFILES: &str = include_str!("../data/demo/profiles.json");
pub const APPLICATIONS: &str = include_str!("../data/demo/applications.json");
pub const ROUTING_SET: &str = include_str!("../data/demo/routing_set.json");

/// A query with its expected route.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct LabeledQuery {
    pub query: String,
    pub label: Verdict,
}

/// The forty-query labeled routing set, half simple and half complex.
pub fn routing_set() -> Vec<LabeledQuery> {
    serde_json::from_str(ROUTING_SET).expect("bundled routing set parses")
}

#[derive(Clone, Debug)]
pub struct DemoWorld {
    pub graph: Arc<KnowledgeGraph>,
    pub profiles: BTreeMap<String, UserProfile>,
    pub applications: Arc<ApplicationStore>,
}

impl Default for DemoWorld {
    fn default() -> Self {
        Self::load()
    }
}

impl DemoWorld {
    pub fn load() -> Self {
        let graph = KnowledgeGraph::load_jsonl(GRAPH.as_bytes()).expect("bundled graph loads");
        let profiles: Vec<UserProfile> = serde_json::from_str(PROFILES).expect("bundled profiles parse");
        DemoWorld {
            graph: Arc::new(graph),
            profiles: profiles.into_iter().map(|p| (p.user_id.clone(), p)).collect(),
            applications: Arc::new(ApplicationStore::from_json(APPLICATIONS).expect("bundled applications parse")),
        }
    }

    /// # Panics
    /// If `user` is not one of the bundled profiles.
    pub fn profile(&self, user: &str) -> &UserProfile {
        &self.profiles[user]
    }

    /// Stub model over the bundled rules with this world's lexicon.
    pub fn stub_lm(&self) -> LanguageModel {
        LanguageModel::with_backend(Arc::new(StubBackend::for_graph(&self.graph)))
    }

    pub fn settings(&self) -> ToolSettings {
        ToolSettings {
            applications: self.applications.clone(),
            ..ToolSettings::default()
        }
    }

    pub fn registry(&self, lm: &LanguageModel) -> ToolRegistry {
        builtin_registry(self.settings(), lm.clone())
    }

    pub fn orchestrator(&self, lm: LanguageModel, config: OrchestratorConfig) -> Orchestrator {
        let executor = Executor::new(Arc::new(self.registry(&lm)), Strategy::Concurrent);
        Orchestrator::new(self.graph.clone(), lm, executor, config)
    }

    pub fn service_deps(&self, clock: Arc<dyn Clock>, store: Arc<dyn ConversationStore>) -> ServiceDeps {
        ServiceDeps {
            graph: self.graph.clone(),
            settings: self.settings(),
            profiles: Arc::new(InMemoryProfiles::new(self.profiles.values().cloned())),
            store,
            clock,
            bus: Arc::new(InProcessBus::new()),
        }
    }

    pub fn service(
        &self,
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
        store: Arc<dyn ConversationStore>,
    ) -> Result<Service, ServiceError> {
        Service::new(self.service_deps(clock, store), config)
    }
}
