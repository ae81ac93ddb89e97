//! Session-oriented chat service: profile lookup, history persistence,
//! cached direct calls, orchestration and an ordered response event stream.

mod bus;
mod cache;
mod config;
mod store;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::agent::{AgentError, ChatTurn, Complexity, Plan, UserProfile};
use crate::exec::{
    DirectCallCache, Executor, Observer, OrchestrateError, Orchestrator, SessionContext, Strategy, ToolResult,
};
use crate::kgraph::{GraphError, KnowledgeGraph, Label};
use crate::lm::{LanguageModel, RemoteBackend, StubBackend};
use crate::tools::{builtin_registry, InteractionKind, InterestState, ToolSettings};

pub use bus::{responses_topic, InProcessBus, MessageBus, REQUESTS_TOPIC};
pub use cache::{cache_key, CacheEntry, Clock, ManualClock, ResponseCache, SystemClock};
pub use config::{AgentSection, BackendKind, CacheSection, LmSection, ReplanSection, ServiceConfig, ToolsSection};
pub use store::{ConversationStore, FileProfiles, FileStore, InMemoryProfiles, InMemoryStore, ProfileClient};

/// Version stamped on every response event.
pub const EVENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("no profile for user `{0}`")]
    ProfileNotFound(String),
    #[error("profile service unavailable: {0}")]
    ProfileUnavailable(String),
    #[error("conversation store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("no session `{0}`")]
    SessionNotFound(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("opening `{0}` has no job family")]
    NoFamily(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub user_id: String,
    pub profile: UserProfile,
    pub turns: Vec<ChatTurn>,
    pub interest: InterestState,
    pub created_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Route,
    PlanTrace,
    TokenChunk,
    ToolTrace,
    Final,
    Error,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::Final | EventKind::Error)
    }
}

/// One frame of a message's response stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseEvent {
    pub v: u32,
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub payload: Json,
}

/// Shared collaborators of a [`Service`].
#[derive(Clone)]
pub struct ServiceDeps {
    pub graph: Arc<KnowledgeGraph>,
    pub settings: ToolSettings,
    pub profiles: Arc<dyn ProfileClient>,
    pub store: Arc<dyn ConversationStore>,
    pub clock: Arc<dyn Clock>,
    pub bus: Arc<dyn MessageBus>,
}

pub struct Service {
    graph: Arc<KnowledgeGraph>,
    orchestrator: Orchestrator,
    config: ServiceConfig,
    profiles: Arc<dyn ProfileClient>,
    store: Arc<dyn ConversationStore>,
    clock: Arc<dyn Clock>,
    bus: Arc<dyn MessageBus>,
    cache: Arc<ResponseCache>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    next_session: AtomicU64,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service")
            .field("config", &self.config)
            .field("sessions", &self.sessions.read().map(|s| s.len()).unwrap_or(0))
            .finish()
    }
}

impl Service {
    /// Builds the language model named by `config.lm`.
    pub fn new(deps: ServiceDeps, config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let lm = match config.lm.backend {
            BackendKind::Stub => {
                let stub = StubBackend::for_graph(&deps.graph)
                    .with_latency(Duration::from_secs_f64(config.lm.latency_ms / 1e3))
                    .with_token_latency(Duration::from_secs_f64(config.lm.token_latency_ms / 1e3));
                LanguageModel::with_backend(Arc::new(stub))
            }
            BackendKind::Remote => {
                let endpoint = config.lm.endpoint.clone().unwrap_or_default();
                let remote = RemoteBackend::new(endpoint, Duration::from_millis(config.lm.timeout_ms));
                LanguageModel::with_backend(Arc::new(remote))
            }
        };
        Self::with_lm(deps, config, lm)
    }

    pub fn with_lm(deps: ServiceDeps, config: ServiceConfig, lm: LanguageModel) -> Result<Self, ServiceError> {
        config.validate()?;
        let mut settings = deps.settings;
        settings.recommend.k = config.tools.k;
        settings.recommend.include_current_title = config.tools.include_current_title;
        let registry = builtin_registry(settings, lm.clone());
        let executor = Executor::new(Arc::new(registry), Strategy::Concurrent).with_timeout(config.tool_timeout());
        let orchestrator = Orchestrator::new(deps.graph.clone(), lm, executor, config.orchestrator());
        let cache = Arc::new(ResponseCache::new(
            config.cache.ttl_s.saturating_mul(1000),
            deps.clock.clone(),
        ));
        Ok(Service {
            graph: deps.graph,
            orchestrator,
            config,
            profiles: deps.profiles,
            store: deps.store,
            clock: deps.clock,
            bus: deps.bus,
            cache,
            sessions: RwLock::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn graph(&self) -> &Arc<KnowledgeGraph> {
        &self.graph
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    /// Starts a session seeded with the user's profile and persisted history.
    pub fn open_session(&self, user: &str) -> Result<SessionState, ServiceError> {
        let profile = self.profiles.fetch(user)?;
        let turns = self.store.load(user)?;
        let n = self.next_session.fetch_add(1, Ordering::Relaxed);
        let state = SessionState {
            session_id: format!("s-{n:06}"),
            user_id: user.to_string(),
            profile,
            turns,
            interest: InterestState::default(),
            created_ms: self.clock.now_ms(),
        };
        self.sessions
            .write()
            .expect("session table lock")
            .insert(state.session_id.clone(), Arc::new(Mutex::new(state.clone())));
        Ok(state)
    }

    pub fn close_session(&self, session_id: &str) -> bool {
        self.sessions
            .write()
            .expect("session table lock")
            .remove(session_id)
            .is_some()
    }

    /// Snapshot of a session.
    pub fn session(&self, session_id: &str) -> Option<SessionState> {
        self.slot(session_id)
            .ok()
            .map(|s| s.lock().expect("session lock").clone())
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Mutex<SessionState>>, ServiceError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(session_id.to_string()))
    }

    /// [`Service::handle_message`] without a live sink.
    pub fn post_message(&self, session_id: &str, text: &str) -> Result<Vec<ResponseEvent>, ServiceError> {
        self.handle_message(session_id, text, &mut |_| {})
    }

    /// Answers one message. Every event is passed to `sink` as it is
    /// produced, published on the session's response topic and returned in
    /// order. Messages within one session are serialized.
    pub fn handle_message(
        &self,
        session_id: &str,
        text: &str,
        sink: &mut dyn FnMut(&ResponseEvent),
    ) -> Result<Vec<ResponseEvent>, ServiceError> {
        let slot = self.slot(session_id)?;
        let mut session = slot.lock().expect("session lock");
        self.bus
            .publish(REQUESTS_TOPIC, &json!({"session": session_id, "text": text}));
        let topic = responses_topic(session_id);
        let mut out = Emitter {
            topic: &topic,
            bus: self.bus.as_ref(),
            sink,
            events: Vec::new(),
        };
        let started_ms = self.clock.now_ms();
        let started = Instant::now();

        let context = SessionContext {
            history: &session.turns,
            profile: &session.profile,
            interest: &session.interest,
        };
        let cache = self
            .config
            .cache
            .enabled
            .then_some(self.cache.as_ref() as &dyn DirectCallCache);
        let outcome = self.orchestrator.run(text, context, cache, &mut out);
        match outcome {
            Ok(outcome) => {
                for chunk in outcome.response.split_inclusive(' ') {
                    out.emit(EventKind::TokenChunk, json!({ "text": chunk }));
                }
                let turns = [
                    ChatTurn::user(text, started_ms),
                    ChatTurn::assistant(outcome.response.clone(), self.clock.now_ms().max(started_ms)),
                ];
                if let Err(e) = self.store.append(&session.user_id, &turns) {
                    warn!("could not persist turns for {}: {e}", session.user_id);
                }
                session.turns.extend(turns);
                out.emit(
                    EventKind::Final,
                    json!({
                        "text": outcome.response,
                        "degraded": outcome.degraded,
                        "replans": outcome.trace.replans,
                        "elapsed_ms": started.elapsed().as_secs_f64() * 1e3,
                        "trace": outcome.trace.export(),
                    }),
                );
            }
            Err(e) => {
                let kind = match &e {
                    OrchestrateError::Agent(AgentError::EmptyQuery) => "empty_query",
                    OrchestrateError::Agent(_) => "agent",
                    OrchestrateError::Exec(_) => "execution",
                };
                out.emit(EventKind::Error, json!({"kind": kind, "message": e.to_string()}));
            }
        }
        Ok(out.events)
    }

    /// Counts an interaction against the opening's job family. The change is
    /// visible from the session's next message.
    pub fn record_interaction(
        &self,
        session_id: &str,
        opening: &str,
        kind: InteractionKind,
    ) -> Result<InterestState, ServiceError> {
        let node = self
            .graph
            .node(opening)
            .ok_or_else(|| GraphError::NodeNotFound(opening.to_string()))?;
        if node.label != Label::Opening {
            return Err(GraphError::WrongLabel {
                id: node.id.clone(),
                expected: Label::Opening,
                found: node.label,
            }
            .into());
        }
        let family = self
            .graph
            .family_of(opening)
            .ok_or_else(|| ServiceError::NoFamily(opening.to_string()))?;
        let slot = self.slot(session_id)?;
        let mut session = slot.lock().expect("session lock");
        session.interest.record(&family, kind);
        Ok(session.interest.clone())
    }
}

struct Emitter<'a> {
    topic: &'a str,
    bus: &'a dyn MessageBus,
    sink: &'a mut dyn FnMut(&ResponseEvent),
    events: Vec<ResponseEvent>,
}

impl Emitter<'_> {
    fn emit(&mut self, kind: EventKind, payload: Json) {
        let event = ResponseEvent {
            v: EVENT_SCHEMA_VERSION,
            seq: self.events.len() as u64,
            kind,
            payload,
        };
        self.bus
            .publish(self.topic, &serde_json::to_value(&event).expect("events serialize"));
        (self.sink)(&event);
        self.events.push(event);
    }
}

fn plan_json(plan: &Plan) -> Json {
    let groups: Vec<Vec<Json>> = plan
        .groups()
        .iter()
        .map(|g| {
            g.iter()
                .map(|t| json!({"description": t.description, "tool": t.tool, "args": t.args}))
                .collect()
        })
        .collect();
    json!(groups)
}

impl Observer for Emitter<'_> {
    fn route(&mut self, complexity: &Complexity) {
        self.emit(
            EventKind::Route,
            json!({
                "verdict": complexity.verdict,
                "fell_back": complexity.fell_back,
                "tool": complexity.call.as_ref().map(|c| c.tool),
            }),
        );
    }

    fn plan(&mut self, plan: &Plan, round: u32) {
        self.emit(EventKind::PlanTrace, json!({"round": round, "groups": plan_json(plan)}));
    }

    fn tool(&mut self, result: &ToolResult) {
        self.emit(
            EventKind::ToolTrace,
            serde_json::to_value(result).expect("results serialize"),
        );
    }
}

/// Checks the per-message stream contract: strictly increasing sequence
/// numbers, a route event first unless the stream is a lone error, and
/// exactly one terminal event, last.
pub fn check_event_order(events: &[ResponseEvent]) -> Result<(), String> {
    if events.is_empty() {
        return Err("no events".into());
    }
    if events.windows(2).any(|w| w[1].seq <= w[0].seq) {
        return Err("sequence numbers not strictly increasing".into());
    }
    let lone_error = events.len() == 1 && events[0].kind == EventKind::Error;
    if !lone_error && events[0].kind != EventKind::Route {
        return Err(format!("first event is {:?}", events[0].kind));
    }
    let terminals = events.iter().filter(|e| e.kind.is_terminal()).count();
    if terminals != 1 {
        return Err(format!("{terminals} terminal events"));
    }
    if !events.last().is_some_and(|e| e.kind.is_terminal()) {
        return Err("terminal event is not last".into());
    }
    if events.iter().any(|e| e.v != EVENT_SCHEMA_VERSION) {
        return Err("wrong schema version".into());
    }
    Ok(())
}
