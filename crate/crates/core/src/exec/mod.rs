//! Plan execution: groups in order, the members of a group on their own
//! threads, with reference resolution between groups, per-sub-task
//! timeouts and tracing.

mod orchestrate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::agent::{Args, Failure, Feedback, IntegratedQuery, Plan, SubTask, TaskRef, ToolHint, UserProfile};
use crate::kgraph::KnowledgeGraph;
use crate::lm::{BackendLabel, LanguageModel, LmRequest};
use crate::tools::{InterestState, ToolError};

pub use orchestrate::{
    cache_eligible, synthesize, DirectCallCache, Observer, OrchestrateError, Orchestrator, OrchestratorConfig, Outcome,
    SessionContext,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("no tool registered for `{0}`")]
    ToolNotRegistered(ToolHint),
    #[error("sufficiency needs at least one result")]
    NoResults,
}

/// Everything a tool may read while it runs.
#[derive(Clone, Debug)]
pub struct ToolContext {
    pub graph: Arc<KnowledgeGraph>,
    pub profile: Arc<UserProfile>,
    pub interest: Arc<InterestState>,
}

impl ToolContext {
    pub fn new(graph: Arc<KnowledgeGraph>, profile: UserProfile, interest: InterestState) -> Self {
        ToolContext {
            graph,
            profile: Arc::new(profile),
            interest: Arc::new(interest),
        }
    }
}

/// A tool returns `Ok(None)` when it ran but found nothing.
pub trait Tool: Send + Sync {
    fn call(&self, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError>;
}

impl<F> Tool for F
where
    F: Fn(&Args, &ToolContext) -> Result<Option<Json>, ToolError> + Send + Sync,
{
    fn call(&self, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
        self(args, ctx)
    }
}

#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<ToolHint, Arc<dyn Tool>>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.tools.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers or replaces the tool for `hint`.
    pub fn register(&mut self, hint: ToolHint, tool: impl Tool + 'static) -> &mut Self {
        self.tools.insert(hint, Arc::new(tool));
        self
    }

    pub fn get(&self, hint: ToolHint) -> Option<&Arc<dyn Tool>> {
        self.tools.get(&hint)
    }

    pub fn check(&self, plan: &Plan) -> Result<(), ExecError> {
        for group in plan.groups() {
            for task in group {
                if !self.tools.contains_key(&task.tool) {
                    return Err(ExecError::ToolNotRegistered(task.tool));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Empty,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub index: (usize, usize),
    pub tool: ToolHint,
    pub status: Status,
    /// Present iff `status` is ok.
    pub payload: Option<Json>,
    pub error: Option<String>,
    pub elapsed_ms: f64,
    #[serde(default)]
    pub cached: bool,
}

impl ToolResult {
    fn from_call(
        index: (usize, usize),
        tool: ToolHint,
        outcome: Result<Option<Json>, ToolError>,
        elapsed_ms: f64,
    ) -> Self {
        let (status, payload, error) = match outcome {
            Ok(Some(p)) if !is_blank(&p) => (Status::Ok, Some(p), None),
            Ok(_) => (Status::Empty, None, None),
            Err(e) => (Status::Error, None, Some(e.to_string())),
        };
        ToolResult {
            index,
            tool,
            status,
            payload,
            error,
            elapsed_ms,
            cached: false,
        }
    }

    pub fn failed(index: (usize, usize), tool: ToolHint, detail: impl Into<String>, elapsed_ms: f64) -> Self {
        ToolResult {
            index,
            tool,
            status: Status::Error,
            payload: None,
            error: Some(detail.into()),
            elapsed_ms,
            cached: false,
        }
    }

    /// An ok result served from a cache.
    pub fn cached(index: (usize, usize), tool: ToolHint, payload: Json) -> Self {
        ToolResult {
            index,
            tool,
            status: Status::Ok,
            payload: Some(payload),
            error: None,
            elapsed_ms: 0.0,
            cached: true,
        }
    }

    /// The `summary` string of an ok payload.
    pub fn summary(&self) -> Option<&str> {
        self.payload.as_ref()?.get("summary")?.as_str()
    }

    /// The value a reference to this result resolves to: the payload's
    /// `key`, or the named field.
    pub fn reference_value(&self, field: Option<&str>) -> Option<String> {
        let payload = self.payload.as_ref().filter(|_| self.status == Status::Ok)?;
        let value = payload.get(field.unwrap_or("key"))?;
        match value {
            Json::String(s) => Some(s.clone()),
            Json::Number(n) => Some(n.to_string()),
            Json::Bool(b) => Some(b.to_string()),
            Json::Array(items) => Some(
                items
                    .iter()
                    .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            _ => None,
        }
    }
}

fn is_blank(v: &Json) -> bool {
    match v {
        Json::Null => true,
        Json::Array(a) => a.is_empty(),
        Json::Object(o) => o.is_empty(),
        Json::String(s) => s.is_empty(),
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtaskTrace {
    pub index: (usize, usize),
    pub tool: ToolHint,
    pub status: Status,
    /// Offsets from the start of the trace.
    pub start_ms: f64,
    pub end_ms: f64,
    pub elapsed_ms: f64,
    pub cached: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupTrace {
    pub subtasks: Vec<SubtaskTrace>,
    pub wall_ms: f64,
}

/// Timing and counters for one orchestrated query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    #[serde(skip)]
    origin: Option<Instant>,
    pub groups: Vec<GroupTrace>,
    pub total_ms: f64,
    pub replans: u32,
    pub classifier_calls: u32,
    pub memory_calls: u32,
    pub planner_calls: u32,
    pub tool_calls: u32,
}

impl Default for ExecutionTrace {
    fn default() -> Self {
        ExecutionTrace::start()
    }
}

impl ExecutionTrace {
    pub fn start() -> Self {
        ExecutionTrace {
            origin: Some(Instant::now()),
            groups: Vec::new(),
            total_ms: 0.0,
            replans: 0,
            classifier_calls: 0,
            memory_calls: 0,
            planner_calls: 0,
            tool_calls: 0,
        }
    }

    fn offset_ms(&self, at: Instant) -> f64 {
        self.origin
            .map_or(0.0, |o| at.saturating_duration_since(o).as_secs_f64() * 1e3)
    }

    pub fn finish(&mut self) {
        if let Some(o) = self.origin {
            self.total_ms = o.elapsed().as_secs_f64() * 1e3;
        }
    }

    /// `{groups:[{subtasks:[{tool,status,elapsed_ms}],wall_ms}], total_ms, replans}`.
    pub fn export(&self) -> Json {
        let groups: Vec<Json> = self
            .groups
            .iter()
            .map(|g| {
                let subtasks: Vec<Json> = g
                    .subtasks
                    .iter()
                    .map(|s| serde_json::json!({"tool": s.tool, "status": s.status, "elapsed_ms": s.elapsed_ms}))
                    .collect();
                serde_json::json!({"subtasks": subtasks, "wall_ms": g.wall_ms})
            })
            .collect();
        serde_json::json!({"groups": groups, "total_ms": self.total_ms, "replans": self.replans})
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Every member of a group is issued before any is awaited.
    Concurrent,
    /// Reference executor: one sub-task at a time, in plan order.
    Sequential,
}

/// Results of one plan run, indexed like the plan.
#[derive(Clone, Debug)]
pub struct Execution {
    pub results: Vec<Vec<ToolResult>>,
    /// The plan with every reference to an ok result substituted.
    pub resolved: Plan,
}

impl Execution {
    pub fn flat(&self) -> Vec<&ToolResult> {
        self.results.iter().flatten().collect()
    }
}

#[derive(Clone, Debug)]
pub struct Executor {
    registry: Arc<ToolRegistry>,
    strategy: Strategy,
    timeout: Duration,
}

impl Executor {
    pub fn new(registry: Arc<ToolRegistry>, strategy: Strategy) -> Self {
        Executor {
            registry,
            strategy,
            timeout: Duration::from_secs(10),
        }
    }

    /// Per-sub-task deadline; late results become errors.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn execute(&self, plan: &Plan, ctx: &ToolContext) -> Result<(Execution, ExecutionTrace), ExecError> {
        let mut trace = ExecutionTrace::start();
        let execution = self.execute_traced(plan, ctx, &mut trace, &mut |_| {})?;
        trace.finish();
        Ok((execution, trace))
    }

    /// Runs `plan`, appending group traces to `trace` and reporting every
    /// result to `on_result` as it lands.
    pub fn execute_traced(
        &self,
        plan: &Plan,
        ctx: &ToolContext,
        trace: &mut ExecutionTrace,
        on_result: &mut dyn FnMut(&ToolResult),
    ) -> Result<Execution, ExecError> {
        self.registry.check(plan)?;
        let mut results: Vec<Vec<ToolResult>> = Vec::with_capacity(plan.groups().len());
        let mut resolved_groups = Vec::with_capacity(plan.groups().len());
        for (g, group) in plan.groups().iter().enumerate() {
            let group_start = Instant::now();
            let mut slots: Vec<Option<ToolResult>> = vec![None; group.len()];
            let mut timings: Vec<Option<(Instant, Instant)>> = vec![None; group.len()];
            let mut runnable = Vec::new();
            let mut resolved_tasks = Vec::with_capacity(group.len());
            for (p, task) in group.iter().enumerate() {
                let (resolved, unresolved) = resolve_args(task, &results);
                resolved_tasks.push(resolved.clone());
                match unresolved {
                    Some(r) => {
                        let res = ToolResult::failed((g, p), task.tool, format!("dependency {r} did not succeed"), 0.0);
                        on_result(&res);
                        timings[p] = Some((group_start, group_start));
                        slots[p] = Some(res);
                    }
                    None => runnable.push((p, resolved)),
                }
            }
            trace.tool_calls += runnable.len() as u32;
            match self.strategy {
                Strategy::Sequential => {
                    for (p, task) in runnable {
                        let tool = self.registry.get(task.tool).expect("checked").clone();
                        let started = Instant::now();
                        let outcome = tool.call(&task.args, ctx);
                        let ended = Instant::now();
                        let res = ToolResult::from_call((g, p), task.tool, outcome, ms(ended - started));
                        on_result(&res);
                        timings[p] = Some((started, ended));
                        slots[p] = Some(res);
                    }
                }
                Strategy::Concurrent => {
                    let (tx, rx) = mpsc::channel();
                    let mut started_at = BTreeMap::new();
                    for (p, task) in runnable {
                        let tool = self.registry.get(task.tool).expect("checked").clone();
                        let ctx = ctx.clone();
                        let tx = tx.clone();
                        let started = Instant::now();
                        started_at.insert(p, (started, task.tool));
                        thread::spawn(move || {
                            let outcome = tool.call(&task.args, &ctx);
                            let ended = Instant::now();
                            let _ = tx.send((p, outcome, ended));
                        });
                    }
                    drop(tx);
                    let deadline = Instant::now() + self.timeout;
                    while !started_at.is_empty() {
                        let wait = deadline.saturating_duration_since(Instant::now());
                        match rx.recv_timeout(wait) {
                            Ok((p, outcome, ended)) => {
                                let (started, tool) = started_at.remove(&p).expect("each member reports once");
                                let res = ToolResult::from_call((g, p), tool, outcome, ms(ended - started));
                                on_result(&res);
                                timings[p] = Some((started, ended));
                                slots[p] = Some(res);
                            }
                            // a panicking tool drops its sender without reporting
                            Err(mpsc::RecvTimeoutError::Disconnected) => break,
                            Err(mpsc::RecvTimeoutError::Timeout) => break,
                        }
                    }
                    let now = Instant::now();
                    for (p, (started, tool)) in started_at {
                        let elapsed = ms(now - started);
                        let detail = if now >= deadline {
                            format!("timed out after {} ms", self.timeout.as_millis())
                        } else {
                            "tool panicked".to_string()
                        };
                        let res = ToolResult::failed((g, p), tool, detail, elapsed);
                        on_result(&res);
                        timings[p] = Some((started, now));
                        slots[p] = Some(res);
                    }
                }
            }
            let group_results: Vec<ToolResult> = slots.into_iter().map(|s| s.expect("every member settled")).collect();
            let subtasks = group_results
                .iter()
                .zip(&timings)
                .map(|(r, t)| {
                    let (s, e) = t.expect("every member timed");
                    SubtaskTrace {
                        index: r.index,
                        tool: r.tool,
                        status: r.status,
                        start_ms: trace.offset_ms(s),
                        end_ms: trace.offset_ms(e),
                        elapsed_ms: r.elapsed_ms,
                        cached: r.cached,
                    }
                })
                .collect();
            trace.groups.push(GroupTrace {
                subtasks,
                wall_ms: ms(group_start.elapsed()),
            });
            results.push(group_results);
            resolved_groups.push(resolved_tasks);
        }
        let resolved = Plan::new(resolved_groups).expect("resolution keeps plan invariants");
        Ok(Execution { results, resolved })
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Substitutes references to ok results. Returns the first reference that
/// could not be resolved, leaving it in place.
fn resolve_args(task: &SubTask, results: &[Vec<ToolResult>]) -> (SubTask, Option<TaskRef>) {
    let mut out = task.clone();
    let mut unresolved = None;
    for value in out.args.values_mut() {
        let Some(r) = TaskRef::parse(value) else { continue };
        let found = results
            .get(r.group)
            .and_then(|g| g.get(r.position))
            .and_then(|res| res.reference_value(r.field.as_deref()));
        match found {
            Some(v) => *value = v,
            None => {
                unresolved.get_or_insert(r);
            }
        }
    }
    (out, unresolved)
}

/// Sufficient iff every result is ok with a non-empty payload. A remote
/// model may additionally veto a sufficient verdict.
pub fn assess_sufficiency(
    results: &[&ToolResult],
    integrated: &IntegratedQuery,
    lm: Option<&LanguageModel>,
) -> Result<Feedback, ExecError> {
    if results.is_empty() {
        return Err(ExecError::NoResults);
    }
    let failing: Vec<Failure> = results
        .iter()
        .filter(|r| r.status != Status::Ok)
        .map(|r| Failure {
            index: r.index,
            reason: match r.status {
                Status::Empty => "empty result".to_string(),
                _ => r.error.clone().unwrap_or_else(|| "error".to_string()),
            },
        })
        .collect();
    if !failing.is_empty() {
        return Ok(Feedback::from_failures(failing));
    }
    let Some(lm) = lm.filter(|m| m.backend_label() == BackendLabel::Remote) else {
        return Ok(Feedback::sufficient());
    };
    let rendered: Vec<String> = results
        .iter()
        .map(|r| format!("[{}.{}] {}", r.index.0, r.index.1, r.summary().unwrap_or("")))
        .collect();
    let request = LmRequest::new(
        "sufficiency",
        [("query", integrated.text.clone()), ("results", rendered.join("\n"))],
    );
    match lm.complete(&request) {
        Ok(resp) if resp.text.lines().next().map(str::trim) == Some("INSUFFICIENT") => Ok(Feedback::from_failures(
            results
                .iter()
                .map(|r| Failure {
                    index: r.index,
                    reason: "model judged the results insufficient".into(),
                })
                .collect(),
        )),
        Ok(_) => Ok(Feedback::sufficient()),
        Err(e) => {
            log::warn!("sufficiency check fell back to the heuristic: {e}");
            Ok(Feedback::sufficient())
        }
    }
}
