use std::sync::Arc;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use super::{
    assess_sufficiency, ExecError, ExecutionTrace, Executor, GroupTrace, Status, Strategy, SubtaskTrace, ToolContext,
    ToolResult,
};
use crate::agent::{
    classify_complexity, decompose, integrate_memory, replan, AgentError, ChatTurn, Complexity, IntegratedQuery, Plan,
    Replan, SubTask, ToolHint, UserProfile, Verdict,
};
use crate::kgraph::KnowledgeGraph;
use crate::lm::LanguageModel;
use crate::tools::InterestState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestrateError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Which parts of the pipeline run. The named constructors are the
/// benchmark variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    /// Classify first and answer simple queries with one direct call.
    pub routing: bool,
    /// Filter history through the memory module; otherwise append it raw.
    pub memory: bool,
    pub strategy: Strategy,
    pub replan_budget: u32,
    pub history_window: usize,
    /// One text-to-query retrieval over the raw query, no planning.
    pub rag_like: bool,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            routing: true,
            memory: true,
            strategy: Strategy::Concurrent,
            replan_budget: 3,
            history_window: 10,
            rag_like: false,
        }
    }
}

impl OrchestratorConfig {
    pub fn adapt() -> Self {
        Self::default()
    }

    /// Every query goes through memory and the planner.
    pub fn plan_execute() -> Self {
        OrchestratorConfig {
            routing: false,
            ..Self::default()
        }
    }

    /// Always plans, raw history, one sub-task at a time.
    pub fn react_like() -> Self {
        OrchestratorConfig {
            routing: false,
            memory: false,
            strategy: Strategy::Sequential,
            ..Self::default()
        }
    }

    pub fn rag_like() -> Self {
        OrchestratorConfig {
            routing: false,
            memory: false,
            rag_like: true,
            replan_budget: 0,
            ..Self::default()
        }
    }

    pub fn no_memory() -> Self {
        OrchestratorConfig {
            memory: false,
            ..Self::default()
        }
    }

    pub fn no_parallel() -> Self {
        OrchestratorConfig {
            strategy: Strategy::Sequential,
            ..Self::default()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "adapt" => Self::adapt(),
            "plan_execute" => Self::plan_execute(),
            "react_like" => Self::react_like(),
            "rag_like" => Self::rag_like(),
            "no_memory" => Self::no_memory(),
            "no_parallel" => Self::no_parallel(),
            _ => return None,
        })
    }
}

/// The conversation state a query is answered in.
#[derive(Clone, Copy, Debug)]
pub struct SessionContext<'a> {
    pub history: &'a [ChatTurn],
    pub profile: &'a UserProfile,
    pub interest: &'a InterestState,
}

/// Stored payloads of direct calls. Implementations derive the key.
pub trait DirectCallCache: Send + Sync {
    fn lookup(&self, profile: &UserProfile, query: &str) -> Option<Json>;
    fn store(&self, profile: &UserProfile, query: &str, payload: &Json);
}

/// Direct calls whose payload depends only on the query and the graph.
pub fn cache_eligible(task: &SubTask) -> bool {
    match task.tool {
        ToolHint::TextToQuery | ToolHint::Compare => true,
        ToolHint::GraphTemplate => task.args.get("template").is_some_and(|t| t != "skill_gap"),
        _ => false,
    }
}

/// Progress callbacks, in pipeline order.
pub trait Observer {
    fn route(&mut self, _complexity: &Complexity) {}
    /// `round` is 0 for the first plan and counts replans after that.
    fn plan(&mut self, _plan: &Plan, _round: u32) {}
    fn tool(&mut self, _result: &ToolResult) {}
}

impl Observer for () {}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub response: String,
    pub degraded: bool,
    pub complexity: Complexity,
    pub integrated: Option<IntegratedQuery>,
    /// The last plan executed, with settled references substituted.
    pub plan: Option<Plan>,
    /// Final result per sub-task of the first plan, replanned ones merged in.
    pub results: Vec<ToolResult>,
    pub trace: ExecutionTrace,
}

#[derive(Clone, Debug)]
pub struct Orchestrator {
    graph: Arc<KnowledgeGraph>,
    lm: LanguageModel,
    executor: Executor,
    config: OrchestratorConfig,
}

impl Orchestrator {
    /// The executor's strategy is overridden by `config.strategy`.
    pub fn new(graph: Arc<KnowledgeGraph>, lm: LanguageModel, executor: Executor, config: OrchestratorConfig) -> Self {
        let executor = Executor {
            strategy: config.strategy,
            ..executor
        };
        Orchestrator {
            graph,
            lm,
            executor,
            config,
        }
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn graph(&self) -> &Arc<KnowledgeGraph> {
        &self.graph
    }

    pub fn lm(&self) -> &LanguageModel {
        &self.lm
    }

    pub fn run(
        &self,
        query: &str,
        session: SessionContext<'_>,
        cache: Option<&dyn DirectCallCache>,
        observer: &mut dyn Observer,
    ) -> Result<Outcome, OrchestrateError> {
        if query.trim().is_empty() {
            return Err(AgentError::EmptyQuery.into());
        }
        let ctx = ToolContext {
            graph: self.graph.clone(),
            profile: Arc::new(session.profile.clone()),
            interest: Arc::new(session.interest.clone()),
        };
        let mut trace = ExecutionTrace::start();
        let window_start = session.history.len().saturating_sub(self.config.history_window);
        let recent = &session.history[window_start..];

        if self.config.rag_like {
            let complexity = Complexity {
                verdict: Verdict::Complex,
                merged_context: query.to_string(),
                call: None,
                fell_back: false,
            };
            observer.route(&complexity);
            let integrated = IntegratedQuery::with_raw_history(query, recent);
            let task = SubTask::new(
                "Retrieve from the knowledge graph",
                ToolHint::TextToQuery,
                [("question", integrated.text.as_str())],
            );
            let plan = Plan::single(task);
            observer.plan(&plan, 0);
            let exec = self
                .executor
                .execute_traced(&plan, &ctx, &mut trace, &mut |r| observer.tool(r))?;
            let results: Vec<ToolResult> = exec.results.into_iter().flatten().collect();
            let degraded = results.iter().all(|r| r.status != Status::Ok);
            trace.finish();
            return Ok(Outcome {
                response: synthesize(&results, degraded),
                degraded,
                complexity,
                integrated: Some(integrated),
                plan: Some(exec.resolved),
                results,
                trace,
            });
        }

        let complexity = if self.config.routing {
            trace.classifier_calls += 1;
            classify_complexity(
                query,
                session.history,
                session.profile,
                &self.lm,
                self.config.history_window,
            )?
        } else {
            Complexity {
                verdict: Verdict::Complex,
                merged_context: query.to_string(),
                call: None,
                fell_back: false,
            }
        };
        observer.route(&complexity);

        if let (Verdict::Simple, Some(task)) = (complexity.verdict, complexity.call.clone()) {
            let result = self.direct_call(task, query, &ctx, cache, &mut trace, observer)?;
            let degraded = result.status != Status::Ok;
            trace.finish();
            let results = vec![result];
            return Ok(Outcome {
                response: synthesize(&results, degraded),
                degraded,
                complexity,
                integrated: None,
                plan: None,
                results,
                trace,
            });
        }

        let integrated = if self.config.memory {
            trace.memory_calls += 1;
            integrate_memory(query, session.history, session.profile, &self.lm)?
        } else {
            IntegratedQuery::with_raw_history(query, recent)
        };
        trace.planner_calls += 1;
        let plan = decompose(&integrated, &self.lm)?;
        observer.plan(&plan, 0);
        let exec = self
            .executor
            .execute_traced(&plan, &ctx, &mut trace, &mut |r| observer.tool(r))?;
        let mut merged = exec.results;
        let mut resolved = exec.resolved;
        let mut degraded = false;
        loop {
            let flat: Vec<&ToolResult> = merged.iter().flatten().collect();
            let feedback = assess_sufficiency(&flat, &integrated, Some(&self.lm))?;
            if feedback.is_sufficient() {
                break;
            }
            let remaining = self.config.replan_budget.saturating_sub(trace.replans);
            let next = if remaining == 0 {
                Ok(Replan::GiveUp)
            } else {
                trace.planner_calls += 1;
                replan(&resolved, &feedback, remaining, &self.lm)
            };
            let (new_plan, origin) = match next {
                Ok(Replan::Plan { plan, origin }) => (plan, origin),
                Ok(Replan::GiveUp) => {
                    degraded = true;
                    break;
                }
                Err(e) => {
                    warn!("replanning failed, answering with what we have: {e}");
                    degraded = true;
                    break;
                }
            };
            trace.replans += 1;
            observer.plan(&new_plan, trace.replans);
            let exec = self
                .executor
                .execute_traced(&new_plan, &ctx, &mut trace, &mut |r| observer.tool(r))?;
            let mut groups: Vec<Vec<SubTask>> = resolved.groups().to_vec();
            for (g, members) in origin.iter().enumerate() {
                for (p, &(og, op)) in members.iter().enumerate() {
                    let mut result = exec.results[g][p].clone();
                    result.index = (og, op);
                    merged[og][op] = result;
                    groups[og][op] = exec.resolved.groups()[g][p].clone();
                }
            }
            resolved = Plan::new(groups).expect("merging keeps plan invariants");
        }
        trace.finish();
        let results: Vec<ToolResult> = merged.into_iter().flatten().collect();
        Ok(Outcome {
            response: synthesize(&results, degraded),
            degraded,
            complexity,
            integrated: Some(integrated),
            plan: Some(resolved),
            results,
            trace,
        })
    }

    fn direct_call(
        &self,
        task: SubTask,
        query: &str,
        ctx: &ToolContext,
        cache: Option<&dyn DirectCallCache>,
        trace: &mut ExecutionTrace,
        observer: &mut dyn Observer,
    ) -> Result<ToolResult, OrchestrateError> {
        let cache = cache.filter(|_| cache_eligible(&task));
        if let Some(payload) = cache.and_then(|c| c.lookup(&ctx.profile, query)) {
            let now = Instant::now();
            let result = ToolResult::cached((0, 0), task.tool, payload);
            let at = trace.offset_ms(now);
            trace.groups.push(GroupTrace {
                subtasks: vec![SubtaskTrace {
                    index: (0, 0),
                    tool: task.tool,
                    status: Status::Ok,
                    start_ms: at,
                    end_ms: at,
                    elapsed_ms: 0.0,
                    cached: true,
                }],
                wall_ms: 0.0,
            });
            observer.tool(&result);
            return Ok(result);
        }
        let plan = Plan::single(task);
        let exec = self
            .executor
            .execute_traced(&plan, ctx, trace, &mut |r| observer.tool(r))?;
        let result = exec.results.into_iter().flatten().next().expect("one sub-task");
        if let (Some(c), Some(payload)) = (cache, result.payload.as_ref()) {
            c.store(&ctx.profile, query, payload);
        }
        Ok(result)
    }
}

/// Deterministic answer text: one line per ok result, in plan order.
pub fn synthesize(results: &[ToolResult], degraded: bool) -> String {
    let lines: Vec<&str> = results.iter().filter_map(ToolResult::summary).collect();
    let body = if lines.is_empty() {
        "Sorry, I could not find that information.".to_string()
    } else {
        lines.join("\n")
    };
    if degraded && !lines.is_empty() {
        format!("Partial answer, some steps did not succeed.\n{body}")
    } else {
        body
    }
}
