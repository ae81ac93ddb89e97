//! Complexity routing, memory integration, plan decomposition and
//! replanning. Every step is a prompt round-trip through [`LanguageModel`].

mod plan;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{LanguageModel, LmError, LmRequest};

pub use plan::{parse_plan, Args, Plan, SubTask, TaskRef, ToolHint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Backend(#[from] LmError),
    #[error("planner output could not be parsed: {0}")]
    PlanParse(String),
    #[error("invalid plan: {0}")]
    PlanInvalid(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    pub timestamp_ms: u64,
}

impl ChatTurn {
    pub fn user(text: impl Into<String>, timestamp_ms: u64) -> Self {
        ChatTurn {
            role: Role::User,
            text: text.into(),
            timestamp_ms,
        }
    }

    pub fn assistant(text: impl Into<String>, timestamp_ms: u64) -> Self {
        ChatTurn {
            role: Role::Assistant,
            text: text.into(),
            timestamp_ms,
        }
    }
}

/// `[i] role: text` lines, numbered from `offset`.
pub fn format_history(turns: &[ChatTurn], offset: usize) -> String {
    turns
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let role = match t.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            format!("[{}] {role}: {}", offset + i, t.text.replace('\n', " "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    /// Node id of the current job title.
    pub current_title: String,
    #[serde(default)]
    pub skills: BTreeSet<String>,
    #[serde(default)]
    pub location: String,
    /// 0 (none) to 4 (doctorate).
    #[serde(default)]
    pub education: i64,
    #[serde(default)]
    pub interests: Vec<String>,
}

impl UserProfile {
    /// One-line rendering used in prompts.
    pub fn describe(&self) -> String {
        format!(
            "user={}; title={}; skills={}; location={}; education={}; interests={}",
            self.user_id,
            self.current_title,
            self.skills.iter().cloned().collect::<Vec<_>>().join(", "),
            self.location,
            self.education,
            self.interests.join(", "),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Simple,
    Complex,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Simple => "simple",
            Verdict::Complex => "complex",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Complexity {
    pub verdict: Verdict,
    /// Recent history followed by the query, for the direct path.
    pub merged_context: String,
    /// The direct tool call proposed alongside a `SIMPLE` verdict.
    pub call: Option<SubTask>,
    /// True when the verdict could not be parsed and defaulted to complex.
    pub fell_back: bool,
}

#[derive(Deserialize)]
struct DirectCall {
    tool: String,
    #[serde(default)]
    args: Args,
}

fn parse_verdict(text: &str, query: &str) -> Option<(Verdict, Option<SubTask>)> {
    let mut lines = text.lines();
    match lines.next()?.trim() {
        "COMPLEX" => Some((Verdict::Complex, None)),
        "SIMPLE" => {
            let call: DirectCall = serde_json::from_str(lines.next()?.trim()).ok()?;
            let tool: ToolHint = call.tool.parse().ok()?;
            let task = SubTask {
                description: query.to_string(),
                tool,
                args: call.args,
            };
            Some((Verdict::Simple, Some(task)))
        }
        _ => None,
    }
}

/// Routes a query. `window` bounds the history turns merged for the direct
/// path. An unparseable verdict is retried once, then treated as complex.
pub fn classify_complexity(
    query: &str,
    history: &[ChatTurn],
    profile: &UserProfile,
    lm: &LanguageModel,
    window: usize,
) -> Result<Complexity> {
    if query.trim().is_empty() {
        return Err(AgentError::EmptyQuery);
    }
    let start = history.len().saturating_sub(window);
    let recent = format_history(&history[start..], start);
    let request = LmRequest::new(
        "classify",
        [
            ("profile", profile.describe()),
            ("history", recent.clone()),
            ("query", query.to_string()),
        ],
    );
    let merged_context = if recent.is_empty() {
        query.to_string()
    } else {
        format!("{recent}\n{query}")
    };
    for attempt in 0..2 {
        let text = lm.complete(&request)?.text;
        if let Some((verdict, call)) = parse_verdict(&text, query) {
            return Ok(Complexity {
                verdict,
                merged_context,
                call,
                fell_back: false,
            });
        }
        warn!("unparseable classifier verdict (attempt {}): {text:?}", attempt + 1);
    }
    Ok(Complexity {
        verdict: Verdict::Complex,
        merged_context,
        call: None,
        fell_back: true,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratedQuery {
    pub text: String,
    pub source_turn_indices: Vec<usize>,
    pub original_query: String,
}

impl IntegratedQuery {
    /// The query with nothing merged.
    pub fn passthrough(query: &str) -> Self {
        IntegratedQuery {
            text: query.to_string(),
            source_turn_indices: Vec::new(),
            original_query: query.to_string(),
        }
    }

    /// The query with the whole history appended verbatim.
    pub fn with_raw_history(query: &str, history: &[ChatTurn]) -> Self {
        if history.is_empty() {
            return Self::passthrough(query);
        }
        let raw: Vec<&str> = history.iter().map(|t| t.text.as_str()).collect();
        IntegratedQuery {
            text: format!("{query} [Context: {}]", raw.join(" | ")),
            source_turn_indices: (0..history.len()).collect(),
            original_query: query.to_string(),
        }
    }
}

fn parse_memory(text: &str, query: &str, history_len: usize) -> Option<IntegratedQuery> {
    let mut merged = None;
    let mut indices = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("Integrated User Query:") {
            merged = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("Relevant Turns:") {
            let parsed: Option<BTreeSet<usize>> = rest
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().ok())
                .collect();
            indices = Some(parsed?);
        }
    }
    let merged = merged.filter(|m| !m.is_empty())?;
    let indices: Vec<usize> = indices.unwrap_or_default().into_iter().collect();
    if indices.iter().any(|&i| i >= history_len) {
        return None;
    }
    if indices.is_empty() {
        return Some(IntegratedQuery::passthrough(query));
    }
    Some(IntegratedQuery {
        text: merged,
        source_turn_indices: indices,
        original_query: query.to_string(),
    })
}

/// Merges the query with the history turns the model judges relevant.
/// Malformed model output degrades to the bare query.
pub fn integrate_memory(
    query: &str,
    history: &[ChatTurn],
    profile: &UserProfile,
    lm: &LanguageModel,
) -> Result<IntegratedQuery> {
    if query.trim().is_empty() {
        return Err(AgentError::EmptyQuery);
    }
    let request = LmRequest::new(
        "memory",
        [
            ("profile", profile.describe()),
            ("history", format_history(history, 0)),
            ("query", query.to_string()),
        ],
    );
    let text = lm.complete(&request)?.text;
    Ok(parse_memory(&text, query, history.len()).unwrap_or_else(|| {
        warn!("unusable memory output, using the bare query: {text:?}");
        IntegratedQuery::passthrough(query)
    }))
}

/// Asks the planner for a nested plan; one retry on unusable output.
pub fn decompose(integrated: &IntegratedQuery, lm: &LanguageModel) -> Result<Plan> {
    if integrated.text.trim().is_empty() {
        return Err(AgentError::EmptyQuery);
    }
    let request = LmRequest::new("plan", [("query", integrated.text.clone())]);
    retry_once(|| parse_plan(&lm.complete(&request)?.text))
}

fn retry_once<T>(mut f: impl FnMut() -> Result<T>) -> Result<T> {
    match f() {
        Err(AgentError::PlanParse(e) | AgentError::PlanInvalid(e)) => {
            warn!("retrying planner after: {e}");
            f()
        }
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sufficiency {
    Sufficient,
    Insufficient,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub index: (usize, usize),
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub verdict: Sufficiency,
    pub failing: Vec<Failure>,
}

impl Feedback {
    pub fn sufficient() -> Self {
        Feedback {
            verdict: Sufficiency::Sufficient,
            failing: Vec::new(),
        }
    }

    /// Insufficient feedback; an empty failing list yields sufficient.
    pub fn from_failures(failing: Vec<Failure>) -> Self {
        if failing.is_empty() {
            return Self::sufficient();
        }
        Feedback {
            verdict: Sufficiency::Insufficient,
            failing,
        }
    }

    pub fn is_sufficient(&self) -> bool {
        self.verdict == Sufficiency::Sufficient
    }

    fn render(&self) -> String {
        self.failing
            .iter()
            .map(|f| format!("[{}.{}] {}", f.index.0, f.index.1, f.reason))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Per replacement group, the `(group, position)` each member replaces.
pub type Origin = Vec<Vec<(usize, usize)>>;

#[derive(Clone, Debug, PartialEq)]
pub enum Replan {
    /// Replacement sub-tasks with, per position, the index they replace in
    /// the previous plan.
    Plan {
        plan: Plan,
        origin: Origin,
    },
    GiveUp,
}

/// The failing sub-tasks of `previous`, regrouped in order. References
/// between failing sub-tasks are renumbered; any other reference must
/// already have been resolved by the executor.
fn failed_subplan(previous: &Plan, failing: &BTreeSet<(usize, usize)>) -> Result<(Plan, Origin)> {
    let mut origin: Origin = Vec::new();
    let mut renumber = BTreeMap::new();
    for (g, group) in previous.groups().iter().enumerate() {
        let kept: Vec<(usize, usize)> = (0..group.len())
            .map(|p| (g, p))
            .filter(|i| failing.contains(i))
            .collect();
        if kept.is_empty() {
            continue;
        }
        for (p, &old) in kept.iter().enumerate() {
            renumber.insert(old, (origin.len(), p));
        }
        origin.push(kept);
    }
    let mut groups = Vec::with_capacity(origin.len());
    for members in &origin {
        let mut tasks = Vec::with_capacity(members.len());
        for &old in members {
            let mut task = previous.task(old).expect("index from plan").clone();
            for value in task.args.values_mut() {
                if let Some(r) = TaskRef::parse(value) {
                    let &(g, p) = renumber.get(&r.index()).ok_or_else(|| {
                        AgentError::Contract(format!("sub-task {}.{} still references settled {r}", old.0, old.1))
                    })?;
                    *value = TaskRef {
                        group: g,
                        position: p,
                        field: r.field,
                    }
                    .to_string();
                }
            }
            tasks.push(task);
        }
        groups.push(tasks);
    }
    Ok((Plan::new(groups)?, origin))
}

/// Asks the planner to rewrite the failing sub-tasks of `previous` (whose
/// settled references are already resolved). The rewrite must keep the
/// shape of the failed sub-plan so results can be merged back by index.
pub fn replan(previous: &Plan, feedback: &Feedback, budget_remaining: u32, lm: &LanguageModel) -> Result<Replan> {
    if feedback.is_sufficient() || feedback.failing.is_empty() {
        return Err(AgentError::Contract(
            "replan requires at least one failing sub-task".into(),
        ));
    }
    if budget_remaining == 0 {
        return Ok(Replan::GiveUp);
    }
    let failing: BTreeSet<(usize, usize)> = feedback.failing.iter().map(|f| f.index).collect();
    if let Some(bad) = failing.iter().find(|i| previous.task(**i).is_none()) {
        return Err(AgentError::Contract(format!(
            "feedback names missing sub-task {}.{}",
            bad.0, bad.1
        )));
    }
    let (subplan, origin) = failed_subplan(previous, &failing)?;
    let request = LmRequest::new(
        "replan",
        [("failed_plan", subplan.to_wire()), ("feedback", feedback.render())],
    );
    let shape: Vec<usize> = origin.iter().map(Vec::len).collect();
    let plan = retry_once(|| {
        let plan = parse_plan(&lm.complete(&request)?.text)?;
        let got: Vec<usize> = plan.groups().iter().map(Vec::len).collect();
        if got != shape {
            return Err(AgentError::PlanInvalid(format!(
                "replan shape {got:?} differs from failed sub-plan {shape:?}"
            )));
        }
        Ok(plan)
    })?;
    Ok(Replan::Plan { plan, origin })
}
