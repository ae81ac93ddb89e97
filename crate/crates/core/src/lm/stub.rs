//! Deterministic rule-table backend used for offline runs and tests.
//!
//! A rule fires when any of its phrases occurs in the normalized live input;
//! the first firing rule for the prompt's task wins. Rule outputs may contain
//! `{{name}}` or `{{name|json}}` directives, expanded from request bindings,
//! entities recognized in the query, or one of the procedural directives
//! (`relevant_history`, `widened_plan`, `failed_plan`).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::text::{content_tokens, find_phrase, normalize};
use super::{Backend, BackendLabel, LmError, LmRequest, Rendered, Result, TaskTag};
use crate::kgraph::{KnowledgeGraph, Label};

/// The bundled rule table (versioned data file).
pub const DEFAULT_RULES: &str = include_str!("../../data/stub_rules.v1.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StubRule {
    pub task: TaskTag,
    /// Phrases matched case-insensitively on word boundaries. Empty = catch-all.
    #[serde(default)]
    pub any_of: Vec<String>,
    pub output: String,
}

impl StubRule {
    fn matches(&self, normalized_input: &str) -> bool {
        self.any_of.is_empty()
            || self
                .any_of
                .iter()
                .any(|p| find_phrase(normalized_input, &normalize(p)).is_some())
    }
}

#[derive(Clone, Debug)]
pub struct StubRuleTable {
    rules: Vec<StubRule>,
}

impl StubRuleTable {
    /// Rejects tables where any task's last rule is not a catch-all.
    pub fn new(rules: Vec<StubRule>) -> Result<Self> {
        for task in TaskTag::ALL {
            match rules.iter().rev().find(|r| r.task == task) {
                Some(r) if r.any_of.is_empty() => {}
                Some(_) => {
                    return Err(LmError::RuleTableInvalid(format!(
                        "last rule for `{task}` is not a catch-all"
                    )))
                }
                None => return Err(LmError::RuleTableInvalid(format!("no catch-all rule for `{task}`"))),
            }
        }
        Ok(StubRuleTable { rules })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rules: Vec<StubRule> = serde_json::from_str(text).map_err(|e| LmError::RuleTableInvalid(e.to_string()))?;
        Self::new(rules)
    }

    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_RULES).expect("bundled rule table is valid")
    }

    pub fn rules(&self) -> &[StubRule] {
        &self.rules
    }

    pub fn first_match(&self, task: TaskTag, normalized_input: &str) -> &StubRule {
        self.rules
            .iter()
            .filter(|r| r.task == task)
            .find(|r| r.matches(normalized_input))
            .expect("validated tables end every task with a catch-all")
    }
}

/// Entity phrases the stub recognizes, each mapped to a canonical value.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    titles: Vec<(String, String)>,
    cities: Vec<(String, String)>,
    skills: Vec<(String, String)>,
    title_names: BTreeMap<String, String>,
    title_skills: BTreeMap<String, BTreeSet<String>>,
}

impl Lexicon {
    /// Titles (name and aliases → node id), opening cities and skill names.
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let mut lex = Lexicon::default();
        for t in graph.nodes_with_label(Label::JobTitle) {
            lex.add_title(t.display_name(), t.id.as_str());
            lex.title_names.insert(t.id.to_string(), t.display_name().to_string());
            for alias in t.str_prop("aliases").unwrap_or("").split('|') {
                lex.add_title(alias, t.id.as_str());
            }
            lex.title_skills
                .insert(t.id.to_string(), graph.required_skills(t.id.as_str()));
        }
        let cities: BTreeSet<&str> = graph
            .nodes_with_label(Label::Opening)
            .filter_map(|o| o.str_prop("city"))
            .collect();
        for c in cities {
            lex.add_city(c);
        }
        for s in graph.nodes_with_label(Label::Skill) {
            lex.add_skill(s.display_name());
        }
        lex
    }

    pub fn add_title(&mut self, phrase: &str, canonical: &str) {
        let p = normalize(phrase);
        if !p.is_empty() {
            self.titles.push((p, canonical.to_string()));
        }
    }

    /// Skills a title expands to when matching entities.
    pub fn set_title_skills(&mut self, canonical: &str, skills: impl IntoIterator<Item = String>) {
        self.title_skills
            .insert(canonical.to_string(), skills.into_iter().collect());
    }

    pub fn add_skill(&mut self, name: &str) {
        let p = normalize(name);
        if !p.is_empty() {
            self.skills.push((p, crate::kgraph::skill_key(name)));
        }
    }

    pub fn add_city(&mut self, city: &str) {
        let p = normalize(city);
        if !p.is_empty() {
            self.cities.push((p, city.to_string()));
        }
    }

    /// Display name of a canonical title; falls back to the id itself.
    pub fn title_name(&self, canonical: &str) -> String {
        self.title_names
            .get(canonical)
            .cloned()
            .unwrap_or_else(|| canonical.to_string())
    }

    pub fn titles_in(&self, text: &str) -> Vec<String> {
        find_all(&self.titles, &normalize(text))
    }

    pub fn cities_in(&self, text: &str) -> Vec<String> {
        find_all(&self.cities, &normalize(text))
    }

    pub fn skills_in(&self, text: &str) -> Vec<String> {
        find_all(&self.skills, &normalize(text))
    }

    /// Typed entity set of a text. Titles expand to the skills they require.
    pub fn entities_in(&self, text: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for t in self.titles_in(text) {
            if let Some(skills) = self.title_skills.get(&t) {
                out.extend(skills.iter().map(|s| format!("skill:{s}")));
            }
            out.insert(format!("title:{t}"));
        }
        out.extend(
            self.cities_in(text)
                .into_iter()
                .map(|c| format!("city:{}", c.to_lowercase())),
        );
        out.extend(self.skills_in(text).into_iter().map(|s| format!("skill:{s}")));
        out
    }
}

/// Canonical values found in `text`, ordered by first appearance. At a given
/// position the longest phrase wins and overlapping shorter matches are
/// dropped.
fn find_all(entries: &[(String, String)], text: &str) -> Vec<String> {
    let mut hits: Vec<(usize, usize, &str)> = Vec::new();
    for (phrase, canonical) in entries {
        let mut from = 0;
        while from <= text.len() {
            let Some(pos) = find_phrase(&text[from..], phrase) else {
                break;
            };
            let at = from + pos;
            hits.push((at, phrase.len(), canonical));
            from = at + phrase.len().max(1);
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out: Vec<String> = Vec::new();
    let mut covered_to = 0;
    for (at, len, canonical) in hits {
        if at < covered_to {
            continue;
        }
        covered_to = at + len;
        if !out.iter().any(|c| c == canonical) {
            out.push(canonical.to_string());
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct StubBackend {
    rules: Arc<StubRuleTable>,
    lexicon: Arc<Lexicon>,
    latency: Duration,
    per_token: Duration,
}

impl StubBackend {
    pub fn new(rules: StubRuleTable, lexicon: Lexicon) -> Self {
        StubBackend {
            rules: Arc::new(rules),
            lexicon: Arc::new(lexicon),
            latency: Duration::ZERO,
            per_token: Duration::ZERO,
        }
    }

    /// Bundled rules with a lexicon taken from `graph`.
    pub fn for_graph(graph: &KnowledgeGraph) -> Self {
        Self::new(StubRuleTable::bundled(), Lexicon::from_graph(graph))
    }

    /// Simulated per-call model latency.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Additional simulated latency per output token (four characters).
    pub fn with_token_latency(mut self, per_token: Duration) -> Self {
        self.per_token = per_token;
        self
    }

    /// Latency the stub simulates for an output of `chars` characters.
    pub fn simulated_latency(&self, chars: usize) -> Duration {
        self.latency + self.per_token * chars.div_ceil(4) as u32
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn expand(&self, template: &str, bindings: &BTreeMap<String, String>, input: &str) -> String {
        let source = bindings.get("query").map(String::as_str).unwrap_or(input);
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let Some(end) = rest[start..].find("}}") else {
                out.push_str(&rest[start..]);
                return out;
            };
            let directive = &rest[start + 2..start + end];
            let (name, json) = match directive.split_once('|') {
                Some((n, "json")) => (n.trim(), true),
                _ => (directive.trim(), false),
            };
            let value = self.directive(name, bindings, source);
            if json {
                let quoted = serde_json::to_string(&value).expect("strings serialize");
                out.push_str(&quoted[1..quoted.len() - 1]);
            } else {
                out.push_str(&value);
            }
            rest = &rest[start + end + 2..];
        }
        out.push_str(rest);
        out
    }

    fn directive(&self, name: &str, bindings: &BTreeMap<String, String>, source: &str) -> String {
        let (own, context) = split_context(source);
        // captures come from the query itself, then from merged history
        let pick = |found: &dyn Fn(&str) -> Vec<String>, i: usize, last: bool| {
            [own, context]
                .into_iter()
                .map(|text| {
                    let v = found(text);
                    if last {
                        v.last().cloned()
                    } else {
                        v.get(i).cloned()
                    }
                })
                .find_map(|v| v)
                .unwrap_or_default()
        };
        let lex = &self.lexicon;
        match name {
            "city1" => pick(&|t| lex.cities_in(t), 0, false),
            "city2" => pick(&|t| lex.cities_in(t), 1, false),
            "title1" => pick(&|t| lex.titles_in(t), 0, false),
            "title2" => pick(&|t| lex.titles_in(t), 1, false),
            "last_title" => pick(&|t| lex.titles_in(t), 0, true),
            "title1_name" | "title2_name" | "last_title_name" => {
                let id = self.directive(name.trim_end_matches("_name"), bindings, source);
                if id.is_empty() {
                    let fallback = if name == "last_title_name" {
                        "the next role"
                    } else {
                        "matching"
                    };
                    fallback.to_string()
                } else {
                    self.lexicon.title_name(&id)
                }
            }
            "skill1" => pick(&|t| lex.skills_in(t), 0, false),
            "relevant_history" => self.relevant_history(bindings),
            "widened_plan" => widen_plan(bindings.get("failed_plan").map(String::as_str).unwrap_or("")),
            "failed_plan" => bindings.get("failed_plan").cloned().unwrap_or_default(),
            other => bindings.get(other).cloned().unwrap_or_default(),
        }
    }

    /// History turns sharing a content token or a recognized entity with the
    /// query, merged after the query.
    fn relevant_history(&self, bindings: &BTreeMap<String, String>) -> String {
        let query = bindings.get("query").cloned().unwrap_or_default();
        let q_tokens = content_tokens(&query);
        let q_entities = self.lexicon.entities_in(&query);
        let mut indices = Vec::new();
        let mut segments = Vec::new();
        for (idx, text) in parse_history(bindings.get("history").map(String::as_str).unwrap_or("")) {
            let shares_token = !content_tokens(&text).is_disjoint(&q_tokens);
            let shares_entity = !self.lexicon.entities_in(&text).is_disjoint(&q_entities);
            if shares_token || shares_entity {
                indices.push(idx.to_string());
                segments.push(text);
            }
        }
        let merged = if segments.is_empty() {
            query
        } else {
            format!("{query} [Context: {}]", segments.join(" | "))
        };
        format!("Integrated User Query: {merged}\nRelevant Turns: {}", indices.join(","))
    }
}

/// Splits an integrated query into the query proper and its merged
/// `[Context: ...]` suffix.
fn split_context(text: &str) -> (&str, &str) {
    match text.split_once(" [Context:") {
        Some((own, rest)) => (own, rest.trim_end_matches(']')),
        None => (text, ""),
    }
}

/// Parses `[i] role: text` history lines.
fn parse_history(history: &str) -> Vec<(usize, String)> {
    history
        .lines()
        .filter_map(|line| {
            let rest = line.strip_prefix('[')?;
            let (idx, rest) = rest.split_once(']')?;
            let idx: usize = idx.trim().parse().ok()?;
            let text = rest.split_once(':').map(|(_, t)| t).unwrap_or(rest);
            Some((idx, text.trim().to_string()))
        })
        .collect()
}

/// Drops location filters from every sub-task of a wire-format plan.
fn widen_plan(plan: &str) -> String {
    let Ok(mut value) = serde_json::from_str::<serde_json::Value>(plan) else {
        return plan.to_string();
    };
    if let Some(groups) = value.as_array_mut() {
        for task in groups.iter_mut().filter_map(|g| g.as_array_mut()).flatten() {
            if let Some(args) = task.get_mut("args").and_then(|a| a.as_object_mut()) {
                args.remove("city");
                args.remove("location");
            }
        }
    }
    value.to_string()
}

impl Backend for StubBackend {
    fn label(&self) -> BackendLabel {
        BackendLabel::Stub
    }

    fn generate(&self, task: TaskTag, prompt: &Rendered, request: &LmRequest) -> Result<String> {
        let subject = match request.bindings.get("query") {
            Some(q) => split_context(q).0,
            None => &prompt.input,
        };
        let rule = self.rules.first_match(task, &normalize(subject));
        let text = self.expand(&rule.output, &request.bindings, &prompt.input);
        let delay = self.simulated_latency(text.chars().count());
        if !delay.is_zero() {
            thread::sleep(delay);
        }
        Ok(text)
    }
}
