//! Language-model adapter: prompt registry, a deterministic rule-table stub
//! backend, and a remote HTTP backend.

mod prompts;
mod remote;
mod stub;
pub mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::default_prompts;
pub use remote::RemoteBackend;
pub use stub::{Lexicon, StubBackend, StubRule, StubRuleTable, DEFAULT_RULES};

/// The kind of work a prompt asks the model to do. Stub rules are keyed by it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskTag {
    Classify,
    Memory,
    Plan,
    Replan,
    Sufficiency,
    Query,
}

impl TaskTag {
    pub const ALL: [TaskTag; 6] = [
        TaskTag::Classify,
        TaskTag::Memory,
        TaskTag::Plan,
        TaskTag::Replan,
        TaskTag::Sufficiency,
        TaskTag::Query,
    ];
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskTag::Classify => "classify",
            TaskTag::Memory => "memory",
            TaskTag::Plan => "plan",
            TaskTag::Replan => "replan",
            TaskTag::Sufficiency => "sufficiency",
            TaskTag::Query => "query",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("missing binding for placeholder `{0}`")]
    MissingPlaceholder(String),
    #[error("prompt template `{0}` not registered")]
    TemplateNotFound(String),
    #[error("invalid prompt template `{0}`: {1}")]
    InvalidTemplate(String, String),
    #[error("backend timed out after {0} ms")]
    BackendTimeout(u64),
    #[error("backend error: {0}")]
    BackendError(String),
    #[error("invalid rule table: {0}")]
    RuleTableInvalid(String),
}

pub type Result<T> = std::result::Result<T, LmError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShot {
    pub input: String,
    pub output: String,
}

/// A prompt with `{name}` placeholders. `system_text` holds the instructions,
/// `input_text` the live input; few-shot examples are serialized between them.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub task: TaskTag,
    pub system_text: String,
    pub few_shot: Vec<FewShot>,
    pub input_text: String,
    pub placeholders: Vec<String>,
}

/// A rendered prompt split the way the remote protocol sends it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rendered {
    pub system: String,
    pub input: String,
}

impl Rendered {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.input)
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        for p in &self.placeholders {
            let marker = format!("{{{p}}}");
            if !self.system_text.contains(&marker) && !self.input_text.contains(&marker) {
                return Err(LmError::InvalidTemplate(
                    self.id.clone(),
                    format!("placeholder `{p}` does not appear in the prompt"),
                ));
            }
        }
        Ok(())
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<Rendered> {
        let mut values = Vec::with_capacity(self.placeholders.len());
        for p in &self.placeholders {
            let v = bindings.get(p).ok_or_else(|| LmError::MissingPlaceholder(p.clone()))?;
            values.push((format!("{{{p}}}"), v.as_str()));
        }
        let fill = |text: &str| substitute(text, &values);
        let mut system = fill(&self.system_text);
        for (i, ex) in self.few_shot.iter().enumerate() {
            system.push_str(&format!(
                "\n\n[EXAMPLE {}]\n[TEXT]\n{}\n[OUTPUT]\n{}",
                i + 1,
                ex.input,
                ex.output
            ));
        }
        Ok(Rendered {
            system,
            input: fill(&self.input_text),
        })
    }
}

/// Single left-to-right pass so substituted values are never re-scanned.
fn substitute(text: &str, values: &[(String, &str)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'scan: while !rest.is_empty() {
        if rest.starts_with('{') {
            for (marker, value) in values {
                if rest.starts_with(marker.as_str()) {
                    out.push_str(value);
                    rest = &rest[marker.len()..];
                    continue 'scan;
                }
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// Renders a template to a single string: instructions, examples, live input.
pub fn render_prompt(template: &PromptTemplate, bindings: &BTreeMap<String, String>) -> Result<String> {
    template.render(bindings).map(|r| r.text())
}

#[derive(Clone, Debug, Default)]
pub struct PromptRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, template: PromptTemplate) -> Result<()> {
        template.validate()?;
        if self.templates.contains_key(&template.id) {
            return Err(LmError::InvalidTemplate(template.id, "duplicate id".into()));
        }
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmRequest {
    pub template_id: String,
    pub bindings: BTreeMap<String, String>,
    pub max_output_length: usize,
}

impl LmRequest {
    pub fn new<'a>(template_id: &str, bindings: impl IntoIterator<Item = (&'a str, String)>) -> Self {
        LmRequest {
            template_id: template_id.to_string(),
            bindings: bindings.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            max_output_length: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendLabel {
    Stub,
    Remote,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmResponse {
    pub text: String,
    pub backend: BackendLabel,
    pub elapsed_ms: f64,
}

/// A text-generation backend. Implementations must be stateless per call.
pub trait Backend: Send + Sync {
    fn label(&self) -> BackendLabel;

    fn generate(&self, task: TaskTag, prompt: &Rendered, request: &LmRequest) -> Result<String>;
}

/// Prompt registry plus backend.
#[derive(Clone)]
pub struct LanguageModel {
    prompts: Arc<PromptRegistry>,
    backend: Arc<dyn Backend>,
}

impl fmt::Debug for LanguageModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LanguageModel")
            .field("backend", &self.backend.label())
            .finish()
    }
}

impl LanguageModel {
    pub fn new(prompts: PromptRegistry, backend: Arc<dyn Backend>) -> Self {
        LanguageModel {
            prompts: Arc::new(prompts),
            backend,
        }
    }

    /// Default prompts over the given backend.
    pub fn with_backend(backend: Arc<dyn Backend>) -> Self {
        Self::new(default_prompts(), backend)
    }

    pub fn backend_label(&self) -> BackendLabel {
        self.backend.label()
    }

    pub fn prompts(&self) -> &PromptRegistry {
        &self.prompts
    }

    pub fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        let template = self
            .prompts
            .get(&request.template_id)
            .ok_or_else(|| LmError::TemplateNotFound(request.template_id.clone()))?;
        let rendered = template.render(&request.bindings)?;
        let start = Instant::now();
        let mut text = self.backend.generate(template.task, &rendered, request)?;
        if text.chars().count() > request.max_output_length {
            text = text.chars().take(request.max_output_length).collect();
        }
        Ok(LmResponse {
            text,
            backend: self.backend.label(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(system: &str, input: &str, placeholders: &[&str]) -> PromptTemplate {
        PromptTemplate {
            id: "t".into(),
            task: TaskTag::Classify,
            system_text: system.into(),
            few_shot: vec![],
            input_text: input.into(),
            placeholders: placeholders.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn no_placeholders_is_identity() {
        let t = template("Answer briefly.", "", &[]);
        assert_eq!(t.render(&BTreeMap::new()).unwrap().system, "Answer briefly.");
    }

    #[test]
    fn placeholder_substituted_in_place() {
        let t = template("Classify.", "[QUERY] {query} [END]", &["query"]);
        let r = t.render(&bind(&[("query", "hi"), ("unused", "x")])).unwrap();
        assert_eq!(r.input, "[QUERY] hi [END]");
        assert!(render_prompt(&t, &bind(&[("query", "hi")]))
            .unwrap()
            .contains("[QUERY] hi [END]"));
    }

    #[test]
    fn missing_binding_errors() {
        let t = template("{history}", "{query}", &["history", "query"]);
        assert_eq!(
            t.render(&bind(&[("query", "q")])),
            Err(LmError::MissingPlaceholder("history".into()))
        );
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = template("", "{a}|{b}", &["a", "b"]);
        let r = t.render(&bind(&[("a", "{b}"), ("b", "x")])).unwrap();
        assert_eq!(r.input, "{b}|x");
    }

    #[test]
    fn examples_precede_live_input() {
        let mut t = template("Sys", "LIVE {query}", &["query"]);
        t.few_shot = vec![
            FewShot {
                input: "in1".into(),
                output: "out1".into(),
            },
            FewShot {
                input: "in2".into(),
                output: "out2".into(),
            },
        ];
        let text = render_prompt(&t, &bind(&[("query", "q")])).unwrap();
        let (p1, p2, live) = (
            text.find("in1").unwrap(),
            text.find("in2").unwrap(),
            text.find("LIVE q").unwrap(),
        );
        assert!(p1 < p2 && p2 < live);
    }

    #[test]
    fn undeclared_marker_rejected() {
        let t = template("no marker", "", &["query"]);
        assert!(t.validate().is_err());
    }

    #[test]
    fn default_prompts_are_valid() {
        let reg = default_prompts();
        for id in ["classify", "memory", "plan", "replan", "sufficiency", "text_to_query"] {
            assert!(reg.get(id).is_some(), "{id}");
        }
    }
}
