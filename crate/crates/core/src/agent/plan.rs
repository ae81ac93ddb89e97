use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AgentError;

/// The closed set of tools a sub-task may name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolHint {
    JobRecommend,
    CareerPath,
    CareerGrowth,
    SkillGap,
    LearningResources,
    Mentor,
    GraphTemplate,
    TextToQuery,
    ApplicationStatus,
    Compare,
}

impl ToolHint {
    pub const ALL: [ToolHint; 10] = [
        ToolHint::JobRecommend,
        ToolHint::CareerPath,
        ToolHint::CareerGrowth,
        ToolHint::SkillGap,
        ToolHint::LearningResources,
        ToolHint::Mentor,
        ToolHint::GraphTemplate,
        ToolHint::TextToQuery,
        ToolHint::ApplicationStatus,
        ToolHint::Compare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolHint::JobRecommend => "job_recommend",
            ToolHint::CareerPath => "career_path",
            ToolHint::CareerGrowth => "career_growth",
            ToolHint::SkillGap => "skill_gap",
            ToolHint::LearningResources => "learning_resources",
            ToolHint::Mentor => "mentor",
            ToolHint::GraphTemplate => "graph_template",
            ToolHint::TextToQuery => "text_to_query",
            ToolHint::ApplicationStatus => "application_status",
            ToolHint::Compare => "compare",
        }
    }
}

impl fmt::Display for ToolHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolHint {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolHint::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| AgentError::PlanInvalid(format!("unknown tool `{s}`")))
    }
}

pub type Args = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubTask {
    pub description: String,
    pub tool: ToolHint,
    pub args: Args,
}

impl SubTask {
    pub fn new<'a>(description: &str, tool: ToolHint, args: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        SubTask {
            description: description.to_string(),
            tool,
            args: args.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Output references among this sub-task's args.
    pub fn refs(&self) -> impl Iterator<Item = TaskRef> + '_ {
        self.args.values().filter_map(|v| TaskRef::parse(v))
    }
}

/// A `@g.p` or `@g.p:field` argument naming the output of sub-task `p` in
/// group `g`. Without a field the output's `key` is used.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskRef {
    pub group: usize,
    pub position: usize,
    pub field: Option<String>,
}

impl TaskRef {
    pub fn parse(value: &str) -> Option<TaskRef> {
        let rest = value.strip_prefix('@')?;
        let (index, field) = match rest.split_once(':') {
            Some((i, f)) if !f.is_empty() => (i, Some(f.to_string())),
            Some(_) => return None,
            None => (rest, None),
        };
        let (g, p) = index.split_once('.')?;
        Some(TaskRef {
            group: g.parse().ok()?,
            position: p.parse().ok()?,
            field,
        })
    }

    pub fn index(&self) -> (usize, usize) {
        (self.group, self.position)
    }
}

impl fmt::Display for TaskRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}.{}", self.group, self.position)?;
        if let Some(field) = &self.field {
            write!(f, ":{field}")?;
        }
        Ok(())
    }
}

/// Groups run in order; the sub-tasks of one group run concurrently.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    groups: Vec<Vec<SubTask>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTask {
    d: String,
    tool: String,
    #[serde(default)]
    args: Args,
}

impl Plan {
    /// Validates the plan invariants.
    pub fn new(groups: Vec<Vec<SubTask>>) -> Result<Plan, AgentError> {
        if groups.is_empty() {
            return Err(AgentError::PlanInvalid("plan has no groups".into()));
        }
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(AgentError::PlanInvalid(format!("group {g} is empty")));
            }
            for (p, task) in group.iter().enumerate() {
                if task.description.trim().is_empty() {
                    return Err(AgentError::PlanInvalid(format!("sub-task {g}.{p} has no description")));
                }
                for r in task.refs() {
                    if r.group >= g {
                        return Err(AgentError::PlanInvalid(format!(
                            "sub-task {g}.{p} references {r}, which is not in an earlier group"
                        )));
                    }
                    if r.position >= groups[r.group].len() {
                        return Err(AgentError::PlanInvalid(format!(
                            "sub-task {g}.{p} references missing {r}"
                        )));
                    }
                }
            }
        }
        Ok(Plan { groups })
    }

    /// A one-group, one-task plan.
    pub fn single(task: SubTask) -> Plan {
        Plan {
            groups: vec![vec![task]],
        }
    }

    pub fn groups(&self) -> &[Vec<SubTask>] {
        &self.groups
    }

    pub fn task(&self, index: (usize, usize)) -> Option<&SubTask> {
        self.groups.get(index.0)?.get(index.1)
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// All `(group, position)` indices in execution order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, group)| (0..group.len()).map(move |p| (g, p)))
    }

    /// Canonical wire form: `[[{"d":..,"tool":..,"args":{..}}]]`, args sorted.
    pub fn to_wire(&self) -> String {
        let wire: Vec<Vec<WireTask>> = self
            .groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|t| WireTask {
                        d: t.description.clone(),
                        tool: t.tool.as_str().to_string(),
                        args: t.args.clone(),
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string(&wire).expect("plan serializes")
    }
}

/// Parses the plan wire format. Text around the outermost brackets is
/// ignored.
pub fn parse_plan(text: &str) -> Result<Plan, AgentError> {
    let (Some(start), Some(end)) = (text.find('['), text.rfind(']')) else {
        return Err(AgentError::PlanParse("no JSON array in planner output".into()));
    };
    if end < start {
        return Err(AgentError::PlanParse("unbalanced brackets".into()));
    }
    let wire: Vec<Vec<WireTask>> =
        serde_json::from_str(&text[start..=end]).map_err(|e| AgentError::PlanParse(e.to_string()))?;
    let mut groups = Vec::with_capacity(wire.len());
    for group in wire {
        let mut tasks = Vec::with_capacity(group.len());
        for t in group {
            tasks.push(SubTask {
                description: t.d,
                tool: t.tool.parse()?,
                args: t.args,
            });
        }
        groups.push(tasks);
    }
    Plan::new(groups)
}
