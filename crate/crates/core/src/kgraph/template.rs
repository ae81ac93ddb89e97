use std::collections::{BTreeMap, BTreeSet};

use super::{skill_key, GraphError, KnowledgeGraph, Label, Relation, Result, Value};

pub type Bindings = BTreeMap<String, String>;
pub type Row = BTreeMap<String, Value>;

type Procedure = fn(&KnowledgeGraph, &Bindings) -> Result<Vec<Row>>;

/// A parameterized graph query. `semantics` documents the pattern and
/// aggregation, and must mention every parameter by name.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryTemplate {
    pub id: String,
    pub params: Vec<String>,
    pub semantics: String,
}

#[derive(Clone)]
pub struct TemplateRegistry {
    entries: BTreeMap<String, (QueryTemplate, Procedure)>,
}

impl std::fmt::Debug for TemplateRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        TemplateRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        let defs: [(&str, &[&str], &str, Procedure); 7] = [
            (
                "openings_count_by_title_city",
                &["title", "city"],
                "count active Opening nodes o with (t:JobTitle {title})-[:HAS_OPENING]->(o) and o.city = city",
                openings_count_by_title_city,
            ),
            (
                "skills_for_title",
                &["title"],
                "skill names s with (t:JobTitle {title})-[:REQUIRES_SKILL]->(s), sorted",
                skills_for_title,
            ),
            (
                "skill_gap",
                &["user", "title"],
                "skills required by (t:JobTitle {title}) minus skills with (a:Associate {user})-[:HAS_SKILL]->(s)",
                skill_gap,
            ),
            (
                "openings_by_title",
                &["title"],
                "Opening nodes o with (t:JobTitle {title})-[:HAS_OPENING]->(o), most recent posting first",
                openings_by_title,
            ),
            (
                "next_titles",
                &["title"],
                "JobTitle nodes n with (t:JobTitle {title})-[:TRANSITIONS_TO]->(n), cheapest first",
                next_titles,
            ),
            (
                "learning_resources",
                &["skills"],
                "for each skill s in the comma-separated skills list, the `resources` listed on (s:Skill)",
                learning_resources,
            ),
            (
                "mentors_for_skills",
                &["skills"],
                "Associate nodes a ranked by how many of the comma-separated skills they hold via HAS_SKILL",
                mentors_for_skills,
            ),
        ];
        for (id, params, semantics, proc_) in defs {
            let t = QueryTemplate {
                id: id.to_string(),
                params: params.iter().map(|p| p.to_string()).collect(),
                semantics: semantics.to_string(),
            };
            reg.register(t, proc_).expect("built-in templates are valid");
        }
        reg
    }

    pub fn register(&mut self, template: QueryTemplate, procedure: Procedure) -> Result<()> {
        if self.entries.contains_key(&template.id) {
            return Err(GraphError::InvalidTemplate(template.id, "duplicate id".into()));
        }
        if let Some(p) = template
            .params
            .iter()
            .find(|p| !template.semantics.contains(p.as_str()))
        {
            return Err(GraphError::InvalidTemplate(
                template.id.clone(),
                format!("parameter `{p}` not referenced in semantics"),
            ));
        }
        self.entries.insert(template.id.clone(), (template, procedure));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&QueryTemplate> {
        self.entries.get(id).map(|(t, _)| t)
    }

    pub fn templates(&self) -> impl Iterator<Item = &QueryTemplate> {
        self.entries.values().map(|(t, _)| t)
    }

    /// Runs a registered template. Empty-string bindings count as missing.
    pub fn execute(&self, graph: &KnowledgeGraph, template_id: &str, bindings: &Bindings) -> Result<Vec<Row>> {
        let (template, procedure) = self
            .entries
            .get(template_id)
            .ok_or_else(|| GraphError::TemplateNotFound(template_id.to_string()))?;
        for p in &template.params {
            if bindings.get(p).is_none_or(|v| v.trim().is_empty()) {
                return Err(GraphError::MissingParameter(p.clone()));
            }
        }
        procedure(graph, bindings)
    }
}

impl KnowledgeGraph {
    /// Executes one of the built-in templates.
    pub fn execute_template(&self, template_id: &str, bindings: &Bindings) -> Result<Vec<Row>> {
        TemplateRegistry::builtin().execute(self, template_id, bindings)
    }

    /// Skills required by `title` that are absent from `held`.
    pub fn skill_gap_for(&self, held: &BTreeSet<String>, title: &str) -> Result<BTreeSet<String>> {
        self.require_label(title, Label::JobTitle)?;
        Ok(self.required_skills(title).difference(held).cloned().collect())
    }
}

fn row<const N: usize>(fields: [(&str, Value); N]) -> Row {
    fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn skill_list(raw: &str) -> Vec<String> {
    let set: BTreeSet<String> = raw.split(',').map(skill_key).filter(|s| !s.is_empty()).collect();
    set.into_iter().collect()
}

fn openings_count_by_title_city(g: &KnowledgeGraph, b: &Bindings) -> Result<Vec<Row>> {
    let title = g.resolve_title(&b["title"])?;
    let city = b["city"].trim().to_lowercase();
    let count = g
        .openings_for_title(title.as_str(), true, usize::MAX)?
        .into_iter()
        .filter(|o| o.str_prop("city").is_some_and(|c| c.to_lowercase() == city))
        .count();
    Ok(vec![row([
        ("title", Value::from(title.as_str())),
        ("city", Value::from(b["city"].trim())),
        ("count", Value::Int(count as i64)),
    ])])
}

fn skills_for_title(g: &KnowledgeGraph, b: &Bindings) -> Result<Vec<Row>> {
    let title = g.resolve_title(&b["title"])?;
    Ok(g.required_skills(title.as_str())
        .into_iter()
        .map(|s| row([("skill", Value::from(s))]))
        .collect())
}

fn skill_gap(g: &KnowledgeGraph, b: &Bindings) -> Result<Vec<Row>> {
    let user = b["user"].as_str();
    g.require_label(user, Label::Associate)?;
    let title = g.resolve_title(&b["title"])?;
    let gap = g.skill_gap_for(&g.held_skills(user), title.as_str())?;
    Ok(gap.into_iter().map(|s| row([("skill", Value::from(s))])).collect())
}

fn openings_by_title(g: &KnowledgeGraph, b: &Bindings) -> Result<Vec<Row>> {
    let title = g.resolve_title(&b["title"])?;
    Ok(g.openings_for_title(title.as_str(), false, usize::MAX)?
        .into_iter()
        .map(|o| {
            row([
                ("opening", Value::from(o.id.as_str())),
                ("city", Value::from(o.str_prop("city").unwrap_or(""))),
                ("posting_date", Value::from(o.str_prop("posting_date").unwrap_or(""))),
                ("active", Value::Bool(o.bool_prop("active").unwrap_or(false))),
            ])
        })
        .collect())
}

fn next_titles(g: &KnowledgeGraph, b: &Bindings) -> Result<Vec<Row>> {
    let title = g.resolve_title(&b["title"])?;
    let weights: BTreeMap<_, _> = g
        .out_edges(title.as_str(), Relation::TransitionsTo)
        .map(|e| (e.dst.clone(), e.weight))
        .collect();
    Ok(g.adjacent_titles(title.as_str())?
        .into_iter()
        .map(|t| {
            let name = g
                .node(t.as_str())
                .map(|n| n.display_name().to_string())
                .unwrap_or_default();
            row([
                ("title", Value::from(t.as_str())),
                ("name", Value::from(name)),
                ("weight", Value::Float(weights[&t])),
            ])
        })
        .collect())
}

fn learning_resources(g: &KnowledgeGraph, b: &Bindings) -> Result<Vec<Row>> {
    let wanted = skill_list(&b["skills"]);
    let mut rows = Vec::new();
    for skill in g.nodes_with_label(Label::Skill) {
        let key = skill_key(skill.display_name());
        if !wanted.contains(&key) {
            continue;
        }
        for res in skill
            .str_prop("resources")
            .unwrap_or("")
            .split('|')
            .filter(|r| !r.trim().is_empty())
        {
            rows.push(row([
                ("skill", Value::from(key.clone())),
                ("resource", Value::from(res.trim())),
            ]));
        }
    }
    rows.sort_by(|a, b| {
        a.get("skill")
            .and_then(Value::as_str)
            .cmp(&b.get("skill").and_then(Value::as_str))
    });
    Ok(rows)
}

fn mentors_for_skills(g: &KnowledgeGraph, b: &Bindings) -> Result<Vec<Row>> {
    let wanted: BTreeSet<String> = skill_list(&b["skills"]).into_iter().collect();
    let mut ranked: Vec<(usize, &super::Node)> = g
        .nodes_with_label(Label::Associate)
        .filter(|a| a.bool_prop("mentor").unwrap_or(false))
        .map(|a| (g.held_skills(a.id.as_str()).intersection(&wanted).count(), a))
        .filter(|(n, _)| *n > 0)
        .collect();
    ranked.sort_by(|x, y| y.0.cmp(&x.0).then_with(|| x.1.id.cmp(&y.1.id)));
    Ok(ranked
        .into_iter()
        .take(5)
        .map(|(n, a)| {
            row([
                ("associate", Value::from(a.id.as_str())),
                ("name", Value::from(a.display_name())),
                ("matched", Value::Int(n as i64)),
            ])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::Record;

    fn graph() -> KnowledgeGraph {
        let mut recs = vec![
            Record::node("t:mle", Label::JobTitle, [("title", Value::from("ML Engineer"))]),
            Record::node(
                "s:py",
                Label::Skill,
                [
                    ("name", Value::from("python")),
                    ("resources", Value::from("Intro to Python|Fluent Python")),
                ],
            ),
            Record::node("s:ml", Label::Skill, [("name", Value::from("machine learning"))]),
            Record::node(
                "u1",
                Label::Associate,
                [("name", Value::from("Uma")), ("mentor", Value::Bool(true))],
            ),
            Record::edge("t:mle", "s:py", Relation::RequiresSkill, 1.0),
            Record::edge("t:mle", "s:ml", Relation::RequiresSkill, 1.0),
            Record::edge("u1", "s:py", Relation::HasSkill, 1.0),
            Record::edge("u1", "s:ml", Relation::HasSkill, 1.0),
        ];
        let cities = [
            ("o1", "Seattle", true),
            ("o2", "Seattle", true),
            ("o3", "Seattle", true),
            ("o4", "Seattle", false),
            ("o5", "Sunnyvale", true),
        ];
        for (i, (id, city, active)) in cities.iter().enumerate() {
            recs.push(Record::node(
                id,
                Label::Opening,
                [
                    ("posting_date", Value::from(format!("2024-0{}-01", i + 1))),
                    ("active", Value::Bool(*active)),
                    ("city", Value::from(*city)),
                    ("job_family", Value::from("Tech")),
                ],
            ));
            recs.push(Record::edge("t:mle", id, Relation::HasOpening, 1.0));
        }
        KnowledgeGraph::from_records(recs).unwrap()
    }

    fn bind(pairs: &[(&str, &str)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn count_by_title_city() {
        let g = graph();
        let rows = g
            .execute_template(
                "openings_count_by_title_city",
                &bind(&[("title", "ML Engineer"), ("city", "Seattle")]),
            )
            .unwrap();
        assert_eq!(rows[0]["count"], Value::Int(3));
        let rows = g
            .execute_template(
                "openings_count_by_title_city",
                &bind(&[("title", "ML Engineer"), ("city", "sunnyvale")]),
            )
            .unwrap();
        assert_eq!(rows[0]["count"], Value::Int(1));
    }

    #[test]
    fn errors() {
        let g = graph();
        assert_eq!(
            g.execute_template("nope", &Bindings::new()),
            Err(GraphError::TemplateNotFound("nope".into()))
        );
        assert_eq!(
            g.execute_template("openings_count_by_title_city", &bind(&[("title", "ML Engineer")])),
            Err(GraphError::MissingParameter("city".into()))
        );
    }

    #[test]
    fn skill_gap_identity_is_empty() {
        let g = graph();
        assert!(g
            .execute_template("skill_gap", &bind(&[("user", "u1"), ("title", "t:mle")]))
            .unwrap()
            .is_empty());
        let skills = g
            .execute_template("skills_for_title", &bind(&[("title", "t:mle")]))
            .unwrap();
        assert_eq!(skills.len(), 2);
    }

    #[test]
    fn resources_and_mentors() {
        let g = graph();
        let res = g
            .execute_template("learning_resources", &bind(&[("skills", "Python, rust")]))
            .unwrap();
        assert_eq!(res.len(), 2);
        let m = g
            .execute_template("mentors_for_skills", &bind(&[("skills", "python,machine learning")]))
            .unwrap();
        assert_eq!(m[0]["matched"], Value::Int(2));
    }

    #[test]
    fn semantics_must_mention_params() {
        let mut reg = TemplateRegistry::empty();
        let bad = QueryTemplate {
            id: "x".into(),
            params: vec!["city".into()],
            semantics: "count things".into(),
        };
        assert!(reg.register(bad, openings_by_title).is_err());
        assert!(TemplateRegistry::builtin()
            .register(
                QueryTemplate {
                    id: "skill_gap".into(),
                    params: vec![],
                    semantics: String::new()
                },
                openings_by_title
            )
            .is_err());
    }
}
