use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value as Json};

use super::{
    candidate_pool, career_growth, career_path_to, format_ms, rank_candidates, ApplicationStore, GrowthConfig,
    RecommendOptions, ScoredOpening, ScoringWeights, ToolError,
};
use crate::agent::{Args, SubTask, ToolHint, UserProfile};
use crate::exec::{ToolContext, ToolRegistry};
use crate::kgraph::{skill_key, Bindings, KnowledgeGraph, NodeId, Row, TemplateRegistry, Value};
use crate::lm::{LanguageModel, LmRequest};

/// Configuration shared by the built-in tools.
#[derive(Clone, Debug)]
pub struct ToolSettings {
    pub weights: ScoringWeights,
    pub recommend: RecommendOptions,
    pub growth: GrowthConfig,
    pub applications: Arc<ApplicationStore>,
    pub templates: Arc<TemplateRegistry>,
}

impl Default for ToolSettings {
    fn default() -> Self {
        ToolSettings {
            weights: ScoringWeights::default(),
            recommend: RecommendOptions::default(),
            growth: GrowthConfig::default(),
            applications: Arc::new(ApplicationStore::default()),
            templates: Arc::new(TemplateRegistry::builtin()),
        }
    }
}

/// All ten tools. `lm` backs `text_to_query`.
pub fn builtin_registry(settings: ToolSettings, lm: LanguageModel) -> ToolRegistry {
    let s = Arc::new(settings);
    let mut reg = ToolRegistry::new();
    macro_rules! tool {
        ($hint:expr, $f:expr) => {{
            let s = s.clone();
            reg.register($hint, move |args: &Args, ctx: &ToolContext| $f(&s, args, ctx));
        }};
    }
    tool!(ToolHint::JobRecommend, job_recommend);
    tool!(ToolHint::CareerPath, career_path);
    tool!(ToolHint::CareerGrowth, growth);
    tool!(ToolHint::SkillGap, skill_gap);
    tool!(ToolHint::LearningResources, learning_resources);
    tool!(ToolHint::Mentor, mentor);
    tool!(ToolHint::GraphTemplate, graph_template);
    tool!(ToolHint::ApplicationStatus, application_status);
    tool!(ToolHint::Compare, |_: &ToolSettings, args: &Args, _: &ToolContext| {
        compare(args)
    });
    let t2q = s.clone();
    reg.register(ToolHint::TextToQuery, move |args: &Args, ctx: &ToolContext| {
        let question = required(args, "question")?;
        let (template, bindings) = generate_query(question, &t2q.templates, &lm)?;
        template_payload(&t2q.templates, ctx, &template, bindings)
    });
    reg
}

fn opt<'a>(args: &'a Args, name: &str) -> Option<&'a str> {
    args.get(name).map(|v| v.trim()).filter(|v| !v.is_empty())
}

fn required<'a>(args: &'a Args, name: &str) -> Result<&'a str, ToolError> {
    opt(args, name).ok_or_else(|| ToolError::MissingArgument(name.to_string()))
}

fn list(raw: &str) -> Vec<String> {
    let set: BTreeSet<String> = raw.split(',').map(skill_key).filter(|s| !s.is_empty()).collect();
    set.into_iter().collect()
}

fn title_name(graph: &KnowledgeGraph, id: &str) -> String {
    graph
        .node(id)
        .map_or_else(|| id.to_string(), |n| n.display_name().to_string())
}

fn held(profile: &UserProfile) -> BTreeSet<String> {
    profile.skills.iter().map(|s| skill_key(s)).collect()
}

fn opening_json(graph: &KnowledgeGraph, s: &ScoredOpening) -> Json {
    json!({
        "id": s.opening.as_str(),
        "title": s.title.as_ref().map(|t| title_name(graph, t.as_str())),
        "city": s.city,
        "family": s.family,
        "posting_date": s.posting_date,
        "score": s.adjusted,
    })
}

fn opening_line(graph: &KnowledgeGraph, s: &ScoredOpening) -> String {
    let title = s
        .title
        .as_ref()
        .map_or_else(|| "Opening".to_string(), |t| title_name(graph, t.as_str()));
    format!(
        "{title} in {} ({})",
        s.city.as_deref().unwrap_or("unknown city"),
        s.opening
    )
}

fn job_recommend(s: &ToolSettings, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let graph = &ctx.graph;
    let pool: Vec<NodeId> = match opt(args, "title") {
        Some(t) => {
            let title = graph.resolve_title(t)?;
            graph
                .openings_for_title(title.as_str(), true, usize::MAX)?
                .into_iter()
                .map(|o| o.id.clone())
                .collect()
        }
        None => candidate_pool(&ctx.profile, graph, s.recommend.include_current_title)?,
    };
    let mut ranked = rank_candidates(&ctx.profile, &ctx.interest, graph, &s.weights, &pool, s.recommend.mode);
    if let Some(city) = opt(args, "city") {
        ranked.retain(|o| o.city.as_deref().is_some_and(|c| c.eq_ignore_ascii_case(city)));
    }
    ranked.truncate(s.recommend.k);
    let Some(top) = ranked.first() else { return Ok(None) };
    let lines: Vec<String> = ranked.iter().take(5).map(|o| opening_line(graph, o)).collect();
    Ok(Some(json!({
        "key": top.opening.as_str(),
        "summary": format!("Top openings: {}", lines.join("; ")),
        "openings": ranked.iter().map(|o| opening_json(graph, o)).collect::<Vec<_>>(),
    })))
}

fn career_path(s: &ToolSettings, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let graph = &ctx.graph;
    let mut profile = (*ctx.profile).clone();
    if let Some(from) = opt(args, "from") {
        profile.current_title = graph.resolve_title(from)?.as_str().to_string();
    }
    if let Some(dest) = opt(args, "destination") {
        let dest = graph.resolve_title(dest)?;
        let path = career_path_to(&profile, dest.as_str(), graph)?;
        return Ok(Some(json!({
            "key": dest.as_str(),
            "total_weight": path.score,
            "path": path.titles.iter().map(NodeId::as_str).collect::<Vec<_>>(),
            "summary": format!("Path to {}: {} (total cost {:.2})", title_name(graph, dest.as_str()), path.render(graph), path.score),
        })));
    }
    let paths = career_growth(&profile, &ctx.interest, graph, &s.weights, &s.growth)?;
    let Some(best) = paths.first() else { return Ok(None) };
    let first = best.first_hop().expect("growth paths have a hop");
    Ok(Some(json!({
        "key": first.as_str(),
        "path": best.titles.iter().map(NodeId::as_str).collect::<Vec<_>>(),
        "summary": format!("Suggested path: {}", best.render(graph)),
    })))
}

fn growth(s: &ToolSettings, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let graph = &ctx.graph;
    let mut profile = (*ctx.profile).clone();
    if let Some(t) = opt(args, "title") {
        profile.current_title = graph.resolve_title(t)?.as_str().to_string();
    }
    let paths = career_growth(&profile, &ctx.interest, graph, &s.weights, &s.growth)?;
    let Some(best) = paths.first() else { return Ok(None) };
    let lines: Vec<String> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}. {}", i + 1, p.render(graph)))
        .collect();
    Ok(Some(json!({
        "key": best.first_hop().expect("growth paths have a hop").as_str(),
        "paths": paths.iter().map(|p| json!({
            "titles": p.titles.iter().map(NodeId::as_str).collect::<Vec<_>>(),
            "score": p.score,
        })).collect::<Vec<_>>(),
        "summary": format!("Growth paths from {}: {}", title_name(graph, &profile.current_title), lines.join(" ")),
    })))
}

fn skill_gap(_: &ToolSettings, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let graph = &ctx.graph;
    let title = graph.resolve_title(required(args, "title")?)?;
    let gap: Vec<String> = graph
        .skill_gap_for(&held(&ctx.profile), title.as_str())?
        .into_iter()
        .collect();
    let name = title_name(graph, title.as_str());
    let summary = if gap.is_empty() {
        format!("You already have every skill {name} requires.")
    } else {
        format!("Skill gap for {name}: {}", gap.join(", "))
    };
    Ok(Some(
        json!({"key": gap.join(","), "title": title.as_str(), "skills": gap, "summary": summary}),
    ))
}

fn learning_resources(s: &ToolSettings, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let skills = list(args.get("skills").map_or("", String::as_str));
    if skills.is_empty() {
        return Ok(Some(
            json!({"key": "", "resources": [], "summary": "No missing skills, so nothing to learn."}),
        ));
    }
    let bindings = Bindings::from([("skills".to_string(), skills.join(","))]);
    let rows = s.templates.execute(&ctx.graph, "learning_resources", &bindings)?;
    if rows.is_empty() {
        return Ok(None);
    }
    let pairs: Vec<(String, String)> = rows
        .iter()
        .map(|r| (str_field(r, "skill"), str_field(r, "resource")))
        .collect();
    let lines: Vec<String> = pairs.iter().map(|(sk, res)| format!("{res} ({sk})")).collect();
    Ok(Some(json!({
        "key": pairs.iter().map(|(_, r)| r.as_str()).collect::<Vec<_>>().join(","),
        "resources": pairs.iter().map(|(sk, res)| json!({"skill": sk, "resource": res})).collect::<Vec<_>>(),
        "summary": format!("Learning resources: {}", lines.join("; ")),
    })))
}

fn mentor(s: &ToolSettings, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let graph = &ctx.graph;
    let mut skills = list(args.get("skills").map_or("", String::as_str));
    if skills.is_empty() {
        if let Some(t) = opt(args, "title") {
            let title = graph.resolve_title(t)?;
            skills = graph.required_skills(title.as_str()).into_iter().collect();
        }
    }
    if skills.is_empty() {
        return Err(ToolError::MissingArgument("skills".into()));
    }
    let bindings = Bindings::from([("skills".to_string(), skills.join(","))]);
    let rows = s.templates.execute(graph, "mentors_for_skills", &bindings)?;
    let Some(first) = rows.first() else { return Ok(None) };
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            let n = r.get("matched").and_then(Value::as_i64).unwrap_or(0);
            format!(
                "{} (shares {n} skill{})",
                str_field(r, "name"),
                if n == 1 { "" } else { "s" }
            )
        })
        .collect();
    Ok(Some(json!({
        "key": str_field(first, "associate"),
        "mentors": rows.iter().map(row_json).collect::<Vec<_>>(),
        "summary": format!("Mentors: {}", lines.join("; ")),
    })))
}

fn str_field(row: &Row, key: &str) -> String {
    match row.get(key) {
        Some(Value::Str(s)) => s.clone(),
        Some(Value::Int(i)) => i.to_string(),
        Some(Value::Float(x)) => x.to_string(),
        Some(Value::Bool(b)) => b.to_string(),
        None => String::new(),
    }
}

fn row_json(row: &Row) -> Json {
    serde_json::to_value(row).expect("rows are plain scalars")
}

fn graph_template(s: &ToolSettings, args: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let template = required(args, "template")?.to_string();
    let bindings: Bindings = args
        .iter()
        .filter(|(k, _)| k.as_str() != "template")
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    template_payload(&s.templates, ctx, &template, bindings)
}

/// Runs a template on behalf of the session user and renders the rows.
fn template_payload(
    templates: &TemplateRegistry,
    ctx: &ToolContext,
    template: &str,
    mut bindings: Bindings,
) -> Result<Option<Json>, ToolError> {
    let declared = templates
        .get(template)
        .ok_or_else(|| crate::kgraph::GraphError::TemplateNotFound(template.to_string()))?;
    if declared.params.iter().any(|p| p == "user") && !bindings.contains_key("user") {
        bindings.insert("user".into(), ctx.profile.user_id.clone());
    }
    let graph = &ctx.graph;
    let rows = templates.execute(graph, template, &bindings)?;
    if rows.is_empty() {
        return Ok(None);
    }
    let name = |k: &str| {
        bindings
            .get(k)
            .map_or_else(String::new, |t| match graph.resolve_title(t) {
                Ok(id) => title_name(graph, id.as_str()),
                Err(_) => t.clone(),
            })
    };
    let column = |k: &str| rows.iter().map(|r| str_field(r, k)).collect::<Vec<_>>();
    let (key, summary) = match template {
        "openings_count_by_title_city" => {
            let count = str_field(&rows[0], "count");
            let city = str_field(&rows[0], "city");
            let noun = if count == "1" { "opening" } else { "openings" };
            (
                count.clone(),
                format!("{count} active {} {noun} in {city}", name("title")),
            )
        }
        "skills_for_title" => {
            let skills = column("skill");
            (
                skills.join(","),
                format!("Skills for {}: {}", name("title"), skills.join(", ")),
            )
        }
        "skill_gap" => {
            let skills = column("skill");
            (
                skills.join(","),
                format!("Skill gap for {}: {}", name("title"), skills.join(", ")),
            )
        }
        "openings_by_title" => {
            let lines: Vec<String> = rows
                .iter()
                .map(|r| {
                    let state = if r.get("active").and_then(Value::as_bool) == Some(true) {
                        ""
                    } else {
                        ", closed"
                    };
                    format!(
                        "{} ({}, {}{state})",
                        str_field(r, "opening"),
                        str_field(r, "city"),
                        str_field(r, "posting_date")
                    )
                })
                .collect();
            (
                str_field(&rows[0], "opening"),
                format!("Openings for {}: {}", name("title"), lines.join("; ")),
            )
        }
        "next_titles" => {
            let names = column("name");
            (
                str_field(&rows[0], "title"),
                format!("Next roles after {}: {}", name("title"), names.join(", ")),
            )
        }
        "learning_resources" => {
            let res = column("resource");
            (res.join(","), format!("Learning resources: {}", res.join("; ")))
        }
        "mentors_for_skills" => {
            let names = column("name");
            (
                str_field(&rows[0], "associate"),
                format!("Mentors: {}", names.join(", ")),
            )
        }
        _ => {
            let first = rows[0]
                .keys()
                .next()
                .map_or_else(String::new, |k| str_field(&rows[0], k));
            (
                first,
                format!("{template}: {}", Json::Array(rows.iter().map(row_json).collect())),
            )
        }
    };
    Ok(Some(json!({
        "key": key,
        "template": template,
        "rows": rows.iter().map(row_json).collect::<Vec<_>>(),
        "summary": summary,
    })))
}

fn application_status(s: &ToolSettings, _: &Args, ctx: &ToolContext) -> Result<Option<Json>, ToolError> {
    let graph = &ctx.graph;
    let record = s.applications.latest(&ctx.profile.user_id)?;
    let role = graph
        .title_of_opening(&record.opening)
        .map_or_else(|| "an opening".to_string(), |t| title_name(graph, t.as_str()));
    let mut summary = format!(
        "Your application for {role} ({}) is at the {} stage.",
        record.opening,
        record.stage.as_str()
    );
    if let Some(at) = record.interview_ms {
        summary.push_str(&format!(" Interview scheduled for {}.", format_ms(at)));
    }
    Ok(Some(json!({
        "key": record.opening,
        "stage": record.stage,
        "interview_ms": record.interview_ms,
        "updated_ms": record.updated_ms,
        "summary": summary,
    })))
}

fn number(args: &Args, name: &str) -> Result<f64, ToolError> {
    let raw = required(args, name)?;
    raw.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ToolError::InvalidArgument {
            name: name.to_string(),
            reason: format!("`{raw}` is not a number"),
        })
}

fn show(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.2}")
    }
}

fn compare(args: &Args) -> Result<Option<Json>, ToolError> {
    let (a, b) = (number(args, "a")?, number(args, "b")?);
    let a_label = opt(args, "a_label").unwrap_or("A");
    let b_label = opt(args, "b_label").unwrap_or("B");
    let metric = opt(args, "metric").unwrap_or("value");
    let lower = match opt(args, "prefer").unwrap_or("higher") {
        "higher" => false,
        "lower" => true,
        other => {
            return Err(ToolError::InvalidArgument {
                name: "prefer".into(),
                reason: format!("expected higher or lower, got `{other}`"),
            })
        }
    };
    let (winner, w, l) = if a == b {
        ("tie", a, b)
    } else if (a > b) != lower {
        (a_label, a, b)
    } else {
        (b_label, b, a)
    };
    let summary = if winner == "tie" {
        format!("{a_label} and {b_label} tie on {metric} ({})", show(a))
    } else {
        let verb = if lower { "lower" } else { "more" };
        format!("{winner} has {verb} {metric} ({} vs {})", show(w), show(l))
    };
    Ok(Some(json!({"key": winner, "a": a, "b": b, "summary": summary})))
}

/// `- id(params): semantics`, one line per template.
pub fn schema_description(templates: &TemplateRegistry) -> String {
    templates
        .templates()
        .map(|t| format!("- {}({}): {}", t.id, t.params.join(", "), t.semantics))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Deserialize)]
struct GeneratedQuery {
    template: String,
    #[serde(default)]
    bindings: Bindings,
}

fn generate_query(
    question: &str,
    templates: &TemplateRegistry,
    lm: &LanguageModel,
) -> Result<(String, Bindings), ToolError> {
    let request = LmRequest::new(
        "text_to_query",
        [
            ("schema", schema_description(templates)),
            ("query", question.to_string()),
        ],
    );
    for _ in 0..2 {
        let text = lm.complete(&request)?.text;
        let body = text.trim();
        let parsed = body
            .find('{')
            .zip(body.rfind('}'))
            .and_then(|(s, e)| serde_json::from_str::<GeneratedQuery>(&body[s..=e]).ok())
            .filter(|q| templates.get(&q.template).is_some());
        if let Some(q) = parsed {
            return Ok((q.template, q.bindings));
        }
        log::debug!("text-to-query produced no usable template: {body:?}");
    }
    Err(ToolError::QueryGenerationFailed(question.to_string()))
}

/// Translates a question into a registered template call and runs it.
pub fn text_to_query(
    text: &str,
    templates: &TemplateRegistry,
    lm: &LanguageModel,
    graph: &KnowledgeGraph,
) -> Result<Vec<Row>, ToolError> {
    let (template, bindings) = generate_query(text, templates, lm)?;
    Ok(templates.execute(graph, &template, &bindings)?)
}

/// Runs the template a `graph_template` sub-task names.
pub fn select_and_fill_template(intent: &SubTask, graph: &KnowledgeGraph) -> Result<Vec<Row>, ToolError> {
    if intent.tool != ToolHint::GraphTemplate {
        return Err(ToolError::InvalidArgument {
            name: "tool".into(),
            reason: format!("expected graph_template, got {}", intent.tool),
        });
    }
    let template = required(&intent.args, "template")?;
    let bindings: Bindings = intent
        .args
        .iter()
        .filter(|(k, _)| k.as_str() != "template")
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(graph.execute_template(template, &bindings)?)
}
