use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{
    hit_at_k, hit_real_transitions, map_at_k, ndcg_at_k, welch_t_test, FrequencyModel, Summary, TTestResult,
};
use super::{BenchError, SyntheticWorld};
use crate::kgraph::{Label, Relation};
use crate::par::{self, Mode};
use crate::service::{EventKind, InMemoryStore, Service, ServiceConfig, ServiceDeps};
use crate::tools::{rank_candidates, InterestState, ScoringWeights};

/// Rounds assigned to a dialogue whose target was never reached.
pub const MAX_ROUNDS: u32 = 20;

/// Case-insensitive substring test on a response: every `all_of` phrase
/// and, when `any_of` is non-empty, at least one of those.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPredicate {
    #[serde(default)]
    pub all_of: Vec<String>,
    #[serde(default)]
    pub any_of: Vec<String>,
}

impl TargetPredicate {
    pub fn is_met(&self, response: &str) -> bool {
        let r = response.to_lowercase();
        self.all_of.iter().all(|p| r.contains(&p.to_lowercase()))
            && (self.any_of.is_empty() || self.any_of.iter().any(|p| r.contains(&p.to_lowercase())))
    }
}

fn default_max_rounds() -> u32 {
    MAX_ROUNDS
}

/// Messages a scripted user sends, in order, until the target is met.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueScript {
    pub id: String,
    pub user: String,
    /// Family of the script, used to block A/B assignment.
    #[serde(default)]
    pub template: String,
    pub messages: Vec<String>,
    pub target: TargetPredicate,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptOutcome {
    pub id: String,
    pub variant: String,
    pub rounds: u32,
    pub latencies_ms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueRun {
    pub outcomes: Vec<ScriptOutcome>,
}

impl DialogueRun {
    pub fn rounds(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| f64::from(o.rounds)).collect()
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .flat_map(|o| o.latencies_ms.iter().copied())
            .collect()
    }
}

/// Plays each script against the service, one message at a time.
pub fn simulate_dialogues(service: &Service, scripts: &[DialogueScript]) -> Result<DialogueRun, BenchError> {
    if scripts.is_empty() {
        return Err(BenchError::ConfigInvalid("no scripts".into()));
    }
    let variant = service.config().agent.variant.clone();
    let outcomes = scripts.iter().map(|s| play(service, s, &variant)).collect();
    Ok(DialogueRun { outcomes })
}

fn play(service: &Service, script: &DialogueScript, variant: &str) -> ScriptOutcome {
    let mut outcome = ScriptOutcome {
        id: script.id.clone(),
        variant: variant.to_string(),
        rounds: MAX_ROUNDS,
        latencies_ms: Vec::new(),
        error: None,
    };
    let session = match service.open_session(&script.user) {
        Ok(s) => s,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return outcome;
        }
    };
    let limit = script.max_rounds.clamp(1, MAX_ROUNDS) as usize;
    for (i, message) in script.messages.iter().take(limit).enumerate() {
        let start = Instant::now();
        let events = service.post_message(&session.session_id, message);
        outcome.latencies_ms.push(start.elapsed().as_secs_f64() * 1e3);
        let events = match events {
            Ok(ev) => ev,
            Err(e) => {
                outcome.error = Some(e.to_string());
                break;
            }
        };
        let answer = events
            .iter()
            .find(|e| e.kind == EventKind::Final)
            .and_then(|e| e.payload["text"].as_str());
        if answer.is_some_and(|text| script.target.is_met(text)) {
            outcome.rounds = i as u32 + 1;
            break;
        }
    }
    service.close_session(&session.session_id);
    outcome
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: String,
    pub scripts: usize,
    pub mean_rounds: f64,
    /// Per-message wall time from submission to the terminal event.
    pub latency_ms: Summary,
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub rounds: TTestResult,
    pub latency: TTestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub k: usize,
    pub impressions: usize,
    pub hit: f64,
    pub ndcg: f64,
    pub map: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMetrics {
    pub users: usize,
    /// % of users whose most-frequent-transition prediction was realized.
    pub frequency_pct: f64,
    /// Same, predicting the cheapest outgoing transition in the graph.
    pub graph_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default)]
    pub design: AbDesign,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<TransitionMetrics>,
    pub variants: Vec<VariantReport>,
    pub tests: Vec<PairwiseTest>,
    #[serde(default)]
    pub outcomes: Vec<ScriptOutcome>,
}

/// The A/B result is a [`MetricReport`] without world-level metrics.
pub type AbReport = MetricReport;

/// How scripts are split between variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbDesign {
    /// Each script runs under one variant. Within each block of scripts
    /// sharing a template and message count, the scripts are shuffled and
    /// dealt round-robin from a random offset, so every variant sees the
    /// same mix of script shapes.
    #[default]
    Blocked,
    /// Every script runs under every variant.
    Crossover,
}

impl std::str::FromStr for AbDesign {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "blocked" => Ok(AbDesign::Blocked),
            "crossover" => Ok(AbDesign::Crossover),
            other => Err(BenchError::ConfigInvalid(format!("unknown A/B design `{other}`"))),
        }
    }
}

fn assign(design: AbDesign, variants: usize, scripts: &[DialogueScript], seed: u64) -> Vec<Vec<DialogueScript>> {
    if design == AbDesign::Crossover {
        return vec![scripts.to_vec(); variants];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (i, s) in scripts.iter().enumerate() {
        blocks
            .entry((s.template.as_str(), s.messages.len()))
            .or_default()
            .push(i);
    }
    let mut assigned = vec![Vec::new(); variants];
    for members in blocks.values_mut() {
        members.shuffle(&mut rng);
        let offset = rng.random_range(0..variants);
        for (pos, &i) in members.iter().enumerate() {
            assigned[(pos + offset) % variants].push(scripts[i].clone());
        }
    }
    assigned
}

/// Plays the scripts under each variant, each with its own service and
/// conversation store, then compares every pair of variants.
pub fn run_ab(
    variants: &[&str],
    deps: &ServiceDeps,
    base: &ServiceConfig,
    scripts: &[DialogueScript],
    design: AbDesign,
    seed: u64,
) -> Result<MetricReport, BenchError> {
    if variants.len() < 2 {
        return Err(BenchError::ConfigInvalid(
            "an A/B run needs at least two variants".into(),
        ));
    }
    let assigned = assign(design, variants.len(), scripts, seed);

    let mut runs = Vec::new();
    for (name, scripts) in variants.iter().zip(&assigned) {
        let mut config = base.clone();
        config.agent.variant = name.to_string();
        let deps = ServiceDeps {
            store: Arc::new(InMemoryStore::new()),
            ..deps.clone()
        };
        let service = Service::new(deps, config)?;
        runs.push(simulate_dialogues(&service, scripts)?);
    }

    let mut report = MetricReport::default();
    for (name, run) in variants.iter().zip(&runs) {
        let rounds = run.rounds();
        report.variants.push(VariantReport {
            variant: name.to_string(),
            scripts: run.outcomes.len(),
            mean_rounds: rounds.iter().sum::<f64>() / rounds.len() as f64,
            latency_ms: Summary::of(&run.latencies()),
            errors: run.outcomes.iter().filter(|o| o.error.is_some()).count(),
        });
    }
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            report.tests.push(PairwiseTest {
                a: variants[i].to_string(),
                b: variants[j].to_string(),
                rounds: welch_t_test(&runs[i].rounds(), &runs[j].rounds())?,
                latency: welch_t_test(&runs[i].latencies(), &runs[j].latencies())?,
            });
        }
    }
    report.design = design;
    report.outcomes = runs.into_iter().flat_map(|r| r.outcomes).collect();
    Ok(report)
}

/// Mean hit, NDCG and MAP at `k` over logged impressions with at least one
/// click, ranking each impression's shown openings under `weights`.
pub fn evaluate_rankings(
    world: &SyntheticWorld,
    weights: &ScoringWeights,
    k: usize,
    mode: Mode,
) -> Result<RankingMetrics, BenchError> {
    weights
        .validate()
        .map_err(|e| BenchError::ConfigInvalid(e.to_string()))?;
    let neutral = InterestState::default();
    let records: Vec<_> = world
        .clicks
        .records()
        .iter()
        .filter(|r| !r.clicked.is_empty())
        .collect();
    let scores = par::map(mode, &records, |r| -> Result<[f64; 3], BenchError> {
        let profile = &world.profiles[&r.user];
        let interest = world.interests.get(&r.user).unwrap_or(&neutral);
        let ranked: Vec<_> = rank_candidates(profile, interest, &world.graph, weights, &r.shown, Mode::Sequential)
            .into_iter()
            .map(|s| s.opening)
            .collect();
        let relevant: BTreeSet<_> = r.clicked.iter().cloned().collect();
        Ok([
            hit_at_k(&ranked, &relevant, k)?,
            ndcg_at_k(&ranked, &relevant, k)?,
            map_at_k(&ranked, &relevant, k)?,
        ])
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = scores.len().max(1) as f64;
    let mean = |i: usize| scores.iter().map(|s| s[i]).sum::<f64>() / n;
    Ok(RankingMetrics {
        k,
        impressions: scores.len(),
        hit: mean(0),
        ndcg: mean(1),
        map: mean(2),
    })
}

/// % Hit Real Trans of the frequency baseline and of the graph's cheapest
/// transition, over users with a test-year record.
pub fn evaluate_transitions(world: &SyntheticWorld) -> Result<TransitionMetrics, BenchError> {
    let test = world.test();
    let model = FrequencyModel::fit(&world.training());
    let mut first_from: BTreeMap<&str, &str> = BTreeMap::new();
    for r in &test {
        first_from.entry(r.user.as_str()).or_insert(r.from.as_str());
    }
    let frequency: BTreeMap<String, String> = first_from
        .iter()
        .map(|(u, from)| (u.to_string(), model.predict(from).unwrap_or_default().to_string()))
        .collect();
    let graph: BTreeMap<String, String> = first_from
        .iter()
        .map(|(u, from)| {
            let next = world
                .graph
                .out_edges(from, Relation::TransitionsTo)
                .min_by(|a, b| a.weight.total_cmp(&b.weight).then_with(|| a.dst.cmp(&b.dst)))
                .map(|e| e.dst.to_string())
                .unwrap_or_default();
            (u.to_string(), next)
        })
        .collect();
    Ok(TransitionMetrics {
        users: first_from.len(),
        frequency_pct: hit_real_transitions(&frequency, &test)?,
        graph_pct: hit_real_transitions(&graph, &test)?,
    })
}

/// `(recovered, eligible)`: titles with at least `min_support` training
/// records, and how many of them the frequency baseline maps to the planted
/// modal next title.
pub fn modal_recovery(world: &SyntheticWorld, min_support: usize) -> (usize, usize) {
    let model = FrequencyModel::fit(&world.training());
    let eligible: Vec<(&String, &String)> = world
        .modal
        .iter()
        .filter(|(t, _)| model.support(t) >= min_support)
        .collect();
    let recovered = eligible
        .iter()
        .filter(|(t, m)| model.predict(t).ok() == Some(m.as_str()))
        .count();
    (recovered, eligible.len())
}

const SIMPLE_TEMPLATES: [&str; 4] = ["count", "skills", "status", "next"];
const COMPLEX_TEMPLATES: [&str; 4] = ["become", "compare", "find_skills", "vague"];
const MAX_EARLIER_TURNS: usize = 4;

/// Entities a script generator draws from.
struct ScriptPool<'a> {
    world: &'a SyntheticWorld,
    titles: Vec<(String, String)>,
    cities: Vec<String>,
    users: Vec<String>,
    applicants: Vec<String>,
}

impl<'a> ScriptPool<'a> {
    fn new(world: &'a SyntheticWorld) -> Self {
        let titles = world
            .graph
            .nodes_with_label(Label::JobTitle)
            .map(|t| (t.id.to_string(), t.display_name().to_string()))
            .collect();
        let cities = world
            .graph
            .nodes_with_label(Label::Opening)
            .filter_map(|o| o.str_prop("city"))
            .map(str::to_string)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let applicants = world
            .applications
            .records()
            .iter()
            .map(|r| r.user.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        ScriptPool {
            world,
            titles,
            cities,
            users: world.profiles.keys().cloned().collect(),
            applicants,
        }
    }

    fn pick<'s, T>(rng: &mut ChaCha8Rng, items: &'s [T]) -> &'s T {
        &items[rng.random_range(0..items.len())]
    }

    /// A title name other than `avoid`.
    fn title(&self, rng: &mut ChaCha8Rng, avoid: Option<&str>) -> String {
        loop {
            let (_, name) = Self::pick(rng, &self.titles);
            if self.titles.len() == 1 || avoid != Some(name.as_str()) {
                return name.clone();
            }
        }
    }

    /// A message of the given template and the predicate its answer meets,
    /// plus the title it is about.
    fn message(
        &self,
        template: &str,
        user: &str,
        rng: &mut ChaCha8Rng,
        avoid: Option<&str>,
    ) -> (String, TargetPredicate, Option<String>) {
        let all = |p: Vec<String>| TargetPredicate {
            all_of: p,
            any_of: vec![],
        };
        let any = |p: Vec<String>| TargetPredicate {
            all_of: vec![],
            any_of: p,
        };
        let city = Self::pick(rng, &self.cities).clone();
        match template {
            "count" => {
                let t = self.title(rng, avoid);
                (
                    format!("how many {t} openings are in {city}"),
                    all(vec![format!("{t} opening"), format!("in {city}")]),
                    Some(t),
                )
            }
            "skills" => {
                let t = self.title(rng, avoid);
                (
                    format!("what skills does a {t} need"),
                    all(vec![format!("skills for {t}")]),
                    Some(t),
                )
            }
            "status" => (
                "what is the status of my application".into(),
                all(vec!["your application for".into()]),
                None,
            ),
            "next" => {
                let t = self.title(rng, avoid);
                (
                    format!("what are the future roles after {t}"),
                    all(vec![format!("next roles after {t}")]),
                    Some(t),
                )
            }
            "become" => {
                let current = &self.world.profiles[user].current_title;
                let reachable: Vec<&String> = self
                    .titles
                    .iter()
                    .filter(|(id, name)| {
                        id != current
                            && avoid != Some(name.as_str())
                            && self.world.graph.weighted_shortest_path(current, id).is_ok()
                    })
                    .map(|(_, name)| name)
                    .collect();
                let t = if reachable.is_empty() {
                    self.title(rng, avoid)
                } else {
                    Self::pick(rng, &reachable).to_string()
                };
                (
                    format!("I want to become a {t}, what skills am I missing and which mentors can help"),
                    all(vec![format!("path to {t}")]),
                    Some(t),
                )
            }
            "compare" => {
                let t = self.title(rng, avoid);
                let at = self.cities.iter().position(|c| *c == city).unwrap_or(0);
                let other = &self.cities[(at + 1) % self.cities.len()];
                (
                    format!("compare {city} and {other} for {t} openings"),
                    any(vec!["more active openings".into(), "tie on active openings".into()]),
                    Some(t),
                )
            }
            "find_skills" => {
                let t = self.title(rng, avoid);
                (
                    format!("find {t} positions in {city} and tell me the skills"),
                    any(vec![format!("skill gap for {t}"), format!("every skill {t} requires")]),
                    Some(t),
                )
            }
            _ => ("I need some help with my career".into(), all(vec![]), None),
        }
    }
}

/// `n` scripted sessions over the world. A `simple_fraction` of them aim at
/// a single-tool answer, the rest at a multi-step one. Each session opens
/// with up to four earlier questions of the same kind on other templates
/// and titles, so only the final message can meet the target.
pub fn synthetic_scripts(world: &SyntheticWorld, n: usize, simple_fraction: f64, seed: u64) -> Vec<DialogueScript> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = ScriptPool::new(world);
    let n_simple = (n as f64 * simple_fraction.clamp(0.0, 1.0)).round() as usize;

    (0..n)
        .map(|i| {
            let family: &[&str] = if i < n_simple {
                &SIMPLE_TEMPLATES
            } else {
                &COMPLEX_TEMPLATES
            };
            let goals = &family[..family.len() - usize::from(i >= n_simple)];
            let template = *ScriptPool::pick(&mut rng, goals);
            let user = if template == "status" && !pool.applicants.is_empty() {
                ScriptPool::pick(&mut rng, &pool.applicants).clone()
            } else {
                ScriptPool::pick(&mut rng, &pool.users).clone()
            };
            let (goal, target, title) = pool.message(template, &user, &mut rng, None);

            let others: Vec<&str> = family.iter().copied().filter(|t| *t != template).collect();
            let earlier = rng.random_range(0..=MAX_EARLIER_TURNS);
            let mut messages: Vec<String> = (0..earlier)
                .map(|_| {
                    let t = *ScriptPool::pick(&mut rng, &others);
                    pool.message(t, &user, &mut rng, title.as_deref()).0
                })
                .collect();
            messages.push(goal);
            DialogueScript {
                id: format!("script-{i:04}"),
                user,
                template: template.to_string(),
                messages,
                target,
                max_rounds: MAX_ROUNDS,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicate_matching() {
        let p = TargetPredicate {
            all_of: vec!["Skills for".into()],
            any_of: vec!["sql".into(), "python".into()],
        };
        assert!(p.is_met("skills for Buyer: SQL, pricing"));
        assert!(!p.is_met("skills for Buyer: pricing"));
        assert!(TargetPredicate::default().is_met("anything"));
    }

    #[test]
    fn script_json_defaults() {
        let s: DialogueScript =
            serde_json::from_str(r#"{"id":"a","user":"u","messages":["hi"],"target":{"all_of":["x"]}}"#).unwrap();
        assert_eq!(s.max_rounds, MAX_ROUNDS);
        assert_eq!(s.template, "");
    }
}
