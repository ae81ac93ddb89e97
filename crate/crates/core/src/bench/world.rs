use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::agent::UserProfile;
use crate::kgraph::{skill_key, KnowledgeGraph, Label, Record, Relation, Value};
use crate::par::Mode;
use crate::service::{Clock, ConversationStore, InMemoryProfiles, InProcessBus, ServiceDeps};
use crate::tools::{ApplicationRecord, ApplicationStore, InteractionKind, InterestState, Stage, ToolSettings};
use crate::tuning::{ClickLog, ClickRecord, ReplayContext};

/// Year whose transitions are held out for evaluation.
pub const TEST_YEAR: u16 = 2024;
pub const TRAINING_YEARS: [u16; 2] = [2022, 2023];
/// Probability of each title's planted most likely next title.
pub const MODAL_PROBABILITY: f64 = 0.6;
pub const FAVORITE_CLICK_RATE: f64 = 0.8;
pub const OTHER_CLICK_RATE: f64 = 0.1;

const TITLE_NAMES: [&str; 40] = [
    "Cashier",
    "Stocker",
    "Buyer",
    "Planner",
    "Auditor",
    "Recruiter",
    "Pharmacist",
    "Optician",
    "Baker",
    "Butcher",
    "Courier",
    "Dispatcher",
    "Electrician",
    "Mechanic",
    "Welder",
    "Chemist",
    "Actuary",
    "Economist",
    "Statistician",
    "Librarian",
    "Paralegal",
    "Copywriter",
    "Illustrator",
    "Animator",
    "Photographer",
    "Translator",
    "Surveyor",
    "Geologist",
    "Architect",
    "Carpenter",
    "Plumber",
    "Machinist",
    "Estimator",
    "Scheduler",
    "Controller",
    "Treasurer",
    "Underwriter",
    "Adjuster",
    "Appraiser",
    "Broker",
];

const SKILL_NAMES: [&str; 30] = [
    "forecasting",
    "sql",
    "python",
    "negotiation",
    "inventory control",
    "customer service",
    "scheduling",
    "budgeting",
    "coaching",
    "data visualization",
    "statistics",
    "machine learning",
    "java",
    "merchandising",
    "supply chain",
    "pricing",
    "visual design",
    "user research",
    "copywriting",
    "accounting",
    "compliance",
    "safety",
    "logistics",
    "vendor management",
    "cloud computing",
    "project management",
    "public speaking",
    "spreadsheets",
    "quality assurance",
    "payroll",
];

const FAMILY_NAMES: [&str; 8] = [
    "Retail",
    "Technology",
    "Design",
    "eCommerce",
    "Merchandising",
    "Management",
    "Logistics",
    "Finance",
];

const CITIES: [&str; 10] = [
    "Seattle",
    "Bellevue",
    "Sunnyvale",
    "San Bruno",
    "Bentonville",
    "Rogers",
    "Hoboken",
    "Dallas",
    "Austin",
    "Chicago",
];

const MENTOR_NAMES: [&str; 12] = [
    "Priya", "Chen", "Olivia", "Diego", "Grace", "Amara", "Tomas", "Mei", "Kofi", "Lena", "Ravi", "Sofia",
];

fn numbered(list: &[&str], i: usize) -> String {
    let base = list[i % list.len()];
    match i / list.len() {
        0 => base.to_string(),
        round => format!("{base} {}", round + 1),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub titles: usize,
    pub users: usize,
    pub families: usize,
    pub skills: usize,
    pub openings_per_title: usize,
    pub mentors: usize,
    /// Transition records per user; the last one falls in [`TEST_YEAR`].
    pub records_per_user: usize,
    pub impressions_per_user: usize,
    pub shown_per_impression: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            titles: 20,
            users: 200,
            families: 4,
            skills: 24,
            openings_per_title: 4,
            mentors: 8,
            records_per_user: 4,
            impressions_per_user: 20,
            shown_per_impression: 20,
        }
    }
}

impl WorldConfig {
    fn validate(&self) -> Result<(), BenchError> {
        let sizes = [
            ("titles", self.titles),
            ("users", self.users),
            ("families", self.families),
            ("skills", self.skills),
            ("openings_per_title", self.openings_per_title),
            ("mentors", self.mentors),
            ("records_per_user", self.records_per_user),
            ("impressions_per_user", self.impressions_per_user),
            ("shown_per_impression", self.shown_per_impression),
        ];
        match sizes.iter().find(|(_, n)| *n == 0) {
            Some((name, _)) => Err(BenchError::ConfigInvalid(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }
}

/// One observed job change.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub user: String,
    pub from: String,
    pub to: String,
    pub year: u16,
}

/// Generator parameters and planted ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct WorldMeta {
    seed: u64,
    config: WorldConfig,
    favorites: BTreeMap<String, String>,
    modal: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub config: WorldConfig,
    pub graph: Arc<KnowledgeGraph>,
    pub profiles: BTreeMap<String, UserProfile>,
    pub interests: BTreeMap<String, InterestState>,
    pub clicks: ClickLog,
    pub transitions: Vec<TransitionRecord>,
    pub applications: Arc<ApplicationStore>,
    /// Latent favorite job family per user.
    pub favorites: BTreeMap<String, String>,
    /// Planted most likely next title per title.
    pub modal: BTreeMap<String, String>,
}

struct TitleSpec {
    id: String,
    family: usize,
    skills: Vec<usize>,
    /// `(target index, probability)`, modal first.
    next: Vec<(usize, f64)>,
}

/// Builds a deterministic world from `seed`.
pub fn gen_world(seed: u64, config: WorldConfig) -> Result<SyntheticWorld, BenchError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let families: Vec<String> = (0..config.families).map(|i| numbered(&FAMILY_NAMES, i)).collect();
    let skills: Vec<String> = (0..config.skills).map(|i| numbered(&SKILL_NAMES, i)).collect();
    let cities = &CITIES[..CITIES.len().min(4 + config.titles / 4)];

    let titles: Vec<TitleSpec> = (0..config.titles)
        .map(|i| {
            let family = i % config.families;
            let n_skills = rng.random_range(3..=5).min(config.skills);
            let skills = sample(&mut rng, config.skills, n_skills).into_vec();
            let degree = rng.random_range(3..=4).min(config.titles - 1);
            let others: Vec<usize> = (0..config.titles).filter(|&j| j != i).collect();
            let picks = sample(&mut rng, others.len(), degree).into_vec();
            let targets: Vec<usize> = picks.iter().map(|&p| others[p]).collect();
            let next = targets
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let p = match (k, degree) {
                        (_, 1) => 1.0,
                        (0, _) => MODAL_PROBABILITY,
                        _ => (1.0 - MODAL_PROBABILITY) / (degree - 1) as f64,
                    };
                    (t, p)
                })
                .collect();
            TitleSpec {
                id: format!("t:{:03}", i),
                family,
                skills,
                next,
            }
        })
        .collect();

    let mut recs = Vec::new();
    for (i, f) in families.iter().enumerate() {
        recs.push(Record::node(
            &format!("f:{i:02}"),
            Label::JobFamily,
            [("name", Value::from(f.as_str()))],
        ));
    }
    for s in &skills {
        let resources = format!("Intro to {s}|{s} in practice");
        recs.push(Record::node(
            &format!("s:{}", skill_key(s)),
            Label::Skill,
            [
                ("name", Value::from(s.as_str())),
                ("resources", Value::from(resources.as_str())),
            ],
        ));
    }
    let mut modal = BTreeMap::new();
    for (i, t) in titles.iter().enumerate() {
        recs.push(Record::node(
            &t.id,
            Label::JobTitle,
            [("title", Value::from(numbered(&TITLE_NAMES, i).as_str()))],
        ));
        recs.push(Record::edge(
            &t.id,
            &format!("f:{:02}", t.family),
            Relation::InFamily,
            1.0,
        ));
        for &s in &t.skills {
            recs.push(Record::edge(
                &t.id,
                &format!("s:{}", skill_key(&skills[s])),
                Relation::RequiresSkill,
                1.0,
            ));
        }
        for &(to, p) in &t.next {
            recs.push(Record::edge(&t.id, &titles[to].id, Relation::TransitionsTo, -p.ln()));
        }
        if let Some(&(to, _)) = t.next.first() {
            modal.insert(t.id.clone(), titles[to].id.clone());
        }
    }
    let mut openings = Vec::new();
    for (i, t) in titles.iter().enumerate() {
        for j in 0..config.openings_per_title {
            let id = format!("o:{i:03}-{j}");
            let active = rng.random_bool(0.9);
            let date = format!("2024-{:02}-{:02}", rng.random_range(1..=12), rng.random_range(1..=28));
            let city = cities[rng.random_range(0..cities.len())];
            recs.push(Record::node(
                &id,
                Label::Opening,
                [
                    ("posting_date", Value::from(date.as_str())),
                    ("active", Value::Bool(active)),
                    ("city", Value::from(city)),
                    ("job_family", Value::from(families[t.family].as_str())),
                    ("education", Value::Int(rng.random_range(0..=4))),
                ],
            ));
            recs.push(Record::edge(&t.id, &id, Relation::HasOpening, 1.0));
            for &s in &t.skills {
                if rng.random_bool(0.8) {
                    recs.push(Record::edge(
                        &id,
                        &format!("s:{}", skill_key(&skills[s])),
                        Relation::RequiresSkill,
                        1.0,
                    ));
                }
            }
            if active {
                openings.push((id, t.family));
            }
        }
    }
    for m in 0..config.mentors {
        let id = format!("m:{m:03}");
        recs.push(Record::node(
            &id,
            Label::Associate,
            [
                ("name", Value::from(numbered(&MENTOR_NAMES, m).as_str())),
                ("mentor", Value::Bool(true)),
            ],
        ));
        for s in sample(&mut rng, config.skills, 3.min(config.skills)) {
            recs.push(Record::edge(
                &id,
                &format!("s:{}", skill_key(&skills[s])),
                Relation::HasSkill,
                1.0,
            ));
        }
    }
    let graph = KnowledgeGraph::from_records(recs).map_err(|e| BenchError::ConfigInvalid(e.to_string()))?;

    let mut profiles = BTreeMap::new();
    let mut interests = BTreeMap::new();
    let mut favorites = BTreeMap::new();
    let mut transitions = Vec::new();
    let mut clicks = Vec::new();
    let mut applications = Vec::new();
    for u in 0..config.users {
        let user = format!("u:{u:04}");
        let mut at = rng.random_range(0..config.titles);
        let n = config.records_per_user;
        for r in 0..n {
            let year = if r + 1 == n {
                TEST_YEAR
            } else {
                TRAINING_YEARS[(r * TRAINING_YEARS.len()) / n.max(2)]
            };
            if r + 1 == n {
                // the profile reflects where the user stood before the held-out move
                let spec = &titles[at];
                let mut held: BTreeSet<String> = spec
                    .skills
                    .iter()
                    .filter(|_| rng.random_bool(0.5))
                    .map(|&s| skills[s].clone())
                    .collect();
                held.insert(skills[rng.random_range(0..config.skills)].clone());
                profiles.insert(
                    user.clone(),
                    UserProfile {
                        user_id: user.clone(),
                        current_title: spec.id.clone(),
                        skills: held,
                        location: cities[rng.random_range(0..cities.len())].to_string(),
                        education: rng.random_range(0..=4),
                        interests: vec![],
                    },
                );
            }
            let Some(next) = draw(&titles[at].next, &mut rng) else {
                break;
            };
            transitions.push(TransitionRecord {
                user: user.clone(),
                from: titles[at].id.clone(),
                to: titles[next].id.clone(),
                year,
            });
            at = next;
        }
        if !profiles.contains_key(&user) {
            profiles.insert(
                user.clone(),
                UserProfile {
                    user_id: user.clone(),
                    current_title: titles[at].id.clone(),
                    skills: BTreeSet::new(),
                    location: cities[0].to_string(),
                    education: 2,
                    interests: vec![],
                },
            );
        }

        let favorite = rng.random_range(0..config.families);
        favorites.insert(user.clone(), families[favorite].clone());
        let mut interest = InterestState::default();
        for _ in 0..rng.random_range(1..=3) {
            interest.record(&families[favorite], InteractionKind::Save);
        }
        if rng.random_bool(0.3) {
            interest.record(&families[rng.random_range(0..config.families)], InteractionKind::Click);
        }
        interests.insert(user.clone(), interest);

        let shown_n = config.shown_per_impression.min(openings.len());
        for j in 0..config.impressions_per_user {
            let shown: Vec<usize> = sample(&mut rng, openings.len(), shown_n).into_vec();
            let clicked = shown
                .iter()
                .filter(|&&o| {
                    let p = if openings[o].1 == favorite {
                        FAVORITE_CLICK_RATE
                    } else {
                        OTHER_CLICK_RATE
                    };
                    rng.random_bool(p)
                })
                .map(|&o| openings[o].0.as_str().into())
                .collect();
            clicks.push(ClickRecord {
                user: user.clone(),
                shown: shown.iter().map(|&o| openings[o].0.as_str().into()).collect(),
                clicked,
                ts: 1_704_067_200_000 + (u * config.impressions_per_user + j) as u64 * 60_000,
            });
        }

        if !openings.is_empty() && rng.random_bool(0.6) {
            for _ in 0..rng.random_range(1..=2) {
                let stage = [
                    Stage::Submitted,
                    Stage::Screening,
                    Stage::Interview,
                    Stage::Offer,
                    Stage::Rejected,
                ][rng.random_range(0..5)];
                let updated_ms = 1_704_067_200_000 + rng.random_range(0..31_536_000_000u64);
                applications.push(ApplicationRecord {
                    user: user.clone(),
                    opening: openings[rng.random_range(0..openings.len())].0.clone(),
                    stage,
                    updated_ms,
                    interview_ms: (stage == Stage::Interview).then_some(updated_ms + 7 * 86_400_000),
                });
            }
        }
    }

    Ok(SyntheticWorld {
        seed,
        config,
        graph: Arc::new(graph),
        profiles,
        interests,
        clicks: ClickLog::new(clicks).expect("clicks are drawn from the shown set"),
        transitions,
        applications: Arc::new(ApplicationStore::new(applications).expect("interview records carry a time")),
        favorites,
        modal,
    })
}

fn draw(next: &[(usize, f64)], rng: &mut ChaCha8Rng) -> Option<usize> {
    let mut u = rng.random::<f64>();
    for &(t, p) in next {
        if u < p {
            return Some(t);
        }
        u -= p;
    }
    next.last().map(|&(t, _)| t)
}

const FILES: [&str; 7] = [
    "world.json",
    "graph.jsonl",
    "profiles.json",
    "interests.json",
    "clicks.jsonl",
    "transitions.json",
    "applications.json",
];

impl SyntheticWorld {
    pub fn training(&self) -> Vec<TransitionRecord> {
        self.transitions
            .iter()
            .filter(|r| r.year < TEST_YEAR)
            .cloned()
            .collect()
    }

    pub fn test(&self) -> Vec<TransitionRecord> {
        self.transitions
            .iter()
            .filter(|r| r.year == TEST_YEAR)
            .cloned()
            .collect()
    }

    pub fn replay(&self, mode: Mode) -> ReplayContext<'_> {
        ReplayContext {
            graph: &self.graph,
            profiles: &self.profiles,
            interests: &self.interests,
            log: &self.clicks,
            mode,
        }
    }

    pub fn settings(&self) -> ToolSettings {
        ToolSettings {
            applications: self.applications.clone(),
            ..ToolSettings::default()
        }
    }

    pub fn service_deps(&self, clock: Arc<dyn Clock>, store: Arc<dyn ConversationStore>) -> ServiceDeps {
        ServiceDeps {
            graph: self.graph.clone(),
            settings: self.settings(),
            profiles: Arc::new(InMemoryProfiles::new(self.profiles.values().cloned())),
            store,
            clock,
            bus: Arc::new(InProcessBus::new()),
        }
    }

    /// File name to contents, as written by [`SyntheticWorld::save`].
    pub fn files(&self) -> BTreeMap<&'static str, Vec<u8>> {
        let meta = WorldMeta {
            seed: self.seed,
            config: self.config,
            favorites: self.favorites.clone(),
            modal: self.modal.clone(),
        };
        let mut graph = Vec::new();
        self.graph.write_jsonl(&mut graph).expect("writing to memory");
        let mut clicks = Vec::new();
        self.clicks.write_jsonl(&mut clicks).expect("writing to memory");
        let profiles: Vec<&UserProfile> = self.profiles.values().collect();
        let contents = [
            pretty(&meta),
            graph,
            pretty(&profiles),
            pretty(&self.interests),
            clicks,
            pretty(&self.transitions),
            pretty(&self.applications.records()),
        ];
        FILES.into_iter().zip(contents).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), BenchError> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.files() {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, BenchError> {
        let read = |name: &str| fs::read(dir.join(name));
        let parse = |name: &str, e: &dyn std::fmt::Display| BenchError::Parse(format!("{name}: {e}"));
        let meta: WorldMeta = serde_json::from_slice(&read("world.json")?).map_err(|e| parse("world.json", &e))?;
        let graph = KnowledgeGraph::load_jsonl(&read("graph.jsonl")?[..]).map_err(|e| parse("graph.jsonl", &e))?;
        let profiles: Vec<UserProfile> =
            serde_json::from_slice(&read("profiles.json")?).map_err(|e| parse("profiles.json", &e))?;
        let interests = serde_json::from_slice(&read("interests.json")?).map_err(|e| parse("interests.json", &e))?;
        let clicks = ClickLog::read_jsonl(&read("clicks.jsonl")?[..]).map_err(|e| parse("clicks.jsonl", &e))?;
        let transitions =
            serde_json::from_slice(&read("transitions.json")?).map_err(|e| parse("transitions.json", &e))?;
        let applications =
            serde_json::from_slice(&read("applications.json")?).map_err(|e| parse("applications.json", &e))?;
        let applications = ApplicationStore::new(applications).map_err(|e| parse("applications.json", &e))?;
        Ok(SyntheticWorld {
            seed: meta.seed,
            config: meta.config,
            graph: Arc::new(graph),
            profiles: profiles.into_iter().map(|p| (p.user_id.clone(), p)).collect(),
            interests,
            clicks,
            transitions,
            applications: Arc::new(applications),
            favorites: meta.favorites,
            modal: meta.modal,
        })
    }
}

/// Pretty JSON with a trailing newline.
fn pretty<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("world data serializes");
    out.push(b'\n');
    out
}
