use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::agent::UserProfile;
use crate::kgraph::{skill_key, KnowledgeGraph, Label, Node, NodeId};
use crate::par::{self, Mode};

/// Highest education ordinal (doctorate).
pub const EDUCATION_SCALE: f64 = 4.0;

const REGIONS: &[(&str, &str)] = &[
    ("seattle", "pacific northwest"),
    ("bellevue", "pacific northwest"),
    ("redmond", "pacific northwest"),
    ("portland", "pacific northwest"),
    ("sunnyvale", "bay area"),
    ("san francisco", "bay area"),
    ("san jose", "bay area"),
    ("mountain view", "bay area"),
    ("san bruno", "bay area"),
    ("bentonville", "northwest arkansas"),
    ("rogers", "northwest arkansas"),
    ("fayetteville", "northwest arkansas"),
    ("hoboken", "new york metro"),
    ("new york", "new york metro"),
    ("jersey city", "new york metro"),
    ("dallas", "texas"),
    ("austin", "texas"),
    ("houston", "texas"),
    ("chicago", "midwest"),
    ("boise", "mountain west"),
];

/// Region of a city from the bundled table.
pub fn region_of(city: &str) -> Option<&'static str> {
    let key = city.trim().to_lowercase();
    REGIONS.iter().find(|(c, _)| *c == key).map(|(_, r)| *r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Skills,
    Location,
    Education,
    TitleAffinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringWeights {
    pub skills: f64,
    pub location: f64,
    pub education: f64,
    pub title_affinity: f64,
    /// Interest strength.
    pub beta: f64,
    /// Dislike penalty.
    pub gamma: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        ScoringWeights {
            skills: 1.0,
            location: 1.0,
            education: 1.0,
            title_affinity: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl ScoringWeights {
    pub const NAMES: [&'static str; 6] = ["skills", "location", "education", "title_affinity", "beta", "gamma"];

    pub fn validate(&self) -> Result<(), ToolError> {
        let all = self.to_vector();
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ToolError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if all[..4].iter().all(|w| *w == 0.0) {
            return Err(ToolError::InvalidWeights(
                "at least one entity weight must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn weight(&self, c: Category) -> f64 {
        match c {
            Category::Skills => self.skills,
            Category::Location => self.location,
            Category::Education => self.education,
            Category::TitleAffinity => self.title_affinity,
        }
    }

    /// `[skills, location, education, title_affinity, beta, gamma]`.
    pub fn to_vector(&self) -> [f64; 6] {
        [
            self.skills,
            self.location,
            self.education,
            self.title_affinity,
            self.beta,
            self.gamma,
        ]
    }

    pub fn from_vector(v: &[f64]) -> Self {
        assert_eq!(v.len(), 6, "scoring weight vector has six entries");
        ScoringWeights {
            skills: v[0],
            location: v[1],
            education: v[2],
            title_affinity: v[3],
            beta: v[4],
            gamma: v[5],
        }
    }

    /// Same interest parameters, entity weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ScoringWeights {
            skills: self.skills * factor,
            location: self.location * factor,
            education: self.education * factor,
            title_affinity: self.title_affinity * factor,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Click,
    Save,
    Like,
    Dislike,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySignals {
    pub clicks: u64,
    pub saves: u64,
    pub likes: u64,
    pub dislikes: u64,
}

impl FamilySignals {
    /// `(clicks + saves + likes − γ·dislikes) / (1 + all signals)`.
    pub fn affinity(&self, gamma: f64) -> f64 {
        let positive = (self.clicks + self.saves + self.likes) as f64;
        let total = positive + self.dislikes as f64;
        (positive - gamma * self.dislikes as f64) / (1.0 + total)
    }
}

/// Per-family interaction counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterestState {
    #[serde(default)]
    pub families: BTreeMap<String, FamilySignals>,
}

impl InterestState {
    pub fn record(&mut self, family: &str, kind: InteractionKind) {
        let s = self.families.entry(family.to_string()).or_default();
        match kind {
            InteractionKind::Click => s.clicks += 1,
            InteractionKind::Save => s.saves += 1,
            InteractionKind::Like => s.likes += 1,
            InteractionKind::Dislike => s.dislikes += 1,
        }
    }

    pub fn signals(&self, family: &str) -> FamilySignals {
        self.families.get(family).copied().unwrap_or_default()
    }

    pub fn affinity(&self, family: &str, gamma: f64) -> f64 {
        self.signals(family).affinity(gamma)
    }
}

/// `base × max(0, 1 + β·a)` with `a` the family affinity.
pub fn interest_adjust(base: f64, family: &str, interest: &InterestState, weights: &ScoringWeights) -> f64 {
    base * (1.0 + weights.beta * interest.affinity(family, weights.gamma)).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredOpening {
    pub opening: NodeId,
    pub title: Option<NodeId>,
    pub family: Option<String>,
    pub city: Option<String>,
    pub posting_date: String,
    pub base: f64,
    pub adjusted: f64,
    pub breakdown: BTreeMap<Category, f64>,
}

/// Ranking order: adjusted score descending, then posting date descending,
/// then id.
pub fn ranking_order(a: &ScoredOpening, b: &ScoredOpening) -> Ordering {
    b.adjusted
        .total_cmp(&a.adjusted)
        .then_with(|| b.posting_date.cmp(&a.posting_date))
        .then_with(|| a.opening.cmp(&b.opening))
}

/// Profile-side state shared by every opening scored for one user.
struct Scorer<'a> {
    graph: &'a KnowledgeGraph,
    skills: BTreeSet<String>,
    city: String,
    region: Option<&'static str>,
    education: i64,
    adjacent: BTreeSet<NodeId>,
}

impl<'a> Scorer<'a> {
    fn new(profile: &UserProfile, graph: &'a KnowledgeGraph) -> Self {
        Scorer {
            graph,
            skills: profile.skills.iter().map(|s| skill_key(s)).collect(),
            city: profile.location.trim().to_lowercase(),
            region: region_of(&profile.location),
            education: profile.education,
            adjacent: graph
                .adjacent_titles(&profile.current_title)
                .unwrap_or_default()
                .into_iter()
                .collect(),
        }
    }

    /// Similarity per category the opening has data for.
    fn breakdown(&self, opening: &Node) -> BTreeMap<Category, f64> {
        let mut sims = BTreeMap::new();
        let required = self.graph.required_skills(opening.id.as_str());
        if !required.is_empty() {
            let inter = required.intersection(&self.skills).count() as f64;
            let union = required.union(&self.skills).count() as f64;
            sims.insert(Category::Skills, inter / union);
        }
        if let Some(city) = opening.str_prop("city") {
            let city = city.trim().to_lowercase();
            let sim = if !self.city.is_empty() && city == self.city {
                1.0
            } else if self.region.is_some() && region_of(&city) == self.region {
                0.25
            } else {
                0.0
            };
            sims.insert(Category::Location, sim);
        }
        if let Some(required_level) = opening.int_prop("education") {
            let gap = (required_level - self.education).abs() as f64;
            sims.insert(Category::Education, (1.0 - gap / EDUCATION_SCALE).max(0.0));
        }
        if let Some(title) = self.graph.title_of_opening(opening.id.as_str()) {
            let sim = if self.adjacent.contains(title) { 1.0 } else { 0.0 };
            sims.insert(Category::TitleAffinity, sim);
        }
        sims
    }

    fn score(&self, opening: &Node, weights: &ScoringWeights) -> Result<(f64, BTreeMap<Category, f64>), ToolError> {
        let sims = self.breakdown(opening);
        if sims.is_empty() {
            return Err(ToolError::Unscoreable(opening.id.to_string()));
        }
        let (num, den) = sims.iter().fold((0.0, 0.0), |(n, d), (c, s)| {
            let w = weights.weight(*c);
            (n + w * s, d + w)
        });
        let base = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
        Ok((base, sims))
    }
}

/// Weighted mean of per-category similarities over the categories the
/// opening has data for.
pub fn entity_match_score(
    profile: &UserProfile,
    opening: &Node,
    graph: &KnowledgeGraph,
    weights: &ScoringWeights,
) -> Result<(f64, BTreeMap<Category, f64>), ToolError> {
    Scorer::new(profile, graph).score(opening, weights)
}

/// Scores and sorts the given openings. Unscoreable or unknown ids are
/// skipped.
pub fn rank_candidates(
    profile: &UserProfile,
    interest: &InterestState,
    graph: &KnowledgeGraph,
    weights: &ScoringWeights,
    candidates: &[NodeId],
    mode: Mode,
) -> Vec<ScoredOpening> {
    let scorer = Scorer::new(profile, graph);
    let scored = par::map(mode, candidates, |id| {
        let opening = graph.node(id.as_str()).filter(|n| n.label == Label::Opening)?;
        let (base, breakdown) = scorer.score(opening, weights).ok()?;
        let family = graph.family_of(id.as_str());
        let adjusted = match &family {
            Some(f) => interest_adjust(base, f, interest, weights),
            None => base,
        };
        Some(ScoredOpening {
            opening: id.clone(),
            title: graph.title_of_opening(id.as_str()).cloned(),
            family,
            city: opening.str_prop("city").map(str::to_string),
            posting_date: opening.str_prop("posting_date").unwrap_or("").to_string(),
            base,
            adjusted,
            breakdown,
        })
    });
    let mut ranked: Vec<ScoredOpening> = scored.into_iter().flatten().collect();
    ranked.sort_by(ranking_order);
    ranked
}

/// Active openings of the titles adjacent to the current one, optionally
/// with the current title's own openings; deduplicated, most recent first
/// per title.
pub fn candidate_pool(
    profile: &UserProfile,
    graph: &KnowledgeGraph,
    include_current_title: bool,
) -> Result<Vec<NodeId>, ToolError> {
    let mut titles = graph.adjacent_titles(&profile.current_title)?;
    if include_current_title {
        titles.insert(0, NodeId::new(profile.current_title.clone()));
    }
    let mut seen = BTreeSet::new();
    let mut pool = Vec::new();
    for t in &titles {
        for o in graph.openings_for_title(t.as_str(), true, usize::MAX)? {
            if seen.insert(o.id.clone()) {
                pool.push(o.id.clone());
            }
        }
    }
    Ok(pool)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecommendOptions {
    pub k: usize,
    pub include_current_title: bool,
    pub mode: Mode,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        RecommendOptions {
            k: 20,
            include_current_title: true,
            mode: Mode::default(),
        }
    }
}

/// Top-`k` openings for the profile's neighborhood in the title graph.
pub fn recommend_jobs(
    profile: &UserProfile,
    interest: &InterestState,
    graph: &KnowledgeGraph,
    weights: &ScoringWeights,
    options: &RecommendOptions,
) -> Result<Vec<ScoredOpening>, ToolError> {
    let pool = candidate_pool(profile, graph, options.include_current_title)?;
    let mut ranked = rank_candidates(profile, interest, graph, weights, &pool, options.mode);
    ranked.truncate(options.k);
    Ok(ranked)
}
