//! Click-through-rate replay and the black-box tuner for scoring weights.

mod bayes;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::UserProfile;
use crate::kgraph::{KnowledgeGraph, NodeId};
use crate::par::{self, Mode};
use crate::tools::{rank_candidates, InterestState, ScoringWeights, ToolError};

pub use bayes::{
    compare_to_random, optimize, optimize_in, random_search, Comparison, Optimum, ParamSpace, TrialRecord,
};

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("click log has no impressions")]
    EmptyLog,
    #[error("impression {index} lists clicked `{opening}` that was not shown")]
    ClickedNotShown { index: usize, opening: NodeId },
    #[error("no profile for user `{0}`")]
    UnknownUser(String),
    #[error("click log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("every trial failed")]
    AllTrialsFailed,
}

pub type Result<T, E = TuningError> = std::result::Result<T, E>;

/// One logged impression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub user: String,
    /// In the order they were shown.
    pub shown: Vec<NodeId>,
    pub clicked: Vec<NodeId>,
    pub ts: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClickLog {
    records: Vec<ClickRecord>,
}

impl ClickLog {
    pub fn new(records: Vec<ClickRecord>) -> Result<Self> {
        for (index, r) in records.iter().enumerate() {
            let shown: BTreeSet<&NodeId> = r.shown.iter().collect();
            if let Some(c) = r.clicked.iter().find(|c| !shown.contains(c)) {
                return Err(TuningError::ClickedNotShown {
                    index,
                    opening: c.clone(),
                });
            }
        }
        Ok(ClickLog { records })
    }

    pub fn records(&self) -> &[ClickRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON record per line; blank lines are skipped.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| TuningError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::new(records)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// What a replay needs: the graph, every logged user's profile and interest
/// state, and the log itself.
#[derive(Clone, Copy, Debug)]
pub struct ReplayContext<'a> {
    pub graph: &'a KnowledgeGraph,
    pub profiles: &'a BTreeMap<String, UserProfile>,
    pub interests: &'a BTreeMap<String, InterestState>,
    pub log: &'a ClickLog,
    pub mode: Mode,
}

/// Fraction of impressions where re-ranking the shown openings under
/// `weights` puts at least one clicked opening in the top `k`.
pub fn estimate_ctr(weights: &ScoringWeights, replay: &ReplayContext<'_>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(TuningError::InvalidArgument("k must be positive".into()));
    }
    weights.validate()?;
    let records = replay.log.records();
    if records.is_empty() {
        return Err(TuningError::EmptyLog);
    }
    if let Some(r) = records.iter().find(|r| !replay.profiles.contains_key(&r.user)) {
        return Err(TuningError::UnknownUser(r.user.clone()));
    }
    let neutral = InterestState::default();
    let hits = par::sum(replay.mode, records, |r| {
        if r.clicked.is_empty() {
            return 0;
        }
        let profile = &replay.profiles[&r.user];
        let interest = replay.interests.get(&r.user).unwrap_or(&neutral);
        let ranked = rank_candidates(profile, interest, replay.graph, weights, &r.shown, Mode::Sequential);
        u64::from(ranked.iter().take(k).any(|s| r.clicked.contains(&s.opening)))
    });
    Ok(hits as f64 / records.len() as f64)
}

/// [`estimate_ctr`] as a function of the six-entry weight vector.
pub fn ctr_objective<'a>(replay: ReplayContext<'a>, k: usize) -> impl Fn(&[f64]) -> Result<f64> + Sync + 'a {
    move |v| estimate_ctr(&ScoringWeights::from_vector(v), &replay, k)
}
