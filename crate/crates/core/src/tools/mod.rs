//! Recommendation tools: opening scoring with interest adjustment, career
//! paths, graph templates, text-to-query and application status.

mod applications;
mod career;
mod scoring;
mod suite;

use thiserror::Error;

use crate::kgraph::{GraphError, NodeId};
use crate::lm::LmError;

pub use applications::{format_ms, ApplicationRecord, ApplicationStore, Stage};
pub use career::{career_growth, career_path_to, hop_desirability, CareerPath, GrowthConfig, Hop};
pub use scoring::{
    candidate_pool, entity_match_score, interest_adjust, rank_candidates, ranking_order, recommend_jobs, region_of,
    Category, FamilySignals, InteractionKind, InterestState, RecommendOptions, ScoredOpening, ScoringWeights,
    EDUCATION_SCALE,
};
pub use suite::{builtin_registry, schema_description, select_and_fill_template, text_to_query, ToolSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("opening `{0}` has no scoreable properties")]
    Unscoreable(String),
    #[error("no career path from {from} to {to}")]
    UnreachableDestination { from: NodeId, to: NodeId },
    #[error("no applications for user `{0}`")]
    NoApplications(String),
    #[error("could not turn `{0}` into a graph query")]
    QueryGenerationFailed(String),
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: String, reason: String },
    #[error("missing argument `{0}`")]
    MissingArgument(String),
    #[error(transparent)]
    Backend(#[from] LmError),
    #[error("invalid scoring weights: {0}")]
    InvalidWeights(String),
    #[error("invalid fixture: {0}")]
    InvalidFixture(String),
}
