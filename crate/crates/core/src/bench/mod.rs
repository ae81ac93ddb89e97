//! Synthetic worlds, ranking and career metrics, scripted dialogue
//! simulation and A/B comparison of orchestrator variants.

mod dialogue;
mod metrics;
mod world;

use thiserror::Error;

pub use dialogue::{
    evaluate_rankings, evaluate_transitions, modal_recovery, run_ab, simulate_dialogues, synthetic_scripts, AbDesign,
    AbReport, DialogueRun, DialogueScript, MetricReport, PairwiseTest, RankingMetrics, ScriptOutcome, TargetPredicate,
    TransitionMetrics, VariantReport, MAX_ROUNDS,
};
pub use metrics::{
    frequency_baseline, hit_at_k, hit_real_transitions, map_at_k, ndcg_at_k, welch_t_test, FrequencyModel, Summary,
    TTestResult,
};
pub use world::{
    gen_world, SyntheticWorld, TransitionRecord, WorldConfig, FAVORITE_CLICK_RATE, MODAL_PROBABILITY, OTHER_CLICK_RATE,
    TEST_YEAR, TRAINING_YEARS,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("ranking contains duplicate ids")]
    InvalidRanking,
    #[error("no test-year record for user `{0}`")]
    MissingGroundTruth(String),
    #[error("no training transitions from `{0}`")]
    NoTrainingData(String),
    #[error("need at least two samples per group, got {0}")]
    InsufficientSamples(usize),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Service(#[from] crate::service::ServiceError),
    #[error(transparent)]
    Tuning(#[from] crate::tuning::TuningError),
}
