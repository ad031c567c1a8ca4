//! Trajectory scorers: the learned linear model, the environment oracle,
//! an LLM judge, a remote HTTP scorer and the composite penalty wrapper.

pub mod benchmark;
pub mod composite;
pub mod features;
pub mod judge;
pub mod model;
pub mod remote;

pub use composite::{composite_score, CompositeScorer};
pub use features::{FeatureVector, Featurizer, DEFAULT_DIM, RECIPE_VERSION};
pub use judge::{parse_judge_score, JudgeScore, JudgeScorer};
pub use model::{
    eval_pairwise_accuracy, load_pairs, read_pairs, train, write_pairs, LinearRewardModel, PreferencePair,
    RewardParams, TrainConfig, TrainOutcome, TrainTarget,
};
pub use remote::RemoteScorer;

use thiserror::Error;

use crate::remote::RemoteError;
use crate::trajectory::{EpisodeInfo, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("model dimension {model} does not match feature dimension {features}")]
    DimensionMismatch { model: usize, features: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("price penalty requested but the episode has no purchase price")]
    MissingPrice,
    #[error("no <number> score found in judge reply: {0}")]
    ScoreParse(String),
    #[error("scoring contract violated: {0}")]
    Contract(String),
    #[error("oracle outcome unavailable for this environment state")]
    NoOracle,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed model or dataset: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

/// Maps a complete trajectory to a scalar. Higher is better; only scores
/// from the same scorer are comparable.
pub trait Scorer: Send + Sync {
    fn name(&self) -> String;

    fn score(&self, trajectory: &Trajectory, info: &EpisodeInfo) -> Result<f64, RewardError>;
}

/// Ground-truth environment score.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn score(&self, _trajectory: &Trajectory, info: &EpisodeInfo) -> Result<f64, RewardError> {
        info.outcome.map(|o| o.oracle_reward).ok_or(RewardError::NoOracle)
    }
}

/// Scorer from a closure, for tests and ad hoc experiments.
pub struct FnScorer<F> {
    name: String,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&Trajectory, &EpisodeInfo) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&Trajectory, &EpisodeInfo) -> f64 + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn score(&self, trajectory: &Trajectory, info: &EpisodeInfo) -> Result<f64, RewardError> {
        Ok((self.f)(trajectory, info))
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn score(&self, trajectory: &Trajectory, info: &EpisodeInfo) -> Result<f64, RewardError> {
        (**self).score(trajectory, info)
    }
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn score(&self, trajectory: &Trajectory, info: &EpisodeInfo) -> Result<f64, RewardError> {
        (**self).score(trajectory, info)
    }
}

/// Request body of the remote scoring contract.
pub fn trajectory_payload(trajectory: &Trajectory) -> serde_json::Value {
    let steps: Vec<serde_json::Value> = trajectory
        .steps
        .iter()
        .map(|s| serde_json::json!({"a": s.action.as_str(), "o": s.observation.text}))
        .collect();
    serde_json::json!({
        "instruction": trajectory.instruction.text,
        "o0": trajectory.initial_observation.text,
        "steps": steps,
    })
}
