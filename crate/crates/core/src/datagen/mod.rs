//! Preference-data pipeline: synthesize instructions, collect rollouts,
//! refine each instruction to what its rollout achieved, build a verified
//! negative per positive and write the pairs as JSONL.
//!
//! Every stage runs either against a chat endpoint or in a deterministic
//! mode that needs no network, which is what the tests use.

mod dataset;
mod negative;
mod synth;

pub use dataset::{build_dataset, DatasetItem, DatasetSummary};
pub use negative::{is_negative_of, make_negative, perturb_at, settle, Negative, NegativeKind, NegativeStrategy, StrategyMix};
pub use synth::{synthesize_game24, synthesize_shop, Game24Source, SynthesisOutput};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::shop::{Price, ShopEnv, UserGoal};
use crate::env::Game24Env;
use crate::planners::{rollout, Budget, PlanError};
use crate::policy::prompt::{self, vars, PromptTemplate};
use crate::policy::{ChatClient, Policy};
use crate::remote::RemoteError;
use crate::trajectory::{Environment, Instruction, Trajectory};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error("no acceptable negative after {attempts} attempt(s)")]
    NegativeConstructionFailed { attempts: usize },
    #[error("refinement failed: {0}")]
    Refinement(String),
    #[error("invalid datagen input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Llm,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstruction {
    pub id: String,
    pub text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedInstruction {
    pub text: String,
    pub source_id: String,
}

/// A synthesized instruction with the environment that poses it.
#[derive(Debug, Clone)]
pub struct Synthesized<E> {
    pub raw: RawInstruction,
    pub env: E,
}

/// Where instructions and refinements come from.
#[derive(Debug, Clone)]
pub enum Generator {
    Template,
    Llm(Arc<ChatClient>),
}

/// Environments the pipeline can refine.
pub trait TaskEnv: Environment {
    /// The instruction is the task itself and is never rewritten.
    const FIXED_INSTRUCTION: bool = false;

    /// The same task posed with different instruction text.
    fn with_instruction_text(&self, text: &str) -> Result<Self, DatagenError>;

    /// A task whose instruction states exactly what the terminal `traj`
    /// achieved.
    fn refined_to(&self, traj: &Trajectory) -> Result<Self, DatagenError>;
}

impl TaskEnv for Game24Env {
    const FIXED_INSTRUCTION: bool = true;

    fn with_instruction_text(&self, text: &str) -> Result<Self, DatagenError> {
        let instruction =
            Instruction::new(self.instruction().id.clone(), text).map_err(|e| DatagenError::Invalid(e.to_string()))?;
        Ok(Game24Env::with_instruction(*self.puzzle(), instruction))
    }

    fn refined_to(&self, _traj: &Trajectory) -> Result<Self, DatagenError> {
        Ok(self.clone())
    }
}

impl TaskEnv for ShopEnv {
    fn with_instruction_text(&self, text: &str) -> Result<Self, DatagenError> {
        let instruction =
            Instruction::new(self.instruction().id.clone(), text).map_err(|e| DatagenError::Invalid(e.to_string()))?;
        ShopEnv::new(self.catalog().clone(), self.goal().clone(), instruction)
            .map_err(|e| DatagenError::Invalid(e.to_string()))
    }

    fn refined_to(&self, traj: &Trajectory) -> Result<Self, DatagenError> {
        let end = self.replay(traj);
        let Some((id, chosen)) = end.state().purchased() else {
            return Err(DatagenError::Refinement("the trajectory bought nothing".into()));
        };
        let product = self
            .catalog()
            .get(id)
            .ok_or_else(|| DatagenError::Refinement(format!("unknown product {id}")))?;
        let goal = UserGoal {
            required_attributes: product.attributes.clone(),
            required_options: chosen.clone(),
            price_cap: Some(Price((product.price.0 / 1000 + 1) * 1000)),
        };
        let instruction = Instruction::new(self.instruction().id.clone(), goal.instruction_text())
            .map_err(|e| DatagenError::Invalid(e.to_string()))?;
        ShopEnv::new(self.catalog().clone(), goal, instruction).map_err(|e| DatagenError::Refinement(e.to_string()))
    }
}

/// One collected rollout.
#[derive(Debug, Clone)]
pub struct Collected<E> {
    pub raw: RawInstruction,
    pub env: E,
    pub trajectory: Trajectory,
}

/// Collection results in input order, plus the number of failed rollouts.
pub struct Collection<E> {
    pub items: Vec<Collected<E>>,
    pub failures: usize,
}

/// `repeats` temperature-1 rollouts per instruction. Rollout `j` of
/// instruction `i` uses seed `derive(seed, "collect", i * repeats + j)`.
/// Failed or invalid rollouts are skipped and counted.
pub fn collect_trajectories<E: Environment>(
    instructions: &[Synthesized<E>],
    policy: &dyn Policy,
    budget: &Budget,
    repeats: usize,
    seed: u64,
) -> Collection<E> {
    let jobs: Vec<(usize, usize)> = (0..instructions.len())
        .flat_map(|i| (0..repeats).map(move |j| (i, j)))
        .collect();
    let results: Vec<Option<Collected<E>>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let item = &instructions[i];
            let s = crate::seed::derive(seed, "collect", (i * repeats + j) as u64);
            match rollout(&item.env, policy, budget, 1.0, s) {
                Ok((_, trajectory)) if trajectory.validate_with_limit(budget.max_actions_per_trajectory).is_ok() => {
                    Some(Collected {
                        raw: item.raw.clone(),
                        env: item.env.clone(),
                        trajectory,
                    })
                }
                Ok(_) => None,
                Err(e) => {
                    log::warn!("rollout for {} failed: {e}", item.raw.id);
                    None
                }
            }
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    Collection {
        items: results.into_iter().flatten().collect(),
        failures,
    }
}

/// A refined task with the positive trajectory replayed under it.
#[derive(Debug, Clone)]
pub struct Refined<E> {
    pub instruction: RefinedInstruction,
    pub env: E,
    pub positive: Trajectory,
    pub tokens: u64,
}

/// Rewrites the instruction of a terminal trajectory. Template mode, and
/// any task with a fixed instruction, uses [`TaskEnv::refined_to`]; LLM
/// mode asks the endpoint for new text and keeps the task's ground truth.
pub fn refine_instruction<E: TaskEnv>(
    raw: &RawInstruction,
    env: &E,
    traj: &Trajectory,
    generator: &Generator,
) -> Result<Refined<E>, DatagenError> {
    if !env.replay(traj).is_terminal() {
        return Err(DatagenError::Refinement("trajectory is not terminal".into()));
    }
    let (refined_env, tokens) = match generator {
        _ if E::FIXED_INSTRUCTION => (env.refined_to(traj)?, 0),
        Generator::Template => (env.refined_to(traj)?, 0),
        Generator::Llm(client) => {
            let template = PromptTemplate::builtin(prompt::REFINE_SHOP);
            let messages = template.render(&vars([
                ("instruction", raw.text.clone()),
                ("history", traj.transcript()),
            ]));
            let completion = client.complete(&messages, 0.0, None)?;
            let text = completion.text.trim();
            if text.is_empty() {
                return Err(DatagenError::Refinement("empty refinement".into()));
            }
            (env.with_instruction_text(text)?, completion.tokens_or_estimate(&messages))
        }
    };
    let positive = settle(&refined_env, traj);
    Ok(Refined {
        instruction: RefinedInstruction {
            text: refined_env.instruction().text.clone(),
            source_id: raw.id.clone(),
        },
        env: refined_env,
        positive,
        tokens,
    })
}

/// Counts from one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub instructions_proposed: usize,
    /// LLM replies that did not yield an instruction.
    pub instruction_failures: usize,
    pub repeats: usize,
    pub trajectories_collected: usize,
    pub collection_failures: usize,
    pub refined: usize,
    pub refinement_failures: usize,
    pub negative_failures: usize,
    pub duplicates: usize,
    pub validation_rejects: BTreeMap<String, usize>,
    pub pairs_emitted: usize,
    pub negatives_by_kind: BTreeMap<String, usize>,
    /// Token usage in LLM mode; the server's count or characters / 4.
    pub tokens: u64,
}

impl SynthesisReport {
    pub fn rejects(&self) -> usize {
        self.validation_rejects.values().sum()
    }

    /// Checks that every collected trajectory is accounted for.
    pub fn check_conservation(&self) -> Result<(), String> {
        if self.instructions_proposed * self.repeats != self.trajectories_collected + self.collection_failures {
            return Err(format!(
                "{} instructions x {} repeats != {} collected + {} failed",
                self.instructions_proposed, self.repeats, self.trajectories_collected, self.collection_failures
            ));
        }
        if self.trajectories_collected != self.refined + self.refinement_failures {
            return Err(format!(
                "{} collected != {} refined + {} refinement failures",
                self.trajectories_collected, self.refined, self.refinement_failures
            ));
        }
        let lost = self.refinement_failures + self.negative_failures + self.duplicates + self.rejects();
        if self.pairs_emitted + lost != self.trajectories_collected {
            return Err(format!(
                "{} pairs + {lost} dropped != {} collected",
                self.pairs_emitted, self.trajectories_collected
            ));
        }
        Ok(())
    }
}

/// Pipeline knobs past instruction synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub repeats: usize,
    pub max_retries: usize,
    pub mix: StrategyMix,
    pub budget: Budget,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            repeats: 1,
            max_retries: 8,
            mix: StrategyMix::default(),
            budget: Budget::default(),
            seed: 0,
        }
    }
}

fn positive_under<E: Environment>(env: &E, traj: &Trajectory) -> bool {
    env.outcome_of(traj).is_none_or(|o| o.success)
}

/// Collect, refine, build negatives and write the dataset to `out`.
///
/// `collector` drives collection; `suffix` regenerates the tail of
/// perturbed and diverged negatives. Item `k` draws its strategy kind and
/// negative seed from `derive(seed, "negative", k)`.
pub fn run_pipeline<E: TaskEnv>(
    instructions: &[Synthesized<E>],
    collector: &dyn Policy,
    suffix: &dyn Policy,
    generator: &Generator,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<SynthesisReport, DatagenError> {
    if cfg.repeats == 0 {
        return Err(DatagenError::Invalid("repeats must be at least 1".into()));
    }
    cfg.budget.validate()?;
    let collection = collect_trajectories(instructions, collector, &cfg.budget, cfg.repeats, cfg.seed);
    let mut report = SynthesisReport {
        instructions_proposed: instructions.len(),
        repeats: cfg.repeats,
        trajectories_collected: collection.items.len(),
        collection_failures: collection.failures,
        ..SynthesisReport::default()
    };

    enum Fate {
        RefineFailed,
        NonPositive,
        NegativeFailed,
        Built(Box<DatasetItem>, NegativeKind),
    }
    let fates: Vec<(Fate, u64)> = collection
        .items
        .par_iter()
        .enumerate()
        .map(|(k, c)| -> Result<(Fate, u64), DatagenError> {
            let refined = match refine_instruction(&c.raw, &c.env, &c.trajectory, generator) {
                Ok(r) => r,
                Err(DatagenError::Remote(e)) => return Err(e.into()),
                Err(e) => {
                    log::debug!("{}: {e}", c.raw.id);
                    return Ok((Fate::RefineFailed, 0));
                }
            };
            if !positive_under(&refined.env, &refined.positive) {
                return Ok((Fate::NonPositive, refined.tokens));
            }
            let s = crate::seed::derive(cfg.seed, "negative", k as u64);
            let kind = cfg.mix.pick(&mut crate::seed::rng(s));
            let strategy = NegativeStrategy::random(kind);
            match make_negative(&refined.env, &refined.positive, &strategy, suffix, &cfg.budget, s, cfg.max_retries) {
                Ok(neg) => Ok((
                    Fate::Built(
                        Box::new(DatasetItem::new(refined.instruction, refined.positive, neg.trajectory)),
                        kind,
                    ),
                    refined.tokens,
                )),
                Err(DatagenError::NegativeConstructionFailed { .. }) => Ok((Fate::NegativeFailed, refined.tokens)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, _>>()?;

    let mut items = Vec::new();
    for (fate, tokens) in fates {
        report.tokens += tokens;
        match fate {
            Fate::RefineFailed => report.refinement_failures += 1,
            Fate::NonPositive => {
                report.refined += 1;
                *report.validation_rejects.entry("non_positive".into()).or_default() += 1;
            }
            Fate::NegativeFailed => {
                report.refined += 1;
                report.negative_failures += 1;
            }
            Fate::Built(item, kind) => {
                report.refined += 1;
                *report.negatives_by_kind.entry(kind.as_str().into()).or_default() += 1;
                items.push(*item);
            }
        }
    }
    let summary = build_dataset(&items, out)?;
    report.pairs_emitted = summary.pairs_emitted;
    report.duplicates = summary.duplicates;
    for (reason, n) in summary.rejects {
        *report.validation_rejects.entry(reason).or_default() += n;
    }
    Ok(report)
}
