//! Reward-guided planners: sampling, greedy decoding, Best-of-N,
//! Reflexion and MCTS, all bounded by a [`Budget`].

pub mod mcts;
pub mod suite;

pub use mcts::{run_mcts, run_mcts_traced, MctsTrace, SearchNode};
pub use suite::{evaluate_suite, TaskRun};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Policy, PolicyContext, PolicyError};
use crate::reward::{RewardError, Scorer};
use crate::trajectory::{EpisodeInfo, Environment, Trajectory, DEFAULT_MAX_ACTIONS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid planner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub max_trajectories: usize,
    pub max_actions_per_trajectory: usize,
    pub top_k_actions: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_trajectories: 10,
            max_actions_per_trajectory: DEFAULT_MAX_ACTIONS,
            top_k_actions: 10,
        }
    }
}

impl Budget {
    /// 100 trajectories, and a top-k wide enough to cover every legal step
    /// of a four-number pool (at most 36).
    pub fn game24() -> Self {
        Self {
            max_trajectories: 100,
            top_k_actions: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.max_trajectories == 0 || self.max_actions_per_trajectory == 0 || self.top_k_actions == 0 {
            return Err(PlanError::Config("budget fields must all be >= 1".into()));
        }
        Ok(())
    }
}

/// A scored complete trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Explored {
    pub trajectory: Trajectory,
    pub score: f64,
    pub info: EpisodeInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionEntry {
    pub trial_digest: String,
    pub reflection: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// Index into `explored` of the returned trajectory.
    pub best_index: usize,
    pub explored: Vec<Explored>,
    pub trajectories_used: usize,
    /// Reflexion memory; empty for the other planners.
    pub memory: Vec<ReflectionEntry>,
}

impl PlanResult {
    fn argmax(explored: Vec<Explored>) -> Self {
        let best_index = argmax_first(explored.iter().map(|e| e.score));
        Self {
            best_index,
            trajectories_used: explored.len(),
            explored,
            memory: Vec::new(),
        }
    }

    pub fn best(&self) -> &Explored {
        &self.explored[self.best_index]
    }

    pub fn best_score(&self) -> f64 {
        self.best().score
    }
}

/// Index of the first maximum. NaN never wins.
pub fn argmax_first(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Everything a rollout needs besides the environment.
#[derive(Clone, Copy)]
pub struct Agent<'a> {
    pub policy: &'a dyn Policy,
    pub scorer: &'a dyn Scorer,
    pub budget: Budget,
}

/// Continues `traj` from `env` until the environment is terminal or the
/// action cap is reached. Step `i` uses seed `derive(seed, "step", i)`.
pub fn continue_rollout<E: Environment>(
    env: &mut E,
    traj: &mut Trajectory,
    policy: &dyn Policy,
    budget: &Budget,
    temperature: f64,
    seed: u64,
    memory: &[String],
) -> Result<(), PlanError> {
    while !env.is_terminal() && traj.len() < budget.max_actions_per_trajectory {
        let valid = env.valid_actions();
        let free_form = env.free_form_actions();
        if valid.is_empty() && !free_form {
            break;
        }
        let step_seed = crate::seed::derive(seed, "step", traj.len() as u64);
        let proposal = {
            let env_ref: &E = env;
            let check = |a: &str| env_ref.check_action(a);
            let mut ctx = PolicyContext::new(traj, &valid, temperature, step_seed).with_memory(memory);
            if free_form {
                ctx = ctx.with_free_form(&check);
            }
            policy
                .propose(&ctx, 1)?
                .into_iter()
                .next()
                .ok_or(PolicyError::NoValidActions)?
        };
        let observation = env.step(&proposal.action);
        traj.steps.push(crate::trajectory::Step {
            action: proposal.action,
            observation,
        });
    }
    finish(env, traj);
    Ok(())
}

pub(crate) fn finish<E: Environment>(env: &E, traj: &mut Trajectory) {
    traj.terminal = env.is_terminal();
    traj.oracle_reward = env.oracle_outcome().map(|o| o.oracle_reward);
}

/// A fresh episode rolled out to the end.
pub fn rollout<E: Environment>(
    env: &E,
    policy: &dyn Policy,
    budget: &Budget,
    temperature: f64,
    seed: u64,
) -> Result<(E, Trajectory), PlanError> {
    rollout_with_memory(env, policy, budget, temperature, seed, &[])
}

pub fn rollout_with_memory<E: Environment>(
    env: &E,
    policy: &dyn Policy,
    budget: &Budget,
    temperature: f64,
    seed: u64,
    memory: &[String],
) -> Result<(E, Trajectory), PlanError> {
    let (mut env, mut traj) = env.fresh();
    continue_rollout(&mut env, &mut traj, policy, budget, temperature, seed, memory)?;
    Ok((env, traj))
}

fn scored<E: Environment>(env: &E, trajectory: Trajectory, scorer: &dyn Scorer) -> Result<Explored, PlanError> {
    let info = env.episode_info();
    let score = scorer.score(&trajectory, &info)?;
    Ok(Explored { trajectory, score, info })
}

/// One temperature-0 rollout.
pub fn run_greedy<E: Environment>(env: &E, agent: Agent<'_>) -> Result<PlanResult, PlanError> {
    agent.budget.validate()?;
    let (end, traj) = rollout(env, agent.policy, &agent.budget, 0.0, 0)?;
    Ok(PlanResult::argmax(vec![scored(&end, traj, agent.scorer)?]))
}

/// One temperature-1 rollout; Best-of-N with `n = 1`.
pub fn run_sampling<E: Environment>(env: &E, agent: Agent<'_>, seed: u64) -> Result<PlanResult, PlanError> {
    run_best_of_n(env, agent, 1, seed)
}

/// `n` independent temperature-1 rollouts with seeds `seed + i`; the
/// highest score wins, ties going to the lowest index.
pub fn run_best_of_n<E: Environment>(env: &E, agent: Agent<'_>, n: usize, seed: u64) -> Result<PlanResult, PlanError> {
    agent.budget.validate()?;
    if n == 0 || n > agent.budget.max_trajectories {
        return Err(PlanError::Config(format!(
            "n = {n} must be in 1..={}",
            agent.budget.max_trajectories
        )));
    }
    let explored = (0..n)
        .into_par_iter()
        .map(|i| {
            let (end, traj) = rollout(env, agent.policy, &agent.budget, 1.0, seed.wrapping_add(i as u64))?;
            scored(&end, traj, agent.scorer)
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    Ok(PlanResult::argmax(explored))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    #[default]
    Last,
    First,
    Best,
}

/// Retries with verbal reflections in memory until a trial scores
/// strictly above `threshold`. Without such a trial the result is picked
/// by `rule`, so `best` is not necessarily the highest-scoring trial.
pub fn run_reflexion<E: Environment>(
    env: &E,
    agent: Agent<'_>,
    max_trials: usize,
    threshold: f64,
    rule: SelectionRule,
    seed: u64,
) -> Result<PlanResult, PlanError> {
    agent.budget.validate()?;
    if max_trials == 0 || max_trials > agent.budget.max_trajectories {
        return Err(PlanError::Config(format!(
            "max_trials = {max_trials} must be in 1..={}",
            agent.budget.max_trajectories
        )));
    }
    let mut explored: Vec<Explored> = Vec::new();
    let mut memory: Vec<ReflectionEntry> = Vec::new();
    for trial in 0..max_trials {
        let texts: Vec<String> = memory.iter().map(|m| m.reflection.clone()).collect();
        let trial_seed = crate::seed::derive(seed, "trial", trial as u64);
        let (end, traj) = rollout_with_memory(env, agent.policy, &agent.budget, 1.0, trial_seed, &texts)?;
        let e = scored(&end, traj, agent.scorer)?;
        let score = e.score;
        explored.push(e);
        if score > threshold {
            return Ok(PlanResult {
                best_index: trial,
                trajectories_used: explored.len(),
                explored,
                memory,
            });
        }
        if trial + 1 < max_trials {
            let last = &explored[trial].trajectory;
            let reflection = agent.policy.reflect(last, score, &texts)?;
            memory.push(ReflectionEntry {
                trial_digest: last.digest(),
                reflection,
                score,
            });
        }
    }
    let best_index = match rule {
        SelectionRule::Last => explored.len() - 1,
        SelectionRule::First => 0,
        SelectionRule::Best => argmax_first(explored.iter().map(|e| e.score)),
    };
    Ok(PlanResult {
        best_index,
        trajectories_used: explored.len(),
        explored,
        memory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Sampling,
    Greedy,
    Bon,
    Reflexion,
    Mcts,
}

impl PlannerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Sampling => "sampling",
            PlannerKind::Greedy => "greedy",
            PlannerKind::Bon => "bon",
            PlannerKind::Reflexion => "reflexion",
            PlannerKind::Mcts => "mcts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub planner: PlannerKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_trials")]
    pub max_trials: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub selection_rule: SelectionRule,
    #[serde(default = "default_c")]
    pub exploration_c: f64,
    #[serde(default)]
    pub budget: Budget,
}

fn default_n() -> usize {
    10
}
fn default_trials() -> usize {
    10
}
fn default_threshold() -> f64 {
    0.99
}
fn default_c() -> f64 {
    std::f64::consts::SQRT_2
}

impl PlannerConfig {
    pub fn new(planner: PlannerKind, budget: Budget) -> Self {
        Self {
            planner,
            n: default_n().min(budget.max_trajectories),
            max_trials: default_trials().min(budget.max_trajectories),
            threshold: default_threshold(),
            selection_rule: SelectionRule::Last,
            exploration_c: default_c(),
            budget,
        }
    }

    /// Row label, e.g. `bon(10)` or `mcts(100)`.
    pub fn label(&self) -> String {
        match self.planner {
            PlannerKind::Sampling | PlannerKind::Greedy => self.planner.as_str().into(),
            PlannerKind::Bon => format!("bon({})", self.n),
            PlannerKind::Reflexion => format!("reflexion({})", self.max_trials),
            PlannerKind::Mcts => format!("mcts({})", self.budget.max_trajectories),
        }
    }

    pub fn run<E: Environment>(&self, env: &E, policy: &dyn Policy, scorer: &dyn Scorer, seed: u64) -> Result<PlanResult, PlanError> {
        let agent = Agent {
            policy,
            scorer,
            budget: self.budget,
        };
        match self.planner {
            PlannerKind::Sampling => run_sampling(env, agent, seed),
            PlannerKind::Greedy => run_greedy(env, agent),
            PlannerKind::Bon => run_best_of_n(env, agent, self.n, seed),
            PlannerKind::Reflexion => run_reflexion(env, agent, self.max_trials, self.threshold, self.selection_rule, seed),
            PlannerKind::Mcts => run_mcts(env, agent, self.exploration_c, seed),
        }
    }
}
