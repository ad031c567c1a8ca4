use rayon::prelude::*;

use super::{PlanError, PlannerConfig};
use crate::policy::Policy;
use crate::reward::Scorer;
use crate::trajectory::{Environment, Trajectory};

/// Outcome of one planner run on one task under one seed. `reward` and
/// `success` come from the environment oracle, whatever scorer guided the
/// search.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRun {
    pub task_id: String,
    pub planner: String,
    pub reward_backend: String,
    pub seed: u64,
    pub reward: f64,
    pub success: bool,
    pub actions: usize,
    pub price: Option<f64>,
    pub trajectories_used: usize,
    pub score: f64,
    pub trajectory: Trajectory,
}

/// Runs `cfg` on every task for every seed. Task `t` under seed `s` uses
/// planner seed `derive(s, "planner", t)`, so different planners given the
/// same seeds see the same random streams. Output order is task-major.
pub fn evaluate_suite<E: Environment>(
    envs: &[E],
    cfg: &PlannerConfig,
    policy: &dyn Policy,
    scorer: &dyn Scorer,
    seeds: &[u64],
) -> Result<Vec<TaskRun>, PlanError> {
    if envs.is_empty() {
        return Err(PlanError::Config("the task suite is empty".into()));
    }
    if seeds.is_empty() {
        return Err(PlanError::Config("no seeds given".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..envs.len()).flat_map(|t| seeds.iter().map(move |&s| (t, s))).collect();
    let backend = scorer.name();
    let label = cfg.label();
    jobs.par_iter()
        .map(|&(t, seed)| {
            let env = &envs[t];
            let result = cfg.run(env, policy, scorer, crate::seed::derive(seed, "planner", t as u64))?;
            let best = result.best();
            let outcome = best.info.outcome;
            Ok(TaskRun {
                task_id: env.instruction().id.clone(),
                planner: label.clone(),
                reward_backend: backend.clone(),
                seed,
                reward: outcome.map_or(0.0, |o| o.oracle_reward),
                success: outcome.is_some_and(|o| o.success),
                actions: best.trajectory.len(),
                price: best.info.price,
                trajectories_used: result.trajectories_used,
                score: best.score,
                trajectory: best.trajectory.clone(),
            })
        })
        .collect()
}

pub fn success_rate(runs: &[TaskRun]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().filter(|r| r.success).count() as f64 / runs.len() as f64
}
