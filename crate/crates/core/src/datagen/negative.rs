use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::planners::{continue_rollout, finish, Budget};
use crate::policy::{Policy, RandomPolicy};
use crate::trajectory::{Action, Environment, Step, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    /// Swap one action for a different legal one and regenerate the rest.
    PerturbAction,
    /// Drop the final `k` steps.
    Truncate,
    /// Keep a prefix, then follow the random policy.
    DivergeRandom,
}

impl NegativeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NegativeKind::PerturbAction => "perturb_action",
            NegativeKind::Truncate => "truncate",
            NegativeKind::DivergeRandom => "diverge_random",
        }
    }
}

/// Relative weights of the three kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyMix {
    pub perturb_action: f64,
    pub truncate: f64,
    pub diverge_random: f64,
}

impl Default for StrategyMix {
    fn default() -> Self {
        Self {
            perturb_action: 0.5,
            truncate: 0.25,
            diverge_random: 0.25,
        }
    }
}

impl StrategyMix {
    pub fn pick<R: Rng>(&self, rng: &mut R) -> NegativeKind {
        let total = self.perturb_action + self.truncate + self.diverge_random;
        let x = rng.random::<f64>() * total;
        if x < self.perturb_action {
            NegativeKind::PerturbAction
        } else if x < self.perturb_action + self.truncate {
            NegativeKind::Truncate
        } else {
            NegativeKind::DivergeRandom
        }
    }
}

/// A kind plus where it applies. `index` is the perturbed step, the number
/// of truncated steps, or the kept prefix length; `None` draws it per
/// attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeStrategy {
    pub kind: NegativeKind,
    #[serde(default)]
    pub index: Option<usize>,
}

impl NegativeStrategy {
    pub fn random(kind: NegativeKind) -> Self {
        Self { kind, index: None }
    }

    pub fn at(kind: NegativeKind, index: usize) -> Self {
        Self {
            kind,
            index: Some(index),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Negative {
    pub trajectory: Trajectory,
    pub attempts: usize,
}

/// `traj` replayed in a fresh copy of `env`, with observations, terminal
/// flag and oracle reward taken from the replay.
pub fn settle<E: Environment>(env: &E, traj: &Trajectory) -> Trajectory {
    let (mut replay, mut out) = env.fresh();
    for action in traj.actions() {
        let observation = replay.step(action);
        out.steps.push(Step {
            action: action.clone(),
            observation,
        });
    }
    finish(&replay, &mut out);
    out
}

/// Whether `neg` differs from `pos` and, when `env` has an oracle, scores
/// strictly lower.
pub fn is_negative_of<E: Environment>(env: &E, pos: &Trajectory, neg: &Trajectory) -> bool {
    if pos.to_json_line() == neg.to_json_line() {
        return false;
    }
    match (env.outcome_of(pos), env.outcome_of(neg)) {
        (Some(p), Some(n)) => n.oracle_reward < p.oracle_reward,
        _ => true,
    }
}

/// Replaces action `index` of `pos` with `replacement` and lets `suffix`
/// finish the episode at temperature 1.
pub fn perturb_at<E: Environment>(
    env: &E,
    pos: &Trajectory,
    index: usize,
    replacement: Action,
    suffix: &dyn Policy,
    budget: &Budget,
    seed: u64,
) -> Result<Trajectory, DatagenError> {
    let (mut env, mut traj) = env.fresh();
    for action in pos.actions().take(index) {
        let observation = env.step(action);
        traj.steps.push(Step {
            action: action.clone(),
            observation,
        });
    }
    let observation = env.step(&replacement);
    traj.steps.push(Step {
        action: replacement,
        observation,
    });
    continue_rollout(&mut env, &mut traj, suffix, budget, 1.0, seed, &[])?;
    Ok(traj)
}

fn diverge_at<E: Environment>(env: &E, pos: &Trajectory, keep: usize, budget: &Budget, seed: u64) -> Result<Trajectory, DatagenError> {
    let prefix = pos.prefix(keep);
    let (mut env, _) = env.fresh();
    let mut traj = settle(&env, &prefix);
    for action in prefix.actions() {
        env.step(action);
    }
    continue_rollout(&mut env, &mut traj, &RandomPolicy, budget, 1.0, seed, &[])?;
    Ok(traj)
}

fn attempt<E: Environment>(
    env: &E,
    pos: &Trajectory,
    strategy: &NegativeStrategy,
    suffix: &dyn Policy,
    budget: &Budget,
    seed: u64,
) -> Result<Option<Trajectory>, DatagenError> {
    let n = pos.len();
    let mut rng = crate::seed::rng(crate::seed::derive(seed, "params", 0));
    let rollout_seed = crate::seed::derive(seed, "suffix", 0);
    let pick = |rng: &mut rand_chacha::ChaCha8Rng, lo: usize, hi: usize| -> Option<usize> {
        match strategy.index {
            Some(i) => (lo..=hi).contains(&i).then_some(i),
            None => (lo <= hi).then(|| rng.random_range(lo..=hi)),
        }
    };
    Ok(match strategy.kind {
        NegativeKind::PerturbAction => {
            let Some(i) = (if n == 0 { None } else { pick(&mut rng, 0, n - 1) }) else {
                return Ok(None);
            };
            let before = env.replay(&pos.prefix(i));
            let original = &pos.steps[i].action;
            let options: Vec<Action> = before.valid_actions().into_iter().filter(|a| a != original).collect();
            if options.is_empty() {
                return Ok(None);
            }
            let replacement = options[rng.random_range(0..options.len())].clone();
            Some(perturb_at(env, pos, i, replacement, suffix, budget, rollout_seed)?)
        }
        NegativeKind::Truncate => {
            let Some(k) = pick(&mut rng, 1, n) else { return Ok(None) };
            Some(settle(env, &pos.prefix(n - k)))
        }
        NegativeKind::DivergeRandom => {
            let Some(keep) = (if n == 0 { None } else { pick(&mut rng, 0, n - 1) }) else {
                return Ok(None);
            };
            Some(diverge_at(env, pos, keep, budget, rollout_seed)?)
        }
    })
}

/// Builds a negative for `pos` under `env`. Attempt `a` (of
/// `1 + max_retries`) uses seed `derive(seed, "attempt", a)`; the first
/// candidate passing [`is_negative_of`] wins.
pub fn make_negative<E: Environment>(
    env: &E,
    pos: &Trajectory,
    strategy: &NegativeStrategy,
    suffix: &dyn Policy,
    budget: &Budget,
    seed: u64,
    max_retries: usize,
) -> Result<Negative, DatagenError> {
    let attempts = max_retries + 1;
    for a in 0..attempts {
        let s = crate::seed::derive(seed, "attempt", a as u64);
        if let Some(candidate) = attempt(env, pos, strategy, suffix, budget, s)? {
            if candidate.validate_with_limit(budget.max_actions_per_trajectory).is_ok()
                && is_negative_of(env, pos, &candidate)
            {
                return Ok(Negative {
                    trajectory: candidate,
                    attempts: a + 1,
                });
            }
        }
    }
    Err(DatagenError::NegativeConstructionFailed { attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Game24Env, Puzzle};
    use crate::policy::ScriptedPolicy;
    use crate::trajectory::{Instruction, Observation, TaskOutcome};

    fn appendix_positive() -> (Game24Env, Trajectory) {
        let env = Game24Env::from_numbers(&[12, 10, 8, 4]).unwrap();
        let route: Vec<Action> = ["10 - 8 = 2 (left: 2 4 12)", "12 / 2 = 6 (left: 4 6)", "6 * 4 = 24 (left: 24)"]
            .map(|a| Action::new(a).unwrap())
            .to_vec();
        let (_, traj) = env.fresh();
        let mut traj = traj;
        traj.steps = route
            .into_iter()
            .map(|action| Step {
                action,
                observation: Observation::new(""),
            })
            .collect();
        let pos = settle(&env, &traj);
        assert_eq!(pos.oracle_reward, Some(1.0));
        (env, pos)
    }

    #[test]
    fn appendix_perturbation_is_accepted() {
        let (env, pos) = appendix_positive();
        let swap = Action::new("10 - 12 = -2 (left: -2 4 8)").unwrap();
        for seed in 0..20 {
            let neg = perturb_at(&env, &pos, 0, swap.clone(), &RandomPolicy, &Budget::default(), seed).unwrap();
            assert_eq!(neg.steps[0].observation.text, "-2 4 8");
            assert!(neg.terminal);
            // no continuation of -2 4 8 makes 24 by uniform chance every time,
            // but the oracle decides acceptance either way
            let accepted = is_negative_of(&env, &pos, &neg);
            assert_eq!(accepted, env.outcome_of(&neg).unwrap().oracle_reward < 1.0);
        }
    }

    #[test]
    fn truncation_by_one_fails_the_task() {
        let (env, pos) = appendix_positive();
        let neg = make_negative(&env, &pos, &NegativeStrategy::at(NegativeKind::Truncate, 1), &RandomPolicy, &Budget::default(), 0, 0)
            .unwrap();
        assert_eq!(neg.trajectory.len(), 2);
        assert_eq!(neg.trajectory.oracle_reward, Some(0.0));
        assert_eq!(neg.attempts, 1);
    }

    #[test]
    fn every_kind_yields_a_verified_negative() {
        let puzzle = Puzzle::new(&[3, 5, 7, 11]).unwrap();
        let env = Game24Env::new(puzzle);
        let solver = ScriptedPolicy::game24_solver([&puzzle]);
        let (_, pos) = crate::planners::rollout(&env, &solver, &Budget::default(), 1.0, 0).unwrap();
        assert_eq!(pos.oracle_reward, Some(1.0));
        for kind in [NegativeKind::PerturbAction, NegativeKind::Truncate, NegativeKind::DivergeRandom] {
            let neg = make_negative(&env, &pos, &NegativeStrategy::random(kind), &RandomPolicy, &Budget::default(), 3, 16)
                .unwrap();
            assert!(is_negative_of(&env, &pos, &neg.trajectory), "{kind:?}");
            assert!(neg.trajectory.len() <= 10);
        }
    }

    /// Two moves, both of which win.
    #[derive(Clone)]
    struct AnyWins {
        instruction: Instruction,
        moved: Option<String>,
    }

    impl Environment for AnyWins {
        fn instruction(&self) -> &Instruction {
            &self.instruction
        }
        fn reset(&mut self) -> Observation {
            self.moved = None;
            Observation::new("start")
        }
        fn valid_actions(&self) -> Vec<Action> {
            if self.moved.is_some() {
                return Vec::new();
            }
            vec![Action::new("left").unwrap(), Action::new("right").unwrap()]
        }
        fn step(&mut self, action: &Action) -> Observation {
            if self.moved.is_some() || !self.valid_actions().contains(action) {
                return Observation::invalid_action();
            }
            self.moved = Some(action.as_str().to_string());
            Observation::new(format!("went {action}"))
        }
        fn is_terminal(&self) -> bool {
            self.moved.is_some()
        }
        fn oracle_outcome(&self) -> Option<TaskOutcome> {
            Some(TaskOutcome::new(if self.moved.is_some() { 1.0 } else { 0.0 }, 1.0))
        }
    }

    #[test]
    fn all_perturbations_succeeding_is_reported() {
        let env = AnyWins {
            instruction: Instruction::new("any", "move once").unwrap(),
            moved: None,
        };
        let (mut e, mut pos) = env.fresh();
        let o = e.step(&Action::new("left").unwrap());
        pos.steps.push(Step {
            action: Action::new("left").unwrap(),
            observation: o,
        });
        let pos = settle(&env, &pos);
        // exhaustive scan: every single-action swap still wins
        for a in env.valid_actions() {
            if a.as_str() != "left" {
                let t = perturb_at(&env, &pos, 0, a, &RandomPolicy, &Budget::default(), 0).unwrap();
                assert_eq!(env.outcome_of(&t).unwrap().oracle_reward, 1.0);
            }
        }
        let err = make_negative(
            &env,
            &pos,
            &NegativeStrategy::random(NegativeKind::PerturbAction),
            &RandomPolicy,
            &Budget::default(),
            0,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, DatagenError::NegativeConstructionFailed { attempts: 6 }));
    }

    #[test]
    fn mix_follows_weights() {
        let mix = StrategyMix::default();
        let mut rng = crate::seed::rng(1);
        let mut counts = [0usize; 3];
        for _ in 0..4000 {
            counts[mix.pick(&mut rng) as usize] += 1;
        }
        assert!((counts[0] as f64 / 4000.0 - 0.5).abs() < 0.03);
        assert!((counts[1] as f64 / 4000.0 - 0.25).abs() < 0.03);
        let only = StrategyMix {
            perturb_action: 0.0,
            truncate: 1.0,
            diverge_random: 0.0,
        };
        assert_eq!(only.pick(&mut rng), NegativeKind::Truncate);
    }
}
