//! Action-proposal backends queried by the planners.
//!
//! - [`ScriptedPolicy`]: lookup tables (and an exhaustive fallback) for
//!   deterministic tests and fixtures.
//! - [`RandomPolicy`]: seeded sampling over the valid actions.
//! - [`ChatPolicy`]: a chat-completions model prompted in the ReAct format.

mod chat;
pub mod prompt;
mod random;
mod react;
mod scripted;

pub use chat::{ChatClient, ChatPolicy, Completion, EndpointConfig, Message};
pub use prompt::{PromptTemplate, TemplateVars};
pub use random::RandomPolicy;
pub use react::{parse_react, render_react, ReactError};
pub use scripted::{ScriptKey, ScriptedPolicy};

use thiserror::Error;

use crate::remote::RemoteError;
use crate::trajectory::{Action, Instruction, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no valid actions to choose from")]
    NoValidActions,
    #[error("no scripted action for state `{0}`")]
    NoScriptedAction(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

pub type ActionCheck<'a> = &'a (dyn Fn(&str) -> Result<(), String> + Sync);

/// Everything a policy sees when asked for actions.
#[derive(Clone, Copy)]
pub struct PolicyContext<'a> {
    pub instruction: &'a Instruction,
    pub trajectory: &'a Trajectory,
    pub valid_actions: &'a [Action],
    pub temperature: f64,
    pub seed: u64,
    /// Reflections from earlier failed trials, oldest first.
    pub memory: &'a [String],
    /// Actions outside `valid_actions` are acceptable if `check` passes.
    pub free_form: bool,
    pub check: Option<ActionCheck<'a>>,
}

impl<'a> PolicyContext<'a> {
    pub fn new(trajectory: &'a Trajectory, valid_actions: &'a [Action], temperature: f64, seed: u64) -> Self {
        Self {
            instruction: &trajectory.instruction,
            trajectory,
            valid_actions,
            temperature,
            seed,
            memory: &[],
            free_form: false,
            check: None,
        }
    }

    pub fn with_memory(mut self, memory: &'a [String]) -> Self {
        self.memory = memory;
        self
    }

    pub fn with_free_form(mut self, check: ActionCheck<'a>) -> Self {
        self.free_form = true;
        self.check = Some(check);
        self
    }

    /// Whether `action` is acceptable under this context.
    pub fn admits(&self, action: &str) -> Result<(), String> {
        if self.valid_actions.iter().any(|a| a.as_str() == action) {
            return Ok(());
        }
        match (self.free_form, self.check) {
            (true, Some(check)) => check(action),
            (true, None) => Ok(()),
            _ => Err(format!("`{action}` is not one of the available actions")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub action: Action,
    /// Relative preference, > 0.
    pub weight: f64,
    pub thought: Option<String>,
    /// The action is not in `valid_actions` and relies on the environment's
    /// own grammar.
    pub free_form: bool,
}

impl Proposal {
    pub fn new(action: Action, weight: f64) -> Self {
        Self {
            action,
            weight,
            thought: None,
            free_form: false,
        }
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    /// Up to `k` proposals, best first.
    fn propose(&self, ctx: &PolicyContext<'_>, k: usize) -> Result<Vec<Proposal>, PolicyError>;

    /// Verbal feedback on a failed trial, stored in reflection memory.
    fn reflect(&self, trajectory: &Trajectory, score: f64, _memory: &[String]) -> Result<String, PolicyError> {
        Ok(canned_reflection(trajectory, score))
    }
}

pub fn canned_reflection(trajectory: &Trajectory, score: f64) -> String {
    format!(
        "Attempt with {} action(s) scored {score:.3} and did not complete the task. Try a different sequence of actions.",
        trajectory.len()
    )
}

/// Sampling weights `exp(score / T)` normalized; `T = 0` gives all mass to
/// the maximum.
pub(crate) fn tempered_weights(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if temperature <= 0.0 {
        let winners = scores.iter().filter(|&&s| s == max).count() as f64;
        return scores
            .iter()
            .map(|&s| if s == max { 1.0 / winners } else { 0.0 })
            .collect();
    }
    let raw: Vec<f64> = scores.iter().map(|&s| ((s - max) / temperature).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Order of indices from weighted sampling without replacement
/// (exponential-key method), deterministic in `rng`.
pub(crate) fn weighted_order<R: rand::Rng>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tempered_weights_limits() {
        let w = tempered_weights(&[0.0, 0.0, 0.0], 1.0);
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
        let w = tempered_weights(&[1.0, 3.0, 3.0], 0.0);
        assert_eq!(w, [0.0, 0.5, 0.5]);
    }

    #[test]
    fn weighted_order_is_a_permutation() {
        let mut rng = crate::seed::rng(3);
        let mut order = weighted_order(&[0.2, 0.3, 0.5, 0.0], &mut rng);
        assert_eq!(*order.last().unwrap(), 3);
        order.sort();
        assert_eq!(order, [0, 1, 2, 3]);
    }
}
