//! Instructions, actions, observations, and trajectories, plus the
//! environment contract every task implements.
//!
//! A trajectory holds the initial observation `o0` followed by
//! `(action, observation)` steps, so the observation count is always one
//! more than the action count.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on actions per trajectory.
pub const DEFAULT_MAX_ACTIONS: usize = 10;

/// Observation returned for any action the environment cannot interpret.
pub const INVALID_ACTION_OBSERVATION: &str = "No known action matches that input.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("cannot append to a terminal trajectory")]
    AppendToTerminal,
    #[error("trajectory already holds the maximum of {max} actions")]
    MaxLengthExceeded { max: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid instruction: {0}")]
    InvalidInstruction(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub text: String,
}

impl Instruction {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, TrajectoryError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TrajectoryError::InvalidInstruction(
                "instruction text is empty".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            text,
        })
    }
}

/// One environment command in its surface form, e.g. `click[buy now]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(String);

impl Action {
    pub fn new(text: impl Into<String>) -> Result<Self, TrajectoryError> {
        let text = text.into();
        if text.is_empty() {
            return Err(TrajectoryError::InvalidAction("empty action".into()));
        }
        if text.contains('\n') || text.contains('\r') {
            return Err(TrajectoryError::InvalidAction(format!(
                "action contains a newline: {text:?}"
            )));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Text observation. `attachment` carries an opaque payload (for example a
/// screenshot reference) that is stored and serialized but never read.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<String>,
}

impl Observation {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            attachment: None,
        }
    }

    pub fn invalid_action() -> Self {
        Self::new(INVALID_ACTION_OBSERVATION)
    }

    pub fn is_invalid_action(&self) -> bool {
        self.text == INVALID_ACTION_OBSERVATION
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Step {
    pub action: Action,
    pub observation: Observation,
}

/// Ground-truth task score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskOutcome {
    pub oracle_reward: f64,
    pub success: bool,
}

impl TaskOutcome {
    pub fn new(oracle_reward: f64, success_threshold: f64) -> Self {
        let oracle_reward = oracle_reward.clamp(0.0, 1.0);
        Self {
            oracle_reward,
            success: oracle_reward >= success_threshold,
        }
    }

    pub fn failure() -> Self {
        Self {
            oracle_reward: 0.0,
            success: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub instruction: Instruction,
    pub initial_observation: Observation,
    pub steps: Vec<Step>,
    pub terminal: bool,
    pub oracle_reward: Option<f64>,
}

impl Trajectory {
    pub fn new(instruction: Instruction, initial_observation: Observation) -> Self {
        Self {
            instruction,
            initial_observation,
            steps: Vec::new(),
            terminal: false,
            oracle_reward: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }

    /// `o0, o1, ..., oN`.
    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        std::iter::once(&self.initial_observation).chain(self.steps.iter().map(|s| &s.observation))
    }

    pub fn last_observation(&self) -> &Observation {
        self.steps
            .last()
            .map(|s| &s.observation)
            .unwrap_or(&self.initial_observation)
    }

    /// Returns a copy with one more step, under the default length cap.
    pub fn appended(&self, action: Action, observation: Observation) -> Result<Self, TrajectoryError> {
        self.appended_with_limit(action, observation, DEFAULT_MAX_ACTIONS)
    }

    pub fn appended_with_limit(
        &self,
        action: Action,
        observation: Observation,
        max_actions: usize,
    ) -> Result<Self, TrajectoryError> {
        let mut out = self.clone();
        out.push(action, observation, max_actions)?;
        Ok(out)
    }

    pub fn push(
        &mut self,
        action: Action,
        observation: Observation,
        max_actions: usize,
    ) -> Result<(), TrajectoryError> {
        if self.terminal {
            return Err(TrajectoryError::AppendToTerminal);
        }
        if self.steps.len() >= max_actions {
            return Err(TrajectoryError::MaxLengthExceeded { max: max_actions });
        }
        self.steps.push(Step {
            action,
            observation,
        });
        Ok(())
    }

    /// Prefix of the first `n` steps; never terminal.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            instruction: self.instruction.clone(),
            initial_observation: self.initial_observation.clone(),
            steps: self.steps[..n.min(self.steps.len())].to_vec(),
            terminal: false,
            oracle_reward: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.validate_with_limit(DEFAULT_MAX_ACTIONS)
    }

    pub fn validate_with_limit(&self, max_actions: usize) -> Result<(), String> {
        if self.instruction.text.trim().is_empty() {
            return Err("instruction text is empty".into());
        }
        if self.steps.len() > max_actions {
            return Err(format!(
                "max length: {} actions exceeds the limit of {max_actions}",
                self.steps.len()
            ));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let a = step.action.as_str();
            if a.is_empty() || a.contains('\n') || a.contains('\r') {
                return Err(format!("action {i} is empty or spans lines"));
            }
        }
        if let Some(r) = self.oracle_reward {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("oracle reward {r} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&TrajectoryRecord::from(self)).expect("trajectory serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, TrajectoryError> {
        let record: TrajectoryRecord = serde_json::from_str(line).map_err(|e| TrajectoryError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        record.into_trajectory()
    }

    /// Stable text digest, used to compare trajectories by serialized form.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_json_line().as_bytes()))
    }

    /// Human-readable transcript in the `Action: ... / Observation: ...` style.
    pub fn transcript(&self) -> String {
        let mut out = format!("Observation: {}\n", self.initial_observation.text);
        for step in &self.steps {
            out.push_str(&format!(
                "Action: {}\nObservation: {}\n",
                step.action, step.observation.text
            ));
        }
        out
    }
}

/// Wire shape of one JSONL trajectory line. Field order is the output order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub instruction: String,
    pub instruction_id: String,
    pub o0: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o0_attachment: Option<String>,
    pub steps: Vec<StepRecord>,
    pub terminal: bool,
    pub oracle_reward: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub a: String,
    #[serde(default)]
    pub o: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o_attachment: Option<String>,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        Self {
            instruction: t.instruction.text.clone(),
            instruction_id: t.instruction.id.clone(),
            o0: t.initial_observation.text.clone(),
            o0_attachment: t.initial_observation.attachment.clone(),
            steps: t
                .steps
                .iter()
                .map(|s| StepRecord {
                    a: s.action.as_str().to_string(),
                    o: Some(s.observation.text.clone()),
                    o_attachment: s.observation.attachment.clone(),
                })
                .collect(),
            terminal: t.terminal,
            oracle_reward: t.oracle_reward,
        }
    }
}

impl TrajectoryRecord {
    /// Checks the record-level invariants, including those the in-memory
    /// type enforces structurally.
    pub fn validate(&self, max_actions: usize) -> Result<(), String> {
        let observations = 1 + self.steps.iter().filter(|s| s.o.is_some()).count();
        if observations != self.steps.len() + 1 {
            return Err(format!(
                "observation count: {observations} observations for {} actions",
                self.steps.len()
            ));
        }
        if self.steps.len() > max_actions {
            return Err(format!(
                "max length: {} actions exceeds the limit of {max_actions}",
                self.steps.len()
            ));
        }
        Ok(())
    }

    pub fn into_trajectory(self) -> Result<Trajectory, TrajectoryError> {
        if let Some(i) = self.steps.iter().position(|s| s.o.is_none()) {
            return Err(TrajectoryError::Parse {
                line: 1,
                column: 0,
                message: format!("step {i} has no observation"),
            });
        }
        let instruction = Instruction::new(self.instruction_id, self.instruction)?;
        let steps = self
            .steps
            .into_iter()
            .map(|s| {
                Ok(Step {
                    action: Action::new(s.a)?,
                    observation: Observation {
                        text: s.o.unwrap_or_default(),
                        attachment: s.o_attachment,
                    },
                })
            })
            .collect::<Result<Vec<_>, TrajectoryError>>()?;
        Ok(Trajectory {
            instruction,
            initial_observation: Observation {
                text: self.o0,
                attachment: self.o0_attachment,
            },
            steps,
            terminal: self.terminal,
            oracle_reward: self.oracle_reward,
        })
    }
}

impl Serialize for Trajectory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TrajectoryRecord::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        TrajectoryRecord::deserialize(deserializer)?
            .into_trajectory()
            .map_err(serde::de::Error::custom)
    }
}

pub fn write_jsonl<W: Write>(mut w: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        writeln!(w, "{}", t.to_json_line())?;
    }
    Ok(())
}

/// Reads trajectories, one per non-blank line. Parse errors report the
/// 1-based file line.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Trajectory>, TrajectoryError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| TrajectoryError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let t = Trajectory::from_json_line(&line).map_err(|e| match e {
            TrajectoryError::Parse {
                column, message, ..
            } => TrajectoryError::Parse {
                line: i + 1,
                column,
                message,
            },
            other => other,
        })?;
        out.push(t);
    }
    Ok(out)
}

/// Facts about the final state of an episode that scorers may need.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeInfo {
    pub outcome: Option<TaskOutcome>,
    /// Purchase price, for environments that have one.
    pub price: Option<f64>,
}

/// A deterministic, cloneable task environment.
///
/// `reset` restarts the episode for the environment's instruction. Actions
/// that cannot be interpreted return [`Observation::invalid_action`] and
/// leave the state unchanged.
pub trait Environment: Clone + Send + Sync {
    fn instruction(&self) -> &Instruction;

    fn reset(&mut self) -> Observation;

    fn valid_actions(&self) -> Vec<Action>;

    fn step(&mut self, action: &Action) -> Observation;

    fn is_terminal(&self) -> bool;

    /// Ground-truth score of the current state. Non-terminal states score 0.
    fn oracle_outcome(&self) -> Option<TaskOutcome>;

    /// Whether actions outside `valid_actions` may still be legal.
    fn free_form_actions(&self) -> bool {
        false
    }

    /// Grammar check for free-form actions.
    fn check_action(&self, action: &str) -> Result<(), String> {
        if self.valid_actions().iter().any(|a| a.as_str() == action) {
            Ok(())
        } else {
            Err(format!("`{action}` is not an available action"))
        }
    }

    fn price(&self) -> Option<f64> {
        None
    }

    fn episode_info(&self) -> EpisodeInfo {
        EpisodeInfo {
            outcome: self.oracle_outcome(),
            price: self.price(),
        }
    }

    /// A fresh episode started from this environment's instruction.
    fn fresh(&self) -> (Self, Trajectory) {
        let mut env = self.clone();
        let o0 = env.reset();
        let traj = Trajectory::new(env.instruction().clone(), o0);
        (env, traj)
    }

    /// Replays `traj`'s actions from reset and returns the final environment.
    fn replay(&self, traj: &Trajectory) -> Self {
        let (mut env, _) = self.fresh();
        for action in traj.actions() {
            env.step(action);
        }
        env
    }

    fn outcome_of(&self, traj: &Trajectory) -> Option<TaskOutcome> {
        self.replay(traj).oracle_outcome()
    }
}
