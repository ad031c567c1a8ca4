use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{canned_reflection, tempered_weights, weighted_order, Policy, PolicyContext, PolicyError, Proposal};
use crate::env::game24::{witness_actions, Puzzle};
use crate::trajectory::{Action, Trajectory};

/// How a scripted table identifies the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKey {
    /// Text of the latest observation.
    LastObservation,
    /// Actions taken so far, joined with `" || "` (empty string at the start).
    ActionHistory,
    /// Instruction text, a newline, then the action history. Lets one table
    /// hold routes for many tasks without their prefixes colliding.
    InstructionHistory,
}

impl ScriptKey {
    pub fn of(self, trajectory: &Trajectory) -> String {
        match self {
            ScriptKey::LastObservation => trajectory.last_observation().text.clone(),
            ScriptKey::ActionHistory => history_key(trajectory.actions()),
            ScriptKey::InstructionHistory => instruction_history_key(&trajectory.instruction.text, trajectory.actions()),
        }
    }
}

pub fn history_key<'a>(actions: impl IntoIterator<Item = &'a Action>) -> String {
    actions
        .into_iter()
        .map(Action::as_str)
        .collect::<Vec<_>>()
        .join(" || ")
}

pub fn instruction_history_key<'a>(instruction: &str, actions: impl IntoIterator<Item = &'a Action>) -> String {
    format!("{instruction}\n{}", history_key(actions))
}

type Table = BTreeMap<String, Vec<(Action, f64)>>;

/// Table-driven policy.
///
/// Each table maps a state key to weighted actions. Table `i` is used once
/// `i` reflections are in memory (the last table for anything beyond), so a
/// reflection can unlock a different script. At `T = 0` entries are ordered
/// by weight; at `T > 0` they are sampled by weight from the context seed.
/// With `exhaustive` set, the remaining valid actions follow in environment
/// order, which also covers states the tables do not mention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub key: ScriptKey,
    pub tables: Vec<Table>,
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default)]
    pub reflection: Option<String>,
}

impl ScriptedPolicy {
    pub fn new(key: ScriptKey) -> Self {
        Self {
            key,
            tables: vec![Table::new()],
            exhaustive: false,
            reflection: None,
        }
    }

    /// Proposes the valid actions in environment order.
    pub fn exhaustive() -> Self {
        Self {
            exhaustive: true,
            ..Self::new(ScriptKey::LastObservation)
        }
    }

    pub fn with_exhaustive(mut self, on: bool) -> Self {
        self.exhaustive = on;
        self
    }

    pub fn with_reflection(mut self, text: impl Into<String>) -> Self {
        self.reflection = Some(text.into());
        self
    }

    /// Adds `action` with `weight` for `state` in table `table`.
    pub fn insert(&mut self, table: usize, state: impl Into<String>, action: Action, weight: f64) {
        while self.tables.len() <= table {
            self.tables.push(Table::new());
        }
        let entries = self.tables[table].entry(state.into()).or_default();
        match entries.iter_mut().find(|(a, _)| *a == action) {
            Some((_, w)) => *w += weight,
            None => entries.push((action, weight)),
        }
    }

    /// Adds whole routes keyed by action history: at each prefix the next
    /// action of every route through it is offered with the route's weight.
    pub fn add_routes(&mut self, table: usize, routes: &[(Vec<Action>, f64)]) {
        for (route, weight) in routes {
            for i in 0..route.len() {
                self.insert(table, history_key(&route[..i]), route[i].clone(), *weight);
            }
        }
    }

    /// Like [`Self::add_routes`] for a policy keyed by
    /// [`ScriptKey::InstructionHistory`].
    pub fn add_task_routes(&mut self, table: usize, instruction: &str, routes: &[(Vec<Action>, f64)]) {
        for (route, weight) in routes {
            for i in 0..route.len() {
                self.insert(table, instruction_history_key(instruction, &route[..i]), route[i].clone(), *weight);
            }
        }
    }

    pub fn from_routes(routes: &[(Vec<Action>, f64)]) -> Self {
        let mut p = Self::new(ScriptKey::ActionHistory);
        p.add_routes(0, routes);
        p
    }

    /// Plays the first solution found by exhaustive search for each
    /// solvable puzzle, falling back to the remaining legal steps.
    pub fn game24_solver<'a>(puzzles: impl IntoIterator<Item = &'a Puzzle>) -> Self {
        let mut p = Self::new(ScriptKey::LastObservation).with_exhaustive(true);
        for puzzle in puzzles {
            let Some(actions) = witness_actions(puzzle) else { continue };
            let mut pool = puzzle.pool();
            let mut key = pool.render();
            for action in actions {
                if !p.tables[0].contains_key(&key) {
                    p.insert(0, key.clone(), action.clone(), 1.0);
                }
                let parsed = crate::env::game24::parse_step(action.as_str()).expect("witness parses");
                pool = pool.apply(&parsed.step).expect("witness applies");
                key = pool.render_sorted();
            }
        }
        p
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> String {
        if self.tables.iter().all(BTreeMap::is_empty) && self.exhaustive {
            "exhaustive".into()
        } else {
            "scripted".into()
        }
    }

    fn propose(&self, ctx: &PolicyContext<'_>, k: usize) -> Result<Vec<Proposal>, PolicyError> {
        if k == 0 {
            return Err(PolicyError::ZeroK);
        }
        let table = &self.tables[ctx.memory.len().min(self.tables.len() - 1)];
        let key = self.key.of(ctx.trajectory);
        let mut out: Vec<Proposal> = Vec::new();
        if let Some(entries) = table.get(&key) {
            let weights: Vec<f64> = entries.iter().map(|(_, w)| *w).collect();
            let order: Vec<usize> = if ctx.temperature <= 0.0 || entries.len() == 1 {
                let mut idx: Vec<usize> = (0..entries.len()).collect();
                idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
                idx
            } else {
                let scores: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
                let tempered = tempered_weights(&scores, ctx.temperature);
                weighted_order(&tempered, &mut crate::seed::rng(ctx.seed))
            };
            for i in order {
                let (action, weight) = &entries[i];
                let free_form = !ctx.valid_actions.contains(action);
                out.push(Proposal {
                    action: action.clone(),
                    weight: *weight,
                    thought: None,
                    free_form,
                });
            }
        }
        if self.exhaustive {
            for a in ctx.valid_actions {
                if !out.iter().any(|p| &p.action == a) {
                    out.push(Proposal::new(a.clone(), 1.0));
                }
            }
        }
        if out.is_empty() {
            return Err(if self.exhaustive {
                PolicyError::NoValidActions
            } else {
                PolicyError::NoScriptedAction(key)
            });
        }
        out.truncate(k);
        Ok(out)
    }

    fn reflect(&self, trajectory: &Trajectory, score: f64, _memory: &[String]) -> Result<String, PolicyError> {
        Ok(self
            .reflection
            .clone()
            .unwrap_or_else(|| canned_reflection(trajectory, score)))
    }
}
