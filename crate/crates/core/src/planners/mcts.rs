//! Monte Carlo tree search with max backup.
//!
//! Each iteration selects by UCT (untried actions first, in proposal
//! order), expands one child, simulates a temperature-1 rollout to the end,
//! scores the whole trajectory and backs the score up as a running max.
//! The simulated path is kept in the tree, so no complete trajectory is
//! simulated twice; nodes whose subtrees are fully explored are skipped and
//! the search ends early once the root is exhausted.

use std::collections::VecDeque;

use super::{argmax_first, continue_rollout, finish, scored, Agent, Explored, PlanError, PlanResult};
use crate::policy::{PolicyContext, PolicyError};
use crate::reward::features::fnv1a64;
use crate::trajectory::{Action, Environment, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    /// Hash of the observation sequence leading here.
    pub key: u64,
    pub action: Option<Action>,
    pub parent: Option<usize>,
    pub depth: usize,
    pub visits: u64,
    /// Max score over simulations through this node; `-inf` before any.
    pub value: f64,
    /// Child indices in creation order.
    pub children: Vec<usize>,
    /// Proposed actions not yet expanded; `None` until first needed.
    pub untried: Option<VecDeque<Action>>,
    /// Terminal state, action cap reached, or no actions available.
    pub leaf: bool,
    pub exhausted: bool,
}

impl SearchNode {
    fn new(key: u64, action: Option<Action>, parent: Option<usize>, depth: usize) -> Self {
        Self {
            key,
            action,
            parent,
            depth,
            visits: 0,
            value: f64::NEG_INFINITY,
            children: Vec::new(),
            untried: None,
            leaf: false,
            exhausted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Node indices from the root to the simulated leaf.
    pub path: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MctsTrace {
    pub nodes: Vec<SearchNode>,
    pub simulations: Vec<Simulation>,
}

impl MctsTrace {
    /// Checks that every node's visits and value agree with the recorded
    /// simulations through it.
    pub fn backup_consistent(&self) -> Result<(), String> {
        for (i, node) in self.nodes.iter().enumerate() {
            let through: Vec<f64> = self
                .simulations
                .iter()
                .filter(|s| s.path.contains(&i))
                .map(|s| s.score)
                .collect();
            let max = through.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if node.visits != through.len() as u64 || node.value != max {
                return Err(format!(
                    "node {i}: visits {} value {} but {} simulations with max {max}",
                    node.visits,
                    node.value,
                    through.len()
                ));
            }
        }
        Ok(())
    }
}

fn state_key(traj: &Trajectory) -> u64 {
    let mut bytes = traj.initial_observation.text.clone().into_bytes();
    for o in traj.observations().skip(1) {
        bytes.push(0x1f);
        bytes.extend_from_slice(o.text.as_bytes());
    }
    fnv1a64(&bytes)
}

fn uct(value: f64, visits: u64, parent_visits: u64, c: f64) -> f64 {
    if c == 0.0 {
        return value;
    }
    value + c * ((parent_visits.max(1) as f64).ln() / visits as f64).sqrt()
}

struct Search<'a, E: Environment> {
    agent: Agent<'a>,
    c: f64,
    seed: u64,
    nodes: Vec<SearchNode>,
    root_env: E,
    root_traj: Trajectory,
}

impl<E: Environment> Search<'_, E> {
    fn is_leaf(&self, env: &E, traj: &Trajectory) -> bool {
        env.is_terminal()
            || traj.len() >= self.agent.budget.max_actions_per_trajectory
            || (env.valid_actions().is_empty() && !env.free_form_actions())
    }

    fn child_with(&self, node: usize, action: &Action) -> Option<usize> {
        self.nodes[node]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].action.as_ref() == Some(action))
    }

    fn add_child(&mut self, parent: usize, action: Action, env: &E, traj: &Trajectory) -> usize {
        let mut node = SearchNode::new(state_key(traj), Some(action), Some(parent), traj.len());
        node.leaf = self.is_leaf(env, traj);
        self.nodes.push(node);
        let id = self.nodes.len() - 1;
        self.nodes[parent].children.push(id);
        id
    }

    fn ensure_untried(&mut self, node: usize, env: &E, traj: &Trajectory) -> Result<(), PlanError> {
        if self.nodes[node].untried.is_some() {
            return Ok(());
        }
        let valid = env.valid_actions();
        let check = |a: &str| env.check_action(a);
        let key = self.nodes[node].key;
        let mut ctx = PolicyContext::new(traj, &valid, 1.0, crate::seed::derive(self.seed, "expand", key));
        if env.free_form_actions() {
            ctx = ctx.with_free_form(&check);
        }
        let proposals = match self.agent.policy.propose(&ctx, self.agent.budget.top_k_actions) {
            Ok(p) => p,
            Err(PolicyError::NoValidActions) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut untried: VecDeque<Action> = VecDeque::new();
        for p in proposals {
            if !untried.contains(&p.action) {
                untried.push_back(p.action);
            }
        }
        self.nodes[node].untried = Some(untried);
        Ok(())
    }

    fn next_untried(&mut self, node: usize) -> Option<Action> {
        loop {
            let a = self.nodes[node].untried.as_mut()?.pop_front()?;
            if self.child_with(node, &a).is_none() {
                return Some(a);
            }
        }
    }

    fn untried_left(&self, node: usize) -> bool {
        match &self.nodes[node].untried {
            None => true,
            Some(u) => u.iter().any(|a| self.child_with(node, a).is_none()),
        }
    }

    fn select_child(&self, node: usize) -> Option<usize> {
        let parent_visits = self.nodes[node].visits;
        let open: Vec<usize> = self.nodes[node]
            .children
            .iter()
            .copied()
            .filter(|&c| !self.nodes[c].exhausted)
            .collect();
        if open.is_empty() {
            return None;
        }
        let scores = open.iter().map(|&c| {
            let n = &self.nodes[c];
            uct(n.value, n.visits, parent_visits, self.c)
        });
        Some(open[argmax_first(scores)])
    }

    /// One select/expand/simulate/backup pass. `None` when nothing is left
    /// to explore.
    fn iterate(&mut self, iteration: u64) -> Result<Option<(Explored, Vec<usize>)>, PlanError> {
        let mut env = self.root_env.clone();
        let mut traj = self.root_traj.clone();
        let mut node = 0;
        let mut path = vec![0];
        loop {
            if self.nodes[node].leaf {
                break;
            }
            self.ensure_untried(node, &env, &traj)?;
            if let Some(action) = self.next_untried(node) {
                let o = env.step(&action);
                traj.steps.push(crate::trajectory::Step {
                    action: action.clone(),
                    observation: o,
                });
                node = self.add_child(node, action, &env, &traj);
                path.push(node);
                break;
            }
            match self.select_child(node) {
                Some(child) => {
                    let action = self.nodes[child].action.clone().expect("child has an action");
                    let o = env.step(&action);
                    traj.steps.push(crate::trajectory::Step { action, observation: o });
                    node = child;
                    path.push(node);
                }
                None => {
                    // Stale bookkeeping: close the node and retry from the root.
                    self.nodes[node].exhausted = true;
                    self.refresh_exhaustion(&path);
                    return if self.nodes[0].exhausted { Ok(None) } else { self.iterate(iteration) };
                }
            }
        }
        if self.nodes[node].leaf && self.nodes[node].visits > 0 {
            self.nodes[node].exhausted = true;
            self.refresh_exhaustion(&path);
            return if self.nodes[0].exhausted { Ok(None) } else { self.iterate(iteration) };
        }
        let start = traj.len();
        let sim_seed = crate::seed::derive(self.seed, "simulate", iteration);
        continue_rollout(&mut env, &mut traj, self.agent.policy, &self.agent.budget, 1.0, sim_seed, &[])?;
        if traj.len() > start {
            // Record the simulated suffix; the final node is a leaf.
            let mut replay = self.root_env.clone();
            let mut prefix = self.root_traj.clone();
            for step in &traj.steps {
                replay.step(&step.action);
                prefix.steps.push(step.clone());
                if prefix.len() > start {
                    node = self.add_child(node, step.action.clone(), &replay, &prefix);
                    path.push(node);
                }
            }
            self.nodes[node].leaf = true;
        }
        finish(&env, &mut traj);
        let explored = scored(&env, traj, self.agent.scorer)?;
        for &n in &path {
            let node = &mut self.nodes[n];
            node.visits += 1;
            node.value = node.value.max(explored.score);
        }
        self.refresh_exhaustion(&path);
        Ok(Some((explored, path)))
    }

    fn refresh_exhaustion(&mut self, path: &[usize]) {
        for &n in path.iter().rev() {
            let node = &self.nodes[n];
            let done = (node.leaf && node.visits > 0)
                || node.exhausted
                || (!self.untried_left(n) && node.children.iter().all(|&c| self.nodes[c].exhausted));
            self.nodes[n].exhausted = done;
        }
    }
}

/// MCTS within `budget.max_trajectories` simulations.
pub fn run_mcts<E: Environment>(env: &E, agent: Agent<'_>, exploration_c: f64, seed: u64) -> Result<PlanResult, PlanError> {
    Ok(run_mcts_traced(env, agent, exploration_c, seed)?.0)
}

pub fn run_mcts_traced<E: Environment>(
    env: &E,
    agent: Agent<'_>,
    exploration_c: f64,
    seed: u64,
) -> Result<(PlanResult, MctsTrace), PlanError> {
    agent.budget.validate()?;
    if !(exploration_c >= 0.0 && exploration_c.is_finite()) {
        return Err(PlanError::Config("exploration_c must be finite and >= 0".into()));
    }
    let (root_env, root_traj) = env.fresh();
    let mut root = SearchNode::new(state_key(&root_traj), None, None, 0);
    let mut search = Search {
        agent,
        c: exploration_c,
        seed,
        nodes: Vec::new(),
        root_env,
        root_traj,
    };
    root.leaf = search.is_leaf(&search.root_env, &search.root_traj);
    search.nodes.push(root);
    let mut explored = Vec::new();
    let mut simulations = Vec::new();
    let mut iteration = 0u64;
    while explored.len() < agent.budget.max_trajectories && !search.nodes[0].exhausted {
        match search.iterate(iteration)? {
            Some((e, path)) => {
                simulations.push(Simulation { path, score: e.score });
                explored.push(e);
            }
            None => break,
        }
        iteration += 1;
    }
    let best_index = argmax_first(explored.iter().map(|e| e.score));
    let result = PlanResult {
        best_index,
        trajectories_used: explored.len(),
        explored,
        memory: Vec::new(),
    };
    Ok((
        result,
        MctsTrace {
            nodes: search.nodes,
            simulations,
        },
    ))
}
