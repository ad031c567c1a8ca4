mod common;

use common::{solvable_puzzles, Babble, Corridor};
use proptest::prelude::*;
use rmplan::env::{Game24Env, Puzzle};
use rmplan::planners::{
    evaluate_suite, rollout, run_best_of_n, run_greedy, run_mcts, run_mcts_traced, run_reflexion, run_sampling, Agent,
    Budget, PlanError, PlannerConfig, PlannerKind, SelectionRule,
};
use rmplan::policy::{RandomPolicy, ScriptKey, ScriptedPolicy};
use rmplan::reward::{FnScorer, OracleScorer};
use rmplan::trajectory::{Action, Environment, INVALID_ACTION_OBSERVATION};

fn g24(numbers: &[i64]) -> Game24Env {
    Game24Env::from_numbers(numbers).unwrap()
}

fn agent<'a>(policy: &'a dyn rmplan::policy::Policy, scorer: &'a dyn rmplan::reward::Scorer, budget: Budget) -> Agent<'a> {
    Agent { policy, scorer, budget }
}

#[test]
fn scripted_solver_rollout_reaches_24() {
    let puzzle = Puzzle::new(&[12, 10, 8, 4]).unwrap();
    let policy = ScriptedPolicy::game24_solver([&puzzle]);
    let (env, traj) = rollout(&Game24Env::new(puzzle), &policy, &Budget::game24(), 1.0, 3).unwrap();
    assert_eq!(traj.len(), 3);
    assert!(traj.terminal);
    assert_eq!(traj.oracle_reward, Some(1.0));
    assert_eq!(env.oracle_outcome().unwrap().oracle_reward, 1.0);
}

#[test]
fn invalid_text_runs_into_the_length_cap() {
    let (_, traj) = rollout(&g24(&[1, 2, 3, 4]), &Babble, &Budget::default(), 1.0, 0).unwrap();
    assert_eq!(traj.len(), 10);
    assert!(traj.observations().skip(1).all(|o| o.text == INVALID_ACTION_OBSERVATION));
    assert!(!traj.terminal);
    assert_eq!(traj.oracle_reward, Some(0.0));
}

#[test]
fn random_rollouts_are_seeded() {
    let env = g24(&[4, 7, 8, 8]);
    let a = rollout(&env, &RandomPolicy, &Budget::game24(), 1.0, 11).unwrap().1;
    let b = rollout(&env, &RandomPolicy, &Budget::game24(), 1.0, 11).unwrap().1;
    assert_eq!(a, b);
    let others: Vec<_> = (12..20).map(|s| rollout(&env, &RandomPolicy, &Budget::game24(), 1.0, s).unwrap().1).collect();
    assert!(others.iter().any(|t| *t != a));
}

#[test]
fn greedy_is_one_temperature_zero_rollout() {
    let env = g24(&[4, 7, 8, 8]);
    let r = run_greedy(&env, agent(&RandomPolicy, &OracleScorer, Budget::game24())).unwrap();
    assert_eq!(r.trajectories_used, 1);
    assert_eq!(r.best().trajectory, rollout(&env, &RandomPolicy, &Budget::game24(), 0.0, 0).unwrap().1);

    let puzzle = Puzzle::new(&[12, 10, 8, 4]).unwrap();
    let solver = ScriptedPolicy::game24_solver([&puzzle]);
    let r = run_greedy(&Game24Env::new(puzzle), agent(&solver, &OracleScorer, Budget::game24())).unwrap();
    assert_eq!(r.best_score(), 1.0);
}

#[test]
fn best_of_one_is_the_sampling_rollout() {
    let env = g24(&[3, 5, 7, 11]);
    let a = agent(&RandomPolicy, &OracleScorer, Budget::game24());
    let bon = run_best_of_n(&env, a, 1, 42).unwrap();
    let sampling = run_sampling(&env, a, 42).unwrap();
    assert_eq!(bon, sampling);
    assert_eq!(bon.best().trajectory, rollout(&env, &RandomPolicy, &Budget::game24(), 1.0, 42).unwrap().1);
}

#[test]
fn best_of_n_selects_the_only_solving_rollout() {
    let env = g24(&[4, 7, 8, 8]);
    let budget = Budget::game24();
    let solves = |s: u64| rollout(&env, &RandomPolicy, &budget, 1.0, s).unwrap().1.oracle_reward == Some(1.0);
    let base = (0..100_000u64)
        .find(|&b| (0..5).all(|i| solves(b + i) == (i == 3)))
        .expect("some seed window has exactly rollout #3 solving");
    let r = run_best_of_n(&env, agent(&RandomPolicy, &OracleScorer, budget), 5, base).unwrap();
    assert_eq!(r.best_index, 3);
    assert_eq!(r.best_score(), 1.0);
}

#[test]
fn best_of_n_ties_go_to_rollout_zero() {
    let flat = FnScorer::new("flat", |_, _| 0.5);
    let r = run_best_of_n(&g24(&[1, 1, 1, 1]), agent(&RandomPolicy, &flat, Budget::game24()), 8, 1).unwrap();
    assert_eq!(r.best_index, 0);
    assert!(matches!(
        run_best_of_n(&g24(&[1, 1, 1, 1]), agent(&RandomPolicy, &flat, Budget::default()), 11, 1),
        Err(PlanError::Config(_))
    ));
}

#[test]
fn reflexion_stops_on_first_trial_above_threshold() {
    let puzzle = Puzzle::new(&[12, 10, 8, 4]).unwrap();
    let solver = ScriptedPolicy::game24_solver([&puzzle]);
    let r = run_reflexion(&Game24Env::new(puzzle), agent(&solver, &OracleScorer, Budget::game24()), 10, 0.99, SelectionRule::Last, 0).unwrap();
    assert_eq!(r.trajectories_used, 1);
    assert!(r.memory.is_empty());
}

#[test]
fn reflexion_exhausts_an_unreachable_threshold() {
    let env = g24(&[4, 7, 8, 8]);
    let budget = Budget::game24();
    let r = run_reflexion(&env, agent(&RandomPolicy, &OracleScorer, budget), 10, 1.1, SelectionRule::Last, 5).unwrap();
    assert_eq!(r.trajectories_used, 10);
    assert_eq!(r.best_index, 9);
    assert_eq!(r.memory.len(), 9);
    let first = run_reflexion(&env, agent(&RandomPolicy, &OracleScorer, budget), 10, 1.1, SelectionRule::First, 5).unwrap();
    assert_eq!(first.best_index, 0);
}

#[test]
fn reflexion_threshold_is_strict() {
    let half = FnScorer::new("half", |_, _| 0.5);
    let env = g24(&[4, 7, 8, 8]);
    let r = run_reflexion(&env, agent(&RandomPolicy, &half, Budget::game24()), 4, 0.5, SelectionRule::Best, 0).unwrap();
    assert_eq!(r.trajectories_used, 4);
    let r = run_reflexion(&env, agent(&RandomPolicy, &half, Budget::game24()), 4, 0.49, SelectionRule::Best, 0).unwrap();
    assert_eq!(r.trajectories_used, 1);
}

#[test]
fn reflection_memory_unlocks_the_second_script() {
    let a = |s: &str| Action::new(s).unwrap();
    let mut policy = ScriptedPolicy::new(ScriptKey::ActionHistory).with_reflection("go left first next time");
    policy.insert(0, "", a("right"), 1.0);
    policy.insert(0, "right", a("right"), 1.0);
    policy.insert(0, "right || right", a("right"), 1.0);
    policy.insert(1, "", a("left"), 1.0);
    policy.insert(1, "left", a("left"), 1.0);
    policy.insert(1, "left || left", a("left"), 1.0);
    let r = run_reflexion(&Corridor::new(3), agent(&policy, &OracleScorer, Budget::default()), 5, 0.5, SelectionRule::Last, 0).unwrap();
    assert_eq!(r.trajectories_used, 2);
    assert_eq!(r.best().score, 1.0);
    assert_eq!(r.memory.len(), 1);
    assert_eq!(r.memory[0].reflection, "go left first next time");
    assert_eq!(r.memory[0].trial_digest, r.explored[0].trajectory.digest());
}

#[test]
fn mcts_budget_one_is_a_single_rollout() {
    let env = g24(&[3, 5, 7, 11]);
    let budget = Budget { max_trajectories: 1, ..Budget::game24() };
    let r = run_mcts(&env, agent(&RandomPolicy, &OracleScorer, budget), 1.4, 9).unwrap();
    assert_eq!(r.trajectories_used, 1);
    assert_eq!(r.best_index, 0);
    assert_eq!(r.best().trajectory.len(), 3);
}

#[test]
fn mcts_with_zero_exploration_keeps_descending_the_better_arm() {
    let arm = FnScorer::new("arm", |t: &rmplan::trajectory::Trajectory, _: &_| {
        if t.actions().next().map(Action::as_str) == Some("left") { 1.0 } else { 0.0 }
    });
    let (r, trace) = run_mcts_traced(&Corridor::new(5), agent(&RandomPolicy, &arm, Budget::default()), 0.0, 3).unwrap();
    assert_eq!(r.trajectories_used, 10);
    let root = &trace.nodes[0];
    assert_eq!(root.children.len(), 2);
    let left = *root
        .children
        .iter()
        .find(|&&c| trace.nodes[c].action.as_ref().unwrap().as_str() == "left")
        .unwrap();
    let first_two: Vec<usize> = trace.simulations[..2].iter().map(|s| s.path[1]).collect();
    assert!(first_two.contains(&left) && first_two.iter().any(|&c| c != left));
    assert!(trace.simulations[2..].iter().all(|s| s.path[1] == left));
    assert_eq!(r.best_score(), 1.0);
    trace.backup_consistent().unwrap();
}

#[test]
fn mcts_stops_when_the_tree_is_exhausted() {
    let scorer = FnScorer::new("zero", |_, _| 0.0);
    for (budget, expected) in [(5, 5), (8, 8), (20, 8)] {
        let b = Budget { max_trajectories: budget, ..Budget::default() };
        let (r, trace) = run_mcts_traced(&Corridor::new(3), agent(&RandomPolicy, &scorer, b), 1.0, 0).unwrap();
        assert_eq!(r.trajectories_used, expected);
        let mut keys: Vec<String> = r.explored.iter().map(|e| e.trajectory.to_json_line()).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), expected);
        trace.backup_consistent().unwrap();
    }
}

#[test]
fn mcts_with_exhaustive_proposals_finds_a_solution() {
    for numbers in [[3, 5, 7, 11], [1, 5, 5, 5], [3, 3, 8, 8], [12, 10, 8, 4]] {
        let puzzle = Puzzle::new(&numbers).unwrap();
        let policy = ScriptedPolicy::game24_solver([&puzzle]);
        let (r, trace) = run_mcts_traced(&Game24Env::new(puzzle), agent(&policy, &OracleScorer, Budget::game24()), 1.4, 0).unwrap();
        assert_eq!(r.best_score(), 1.0, "{numbers:?}");
        assert!(r.trajectories_used <= 100);
        trace.backup_consistent().unwrap();
    }
}

#[test]
fn suite_with_exhaustive_mcts_solves_everything() {
    let puzzles = solvable_puzzles(10);
    let envs: Vec<Game24Env> = puzzles.iter().cloned().map(Game24Env::new).collect();
    let cfg = PlannerConfig::new(PlannerKind::Mcts, Budget::game24());
    let policy = ScriptedPolicy::game24_solver(&puzzles);
    let runs = evaluate_suite(&envs, &cfg, &policy, &OracleScorer, &[0, 1]).unwrap();
    assert_eq!(runs.len(), 20);
    assert!(runs.iter().all(|r| r.success));
    assert!(matches!(
        evaluate_suite::<Game24Env>(&[], &cfg, &policy, &OracleScorer, &[0]),
        Err(PlanError::Config(_))
    ));
}

#[test]
fn suite_tables_are_reproducible() {
    let envs: Vec<Game24Env> = solvable_puzzles(6).into_iter().map(Game24Env::new).collect();
    let cfg = PlannerConfig::new(PlannerKind::Bon, Budget::game24());
    let render = || {
        let runs = evaluate_suite(&envs, &cfg, &RandomPolicy, &OracleScorer, &[1, 2, 3]).unwrap();
        let rows: Vec<rmplan::metrics::MetricRow> = runs.iter().map(Into::into).collect();
        let mut csv = Vec::new();
        rmplan::metrics::write_csv(&mut csv, &rows).unwrap();
        (csv, rmplan::metrics::MetricsTable::new(rows).render())
    };
    assert_eq!(render(), render());
}

fn puzzle_strategy() -> impl Strategy<Value = [i64; 4]> {
    prop::array::uniform4(1i64..=13)
}

fn planner_strategy() -> impl Strategy<Value = PlannerKind> {
    prop_oneof![
        Just(PlannerKind::Sampling),
        Just(PlannerKind::Greedy),
        Just(PlannerKind::Bon),
        Just(PlannerKind::Reflexion),
        Just(PlannerKind::Mcts),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn budgets_hold_for_every_planner(
        numbers in puzzle_strategy(),
        kind in planner_strategy(),
        max_traj in 1usize..12,
        max_actions in 1usize..5,
        seed in any::<u64>(),
    ) {
        let budget = Budget { max_trajectories: max_traj, max_actions_per_trajectory: max_actions, top_k_actions: 64 };
        let cfg = PlannerConfig::new(kind, budget);
        let r = cfg.run(&g24(&numbers), &RandomPolicy, &OracleScorer, seed).unwrap();
        prop_assert!(r.trajectories_used <= max_traj);
        prop_assert_eq!(r.trajectories_used, r.explored.len());
        prop_assert!(r.best_index < r.explored.len());
        for e in &r.explored {
            prop_assert!(e.trajectory.len() <= max_actions);
        }
        if kind != PlannerKind::Reflexion {
            let max = r.explored.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(r.best_score(), max);
            let first = r.explored.iter().position(|e| e.score == max).unwrap();
            prop_assert_eq!(r.best_index, first);
        }
    }

    #[test]
    fn corridor_budgets_hold(kind in planner_strategy(), depth in 1usize..14, seed in any::<u64>()) {
        let budget = Budget::default();
        let cfg = PlannerConfig::new(kind, budget);
        let r = cfg.run(&Corridor::new(depth), &RandomPolicy, &OracleScorer, seed).unwrap();
        prop_assert!(r.trajectories_used <= 10);
        for e in &r.explored {
            prop_assert!(e.trajectory.len() <= 10);
        }
    }

    #[test]
    fn best_of_n_is_monotone_in_n(numbers in puzzle_strategy(), n in 1usize..10, seed in any::<u64>()) {
        let learned_like = FnScorer::new("len-hash", |t: &rmplan::trajectory::Trajectory, _: &_| {
            (rmplan::reward::features::fnv1a64(t.to_json_line().as_bytes()) % 1000) as f64
        });
        let a = agent(&RandomPolicy, &learned_like, Budget::game24());
        let small = run_best_of_n(&g24(&numbers), a, n, seed).unwrap();
        let large = run_best_of_n(&g24(&numbers), a, n + 1, seed).unwrap();
        prop_assert!(large.best_score() >= small.best_score());
        let oracle = run_best_of_n(&g24(&numbers), agent(&RandomPolicy, &OracleScorer, Budget::game24()), n, seed).unwrap();
        let max = oracle.explored.iter().filter_map(|e| e.trajectory.oracle_reward).fold(0.0, f64::max);
        prop_assert_eq!(oracle.best().trajectory.oracle_reward, Some(max));
    }

    #[test]
    fn mcts_backup_matches_simulations(depth in 1usize..6, budget in 1usize..40, c in 0.0f64..3.0, seed in any::<u64>()) {
        let noisy = FnScorer::new("noisy", |t: &rmplan::trajectory::Trajectory, _: &_| {
            (rmplan::reward::features::fnv1a64(t.to_json_line().as_bytes()) % 97) as f64 / 97.0
        });
        let b = Budget { max_trajectories: budget, ..Budget::default() };
        let (r, trace) = run_mcts_traced(&Corridor::new(depth), agent(&RandomPolicy, &noisy, b), c, seed).unwrap();
        prop_assert!(trace.backup_consistent().is_ok(), "{:?}", trace.backup_consistent());
        prop_assert_eq!(r.trajectories_used, budget.min(1 << depth));
    }
}
