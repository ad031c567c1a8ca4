//! Game of 24: combine four numbers with `+ - * /`, two at a time, until a
//! single number remains. The episode succeeds when that number is exactly 24.
//!
//! Each step is one action, written `10 - 8 = 2 (left: 2 4 12)`. All
//! arithmetic is on exact rationals.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use thiserror::Error;

use crate::trajectory::{
    Action, Environment, Instruction, Observation, TaskOutcome, Trajectory,
};

pub type Rational = Rational64;

pub const TARGET: i64 = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Game24Error {
    #[error("invalid puzzle: {0}")]
    InvalidPuzzle(String),
    #[error("operand {0} is not in the pool")]
    OperandMissing(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("claimed result {claimed} does not equal {actual}")]
    ResultMismatch { claimed: String, actual: String },
    #[error("cannot parse step `{0}`")]
    Parse(String),
    #[error("pool has a single number; no actions remain")]
    TerminalPool,
}

pub fn render_rational(r: &Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<Rational, Game24Error> {
    let bad = || Game24Error::Parse(s.to_string());
    let s = s.replace('\u{2212}', "-");
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.parse().map_err(|_| bad())?;
            let d: i64 = d.parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Four starting numbers, each in `1..=13`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Puzzle([i64; 4]);

impl Puzzle {
    pub fn new(numbers: &[i64]) -> Result<Self, Game24Error> {
        let arr: [i64; 4] = numbers.try_into().map_err(|_| {
            Game24Error::InvalidPuzzle(format!("expected 4 numbers, got {}", numbers.len()))
        })?;
        if let Some(n) = arr.iter().find(|n| !(1..=13).contains(*n)) {
            return Err(Game24Error::InvalidPuzzle(format!(
                "{n} is outside the range 1..=13"
            )));
        }
        Ok(Self(arr))
    }

    pub fn numbers(&self) -> [i64; 4] {
        self.0
    }

    /// Sorted copy; puzzles with the same multiset share a key.
    pub fn canonical(&self) -> Self {
        let mut a = self.0;
        a.sort_unstable();
        Self(a)
    }

    /// Instruction text in the `Input: a b c d` form.
    pub fn instruction_text(&self) -> String {
        format!("Input: {self}")
    }

    /// Reads `Input: a b c d`, `a b c d`, or `a, b, c, d`.
    pub fn from_instruction(text: &str) -> Result<Self, Game24Error> {
        let body = text.trim();
        let body = body
            .strip_prefix("Input:")
            .map(str::trim)
            .unwrap_or(body);
        body.parse()
    }

    pub fn pool(&self) -> NumberPool {
        NumberPool {
            values: self.0.iter().map(|&n| Rational::from_integer(n)).collect(),
        }
    }
}

impl fmt::Display for Puzzle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a} {b} {c} {d}")
    }
}

impl FromStr for Puzzle {
    type Err = Game24Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let numbers = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| Game24Error::InvalidPuzzle(format!("`{t}` is not an integer")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(&numbers)
    }
}

/// Reads a puzzle file: one puzzle per line, blank lines and `#` comments skipped.
pub fn parse_puzzle_file(text: &str) -> Result<Vec<Puzzle>, Game24Error> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

/// Remaining numbers. Order is kept for display of the initial puzzle;
/// comparisons treat the pool as a multiset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NumberPool {
    values: Vec<Rational>,
}

impl NumberPool {
    pub fn from_values(values: Vec<Rational>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sorted(&self) -> Vec<Rational> {
        let mut v = self.values.clone();
        v.sort();
        v
    }

    pub fn same_multiset(&self, other: &NumberPool) -> bool {
        self.sorted() == other.sorted()
    }

    pub fn is_target(&self) -> bool {
        self.values.len() == 1 && self.values[0] == Rational::from_integer(TARGET)
    }

    /// Space-separated values in ascending order, as in `(left: 2 4 12)`.
    pub fn render_sorted(&self) -> String {
        render_list(&self.sorted())
    }

    /// Space-separated values in stored order.
    pub fn render(&self) -> String {
        render_list(&self.values)
    }

    pub fn apply(&self, step: &ArithStep) -> Result<NumberPool, Game24Error> {
        let mut rest = self.values.clone();
        take(&mut rest, &step.lhs)?;
        take(&mut rest, &step.rhs)?;
        let actual = step.op.apply(step.lhs, step.rhs)?;
        if actual != step.claimed_result {
            return Err(Game24Error::ResultMismatch {
                claimed: render_rational(&step.claimed_result),
                actual: render_rational(&actual),
            });
        }
        rest.push(actual);
        Ok(NumberPool { values: rest })
    }
}

fn take(values: &mut Vec<Rational>, v: &Rational) -> Result<(), Game24Error> {
    match values.iter().position(|x| x == v) {
        Some(i) => {
            values.remove(i);
            Ok(())
        }
        None => Err(Game24Error::OperandMissing(render_rational(v))),
    }
}

fn render_list(values: &[Rational]) -> String {
    values
        .iter()
        .map(render_rational)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "+" => Some(Op::Add),
            "-" | "\u{2212}" => Some(Op::Sub),
            "*" | "x" | "\u{00d7}" => Some(Op::Mul),
            "/" | "\u{00f7}" => Some(Op::Div),
            _ => None,
        }
    }

    pub fn apply(self, lhs: Rational, rhs: Rational) -> Result<Rational, Game24Error> {
        Ok(match self {
            Op::Add => lhs + rhs,
            Op::Sub => lhs - rhs,
            Op::Mul => lhs * rhs,
            Op::Div => {
                if rhs == Rational::from_integer(0) {
                    return Err(Game24Error::DivisionByZero);
                }
                lhs / rhs
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArithStep {
    pub lhs: Rational,
    pub op: Op,
    pub rhs: Rational,
    pub claimed_result: Rational,
}

impl ArithStep {
    /// Builds a step whose claimed result is the exact value.
    pub fn exact(lhs: Rational, op: Op, rhs: Rational) -> Result<Self, Game24Error> {
        Ok(Self {
            lhs,
            op,
            rhs,
            claimed_result: op.apply(lhs, rhs)?,
        })
    }

    /// `A op B = C`
    pub fn render(&self) -> String {
        format!(
            "{} {} {} = {}",
            render_rational(&self.lhs),
            self.op.symbol(),
            render_rational(&self.rhs),
            render_rational(&self.claimed_result)
        )
    }

    /// `A op B = C (left: ...)` against the pool the step is applied to.
    pub fn render_with_left(&self, pool_after: &NumberPool) -> String {
        format!("{} (left: {})", self.render(), pool_after.render_sorted())
    }
}

/// A parsed step plus the optional `(left: ...)` annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStep {
    pub step: ArithStep,
    pub left: Option<Vec<Rational>>,
}

/// The `(left: ...)` annotation disagrees with the pool the step produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub annotated: String,
    pub actual: String,
}

impl ParsedStep {
    pub fn check_left(&self, pool_after: &NumberPool) -> Option<ParseWarning> {
        let left = self.left.as_ref()?;
        let mut annotated = left.clone();
        annotated.sort();
        if annotated == pool_after.sorted() {
            None
        } else {
            Some(ParseWarning {
                annotated: render_list(left),
                actual: pool_after.render_sorted(),
            })
        }
    }
}

/// Parses `A op B = C` with an optional trailing `(left: x y ...)`.
pub fn parse_step(text: &str) -> Result<ParsedStep, Game24Error> {
    let bad = || Game24Error::Parse(text.to_string());
    let text = text.trim();
    let (expr, left) = match text.find('(') {
        Some(i) => {
            let ann = text[i..].trim();
            let inner = ann
                .strip_prefix('(')
                .and_then(|a| a.strip_suffix(')'))
                .ok_or_else(bad)?
                .trim();
            let list = inner.strip_prefix("left:").ok_or_else(bad)?;
            let values = list
                .split_whitespace()
                .map(parse_rational)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            if values.is_empty() {
                return Err(bad());
            }
            (text[..i].trim(), Some(values))
        }
        None => (text, None),
    };
    let tokens: Vec<&str> = expr.split_whitespace().collect();
    let [lhs, op, rhs, eq, result] = tokens[..] else {
        return Err(bad());
    };
    if eq != "=" {
        return Err(bad());
    }
    let op = Op::parse(op).ok_or_else(bad)?;
    Ok(ParsedStep {
        step: ArithStep {
            lhs: parse_rational(lhs).map_err(|_| bad())?,
            op,
            rhs: parse_rational(rhs).map_err(|_| bad())?,
            claimed_result: parse_rational(result).map_err(|_| bad())?,
        },
        left,
    })
}

/// Every legal step from `pool`: operand pairs over the ascending-sorted
/// pool in index order, each with the operator variants `a+b, b-a, a-b,
/// a*b, b/a, a/b`. Duplicate renderings and divisions by zero are dropped.
pub fn legal_steps(pool: &NumberPool) -> Vec<ArithStep> {
    let values = pool.sorted();
    let mut out: Vec<ArithStep> = Vec::new();
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let (a, b) = (values[i], values[j]);
            let candidates = [
                (a, Op::Add, b),
                (b, Op::Sub, a),
                (a, Op::Sub, b),
                (a, Op::Mul, b),
                (b, Op::Div, a),
                (a, Op::Div, b),
            ];
            for (l, op, r) in candidates {
                if let Ok(step) = ArithStep::exact(l, op, r) {
                    if !out.contains(&step) {
                        out.push(step);
                    }
                }
            }
        }
    }
    out
}

/// The first `k` legal steps, rendered with their `(left: ...)` annotation.
pub fn enumerate_actions(pool: &NumberPool, k: usize) -> Result<Vec<Action>, Game24Error> {
    if pool.len() < 2 {
        return Err(Game24Error::TerminalPool);
    }
    Ok(legal_steps(pool)
        .into_iter()
        .take(k)
        .map(|step| {
            let after = pool.apply(&step).expect("legal step applies");
            Action::new(step.render_with_left(&after)).expect("step renders on one line")
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub solvable: bool,
    /// Three steps reaching 24, when solvable.
    pub witness: Vec<ArithStep>,
}

/// Exhaustive depth-first search in [`legal_steps`] order; the first
/// solution found is the witness.
pub fn oracle_solve(puzzle: &Puzzle) -> Solution {
    fn search(pool: &NumberPool, path: &mut Vec<ArithStep>) -> bool {
        if pool.len() == 1 {
            return pool.is_target();
        }
        for step in legal_steps(pool) {
            let next = pool.apply(&step).expect("legal step applies");
            path.push(step);
            if search(&next, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut witness = Vec::new();
    let solvable = search(&puzzle.pool(), &mut witness);
    Solution { solvable, witness }
}

/// Probability that choosing uniformly among [`legal_steps`] at every turn
/// ends on 24.
pub fn random_walk_success(pool: &NumberPool) -> f64 {
    if pool.len() <= 1 {
        return if pool.is_target() { 1.0 } else { 0.0 };
    }
    let steps = legal_steps(pool);
    let total: f64 = steps
        .iter()
        .map(|s| random_walk_success(&pool.apply(s).expect("legal step applies")))
        .sum();
    total / steps.len() as f64
}

/// All 1820 multisets of four numbers in 1..=13, ascending.
pub fn all_puzzles() -> Vec<Puzzle> {
    let mut out = Vec::with_capacity(1820);
    for a in 1..=13 {
        for b in a..=13 {
            for c in b..=13 {
                for d in c..=13 {
                    out.push(Puzzle([a, b, c, d]));
                }
            }
        }
    }
    out
}

/// The `n` solvable puzzles a uniform random walk solves most often,
/// most likely first; ties keep ascending order.
pub fn random_walk_suite(n: usize) -> Vec<Puzzle> {
    let mut scored: Vec<(f64, Puzzle)> = all_puzzles()
        .into_iter()
        .map(|p| (random_walk_success(&p.pool()), p))
        .filter(|(prob, _)| *prob > 0.0)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().take(n).map(|(_, p)| p).collect()
}

/// Witness actions rendered with annotations, in replay order.
pub fn witness_actions(puzzle: &Puzzle) -> Option<Vec<Action>> {
    let solution = oracle_solve(puzzle);
    if !solution.solvable {
        return None;
    }
    let mut pool = puzzle.pool();
    let mut actions = Vec::new();
    for step in &solution.witness {
        pool = pool.apply(step).expect("witness replays");
        actions.push(Action::new(step.render_with_left(&pool)).expect("single line"));
    }
    Some(actions)
}

/// Result of replaying a trajectory against a puzzle.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub outcome: TaskOutcome,
    pub final_pool: NumberPool,
    /// First replay error, if any; the outcome is then a failure.
    pub diagnostic: Option<String>,
}

/// Replays every action of `traj` from `puzzle`. Reward is 1 exactly when
/// the final pool is `{24}`; any unparseable or illegal step scores 0.
pub fn oracle_outcome(puzzle: &Puzzle, traj: &Trajectory) -> Replay {
    let mut pool = puzzle.pool();
    for action in traj.actions() {
        let applied = parse_step(action.as_str()).and_then(|p| pool.apply(&p.step));
        match applied {
            Ok(next) => pool = next,
            Err(e) => {
                return Replay {
                    outcome: TaskOutcome::failure(),
                    final_pool: pool,
                    diagnostic: Some(format!("`{action}`: {e}")),
                }
            }
        }
    }
    let reward = if pool.is_target() { 1.0 } else { 0.0 };
    Replay {
        outcome: TaskOutcome::new(reward, 1.0),
        final_pool: pool,
        diagnostic: None,
    }
}

/// Game of 24 as an [`Environment`]. Actions are free-form step strings;
/// `valid_actions` lists every legal step.
#[derive(Debug, Clone, PartialEq)]
pub struct Game24Env {
    puzzle: Puzzle,
    instruction: Instruction,
    pool: NumberPool,
    warnings: Vec<ParseWarning>,
}

impl Game24Env {
    pub fn new(puzzle: Puzzle) -> Self {
        let instruction = Instruction::new(
            format!("g24-{}", puzzle.numbers().map(|n| n.to_string()).join("-")),
            puzzle.instruction_text(),
        )
        .expect("non-empty");
        Self::with_instruction(puzzle, instruction)
    }

    pub fn with_instruction(puzzle: Puzzle, instruction: Instruction) -> Self {
        Self {
            pool: puzzle.pool(),
            puzzle,
            instruction,
            warnings: Vec::new(),
        }
    }

    pub fn from_numbers(numbers: &[i64]) -> Result<Self, Game24Error> {
        Ok(Self::new(Puzzle::new(numbers)?))
    }

    pub fn puzzle(&self) -> &Puzzle {
        &self.puzzle
    }

    pub fn pool(&self) -> &NumberPool {
        &self.pool
    }

    /// Annotation mismatches seen since the last reset.
    pub fn warnings(&self) -> &[ParseWarning] {
        &self.warnings
    }
}

impl Environment for Game24Env {
    fn instruction(&self) -> &Instruction {
        &self.instruction
    }

    fn reset(&mut self) -> Observation {
        self.pool = self.puzzle.pool();
        self.warnings.clear();
        Observation::new(self.pool.render())
    }

    fn valid_actions(&self) -> Vec<Action> {
        enumerate_actions(&self.pool, usize::MAX).unwrap_or_default()
    }

    fn step(&mut self, action: &Action) -> Observation {
        if self.is_terminal() {
            return Observation::invalid_action();
        }
        let Ok(parsed) = parse_step(action.as_str()) else {
            return Observation::invalid_action();
        };
        match self.pool.apply(&parsed.step) {
            Ok(next) => {
                if let Some(w) = parsed.check_left(&next) {
                    log::debug!("left annotation {} differs from {}", w.annotated, w.actual);
                    self.warnings.push(w);
                }
                self.pool = next;
                Observation::new(self.pool.render_sorted())
            }
            Err(_) => Observation::invalid_action(),
        }
    }

    fn is_terminal(&self) -> bool {
        self.pool.len() <= 1
    }

    fn oracle_outcome(&self) -> Option<TaskOutcome> {
        let reward = if self.pool.is_target() { 1.0 } else { 0.0 };
        Some(TaskOutcome::new(reward, 1.0))
    }

    fn free_form_actions(&self) -> bool {
        true
    }

    fn check_action(&self, action: &str) -> Result<(), String> {
        parse_step(action).map(|_| ()).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    fn pool(values: &[i64]) -> NumberPool {
        NumberPool::from_values(values.iter().map(|&v| r(v)).collect())
    }

    #[test]
    fn reset_lists_numbers_in_given_order() {
        let mut env = Game24Env::from_numbers(&[3, 5, 7, 11]).unwrap();
        assert_eq!(env.reset().text, "3 5 7 11");
        assert!(env.pool().same_multiset(&pool(&[3, 5, 7, 11])));
        let env = Game24Env::from_numbers(&[12, 10, 8, 4]).unwrap();
        assert!(env.pool().same_multiset(&pool(&[12, 10, 8, 4])));
    }

    #[test]
    fn out_of_range_or_wrong_arity_is_invalid() {
        assert!(matches!(Puzzle::new(&[1, 1, 1, 14]), Err(Game24Error::InvalidPuzzle(_))));
        assert!(matches!(Puzzle::new(&[0, 1, 1, 1]), Err(Game24Error::InvalidPuzzle(_))));
        assert!(matches!(Puzzle::new(&[1, 2, 3]), Err(Game24Error::InvalidPuzzle(_))));
    }

    #[test]
    fn apply_step_examples() {
        let p = pool(&[12, 10, 8, 4]);
        let next = p.apply(&parse_step("10 - 8 = 2").unwrap().step).unwrap();
        assert!(next.same_multiset(&pool(&[2, 4, 12])));
        let next = pool(&[4, 6])
            .apply(&parse_step("6 * 4 = 24").unwrap().step)
            .unwrap();
        assert!(next.is_target());
    }

    #[test]
    fn apply_step_errors() {
        let step = ArithStep {
            lhs: r(5),
            op: Op::Div,
            rhs: r(0),
            claimed_result: r(0),
        };
        assert_eq!(
            pool(&[5, 3]).apply(&step).unwrap_err(),
            Game24Error::OperandMissing("0".into())
        );
        assert_eq!(pool(&[5, 0]).apply(&step).unwrap_err(), Game24Error::DivisionByZero);
        let wrong = parse_step("5 + 3 = 9").unwrap().step;
        assert!(matches!(
            pool(&[5, 3]).apply(&wrong),
            Err(Game24Error::ResultMismatch { .. })
        ));
    }

    #[test]
    fn equal_operands_need_two_copies() {
        let step = parse_step("6 + 6 = 12").unwrap().step;
        assert!(pool(&[2, 6, 6]).apply(&step).is_ok());
        assert!(matches!(
            pool(&[2, 6, 7]).apply(&step),
            Err(Game24Error::OperandMissing(_))
        ));
    }

    #[test]
    fn parse_step_examples() {
        let p = parse_step("12 / 2 = 6 (left: 4 6)").unwrap();
        assert_eq!(p.step, ArithStep { lhs: r(12), op: Op::Div, rhs: r(2), claimed_result: r(6) });
        assert_eq!(p.left, Some(vec![r(4), r(6)]));
        let p = parse_step("9 - 3 = 6 (left: 2 6 6)").unwrap();
        assert_eq!(p.step, ArithStep { lhs: r(9), op: Op::Sub, rhs: r(3), claimed_result: r(6) });
        assert!(parse_step("hello").is_err());
        assert!(parse_step("1 + 2 = 3 (right: 3)").is_err());
        assert!(parse_step("1 ^ 2 = 3").is_err());
    }

    #[test]
    fn parse_negative_and_fractional_values() {
        let p = parse_step("10 - 12 = -2 (left: -2 4 8)").unwrap();
        assert_eq!(p.step.claimed_result, r(-2));
        let p = parse_step("11 / 4 = 11/4").unwrap();
        assert_eq!(p.step.claimed_result, Rational::new(11, 4));
    }

    #[test]
    fn left_annotation_mismatch_warns() {
        let before = pool(&[12, 10, 8, 4]);
        let p = parse_step("10 - 8 = 2 (left: 2 4 13)").unwrap();
        let after = before.apply(&p.step).unwrap();
        let w = p.check_left(&after).unwrap();
        assert_eq!(w.actual, "2 4 12");
        let ok = parse_step("10 - 8 = 2 (left: 12 4 2)").unwrap();
        assert!(ok.check_left(&after).is_none());
    }

    #[test]
    fn enumerate_pair_gives_six_variants() {
        let actions = enumerate_actions(&pool(&[2, 3]), usize::MAX).unwrap();
        let texts: Vec<_> = actions.iter().map(|a| a.as_str()).collect();
        assert_eq!(
            texts,
            [
                "2 + 3 = 5 (left: 5)",
                "3 - 2 = 1 (left: 1)",
                "2 - 3 = -1 (left: -1)",
                "2 * 3 = 6 (left: 6)",
                "3 / 2 = 3/2 (left: 3/2)",
                "2 / 3 = 2/3 (left: 2/3)",
            ]
        );
    }

    #[test]
    fn enumerate_truncates_in_fixed_order() {
        // sorted pair (4, 6): 4 + 6 first, then 6 - 4
        let actions = enumerate_actions(&pool(&[6, 4]), 2).unwrap();
        let texts: Vec<_> = actions.iter().map(|a| a.as_str()).collect();
        assert_eq!(texts, ["4 + 6 = 10 (left: 10)", "6 - 4 = 2 (left: 2)"]);
        assert_eq!(enumerate_actions(&pool(&[24]), 10).unwrap_err(), Game24Error::TerminalPool);
    }

    #[test]
    fn oracle_solve_examples() {
        let s = oracle_solve(&Puzzle::new(&[3, 5, 7, 11]).unwrap());
        assert!(s.solvable);
        assert_eq!(s.witness.len(), 3);
        let mut p = Puzzle::new(&[3, 5, 7, 11]).unwrap().pool();
        for step in &s.witness {
            p = p.apply(step).unwrap();
        }
        assert!(p.is_target());
        assert!(!oracle_solve(&Puzzle::new(&[1, 1, 1, 1]).unwrap()).solvable);
        assert!(oracle_solve(&Puzzle::new(&[2, 3, 6, 9]).unwrap()).solvable);
    }

    fn traj(puzzle: &Puzzle, actions: &[&str]) -> Trajectory {
        let mut env = Game24Env::new(*puzzle);
        let mut t = Trajectory::new(env.instruction().clone(), env.reset());
        for a in actions {
            let a = Action::new(*a).unwrap();
            let o = env.step(&a);
            t.push(a, o, 10).unwrap();
        }
        t
    }

    #[test]
    fn oracle_outcome_of_appendix_pair() {
        let p = Puzzle::new(&[12, 10, 8, 4]).unwrap();
        let pos = traj(&p, &["10 - 8 = 2 (left: 2 4 12)", "12 / 2 = 6 (left: 4 6)", "6 * 4 = 24 (left: 24)"]);
        assert_eq!(oracle_outcome(&p, &pos).outcome.oracle_reward, 1.0);
        let neg = traj(&p, &["10 - 12 = -2 (left: -2 4 8)", "8 / 4 = 2 (left: -2 2)", "-2 * 2 = -4 (left: -4)"]);
        let replay = oracle_outcome(&p, &neg);
        assert_eq!(replay.outcome.oracle_reward, 0.0);
        assert!(replay.diagnostic.is_none());
        assert_eq!(oracle_outcome(&p, &traj(&p, &[])).outcome.oracle_reward, 0.0);
    }

    #[test]
    fn oracle_outcome_replay_error_scores_zero_with_diagnostic() {
        let p = Puzzle::new(&[12, 10, 8, 4]).unwrap();
        let mut t = traj(&p, &[]);
        t.steps.push(crate::trajectory::Step {
            action: Action::new("13 + 1 = 14").unwrap(),
            observation: Observation::invalid_action(),
        });
        let replay = oracle_outcome(&p, &t);
        assert_eq!(replay.outcome.oracle_reward, 0.0);
        assert!(replay.diagnostic.unwrap().contains("13"));
    }

    #[test]
    fn invalid_action_leaves_state_unchanged() {
        let mut env = Game24Env::from_numbers(&[12, 10, 8, 4]).unwrap();
        env.reset();
        let before = env.clone();
        let o = env.step(&Action::new("look around").unwrap());
        assert!(o.is_invalid_action());
        assert_eq!(env, before);
        let o = env.step(&Action::new("13 + 1 = 14").unwrap());
        assert!(o.is_invalid_action());
        assert_eq!(env, before);
    }

    #[test]
    fn three_steps_reach_terminal() {
        let mut env = Game24Env::from_numbers(&[12, 10, 8, 4]).unwrap();
        env.reset();
        for _ in 0..3 {
            assert!(!env.is_terminal());
            let a = env.valid_actions()[0].clone();
            env.step(&a);
        }
        assert!(env.is_terminal());
        assert!(env.valid_actions().is_empty());
    }

    #[test]
    fn puzzle_file_and_instruction_parsing() {
        let ps = parse_puzzle_file("# comment\n3 5 7 11\n\n12 10 8 4\n").unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(Puzzle::from_instruction("Input: 12 10 8 4").unwrap(), ps[1]);
        assert_eq!(Puzzle::from_instruction("3, 5, 7, 11").unwrap(), ps[0]);
    }
}
