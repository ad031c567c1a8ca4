#![allow(dead_code)]

use rmplan::policy::{Policy, PolicyContext, PolicyError, Proposal};
use rmplan::trajectory::{Action, Environment, Instruction, Observation, TaskOutcome};

/// Binary corridor: `left`/`right` until `depth` moves; succeeds when the
/// first move was `left`.
#[derive(Debug, Clone)]
pub struct Corridor {
    pub depth: usize,
    pub path: Vec<&'static str>,
    instruction: Instruction,
}

impl Corridor {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            path: Vec::new(),
            instruction: Instruction::new(format!("corridor-{depth}"), "walk left first").unwrap(),
        }
    }
}

impl Environment for Corridor {
    fn instruction(&self) -> &Instruction {
        &self.instruction
    }

    fn reset(&mut self) -> Observation {
        self.path.clear();
        Observation::new("start")
    }

    fn valid_actions(&self) -> Vec<Action> {
        if self.is_terminal() {
            return Vec::new();
        }
        vec![Action::new("left").unwrap(), Action::new("right").unwrap()]
    }

    fn step(&mut self, action: &Action) -> Observation {
        if self.is_terminal() {
            return Observation::invalid_action();
        }
        match action.as_str() {
            "left" => self.path.push("L"),
            "right" => self.path.push("R"),
            _ => return Observation::invalid_action(),
        }
        Observation::new(format!("at {}", self.path.concat()))
    }

    fn is_terminal(&self) -> bool {
        self.path.len() >= self.depth
    }

    fn oracle_outcome(&self) -> Option<TaskOutcome> {
        let ok = self.is_terminal() && self.path.first() == Some(&"L");
        Some(TaskOutcome::new(if ok { 1.0 } else { 0.0 }, 1.0))
    }
}

/// Always answers with text no environment understands.
pub struct Babble;

impl Policy for Babble {
    fn name(&self) -> String {
        "babble".into()
    }

    fn propose(&self, _ctx: &PolicyContext<'_>, _k: usize) -> Result<Vec<Proposal>, PolicyError> {
        Ok(vec![Proposal {
            action: Action::new("let me think about it").unwrap(),
            weight: 1.0,
            thought: None,
            free_form: true,
        }])
    }
}

/// Solvable puzzles in canonical order, first `n`.
pub fn solvable_puzzles(n: usize) -> Vec<rmplan::env::Puzzle> {
    let mut out = Vec::new();
    for a in 1..=13 {
        for b in a..=13 {
            for c in b..=13 {
                for d in c..=13 {
                    let p = rmplan::env::Puzzle::new(&[a, b, c, d]).unwrap();
                    if rmplan::env::game24::oracle_solve(&p).solvable {
                        out.push(p);
                        if out.len() == n {
                            return out;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Exact fraction with a positive denominator.
#[derive(Clone, Copy, PartialEq, Eq)]
struct Frac(i64, i64);

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

impl Frac {
    fn norm(n: i64, d: i64) -> Option<Frac> {
        if d == 0 {
            return None;
        }
        let g = gcd(n, d).max(1) * d.signum();
        Some(Frac(n / g, d / g))
    }
}

fn reach24(vals: &[Frac]) -> bool {
    if vals.len() == 1 {
        return vals[0] == Frac(24, 1);
    }
    for i in 0..vals.len() {
        for j in 0..vals.len() {
            if i == j {
                continue;
            }
            let rest: Vec<Frac> = (0..vals.len()).filter(|&k| k != i && k != j).map(|k| vals[k]).collect();
            let (Frac(a, b), Frac(c, d)) = (vals[i], vals[j]);
            let candidates = [
                Frac::norm(a * d + c * b, b * d),
                Frac::norm(a * d - c * b, b * d),
                Frac::norm(a * c, b * d),
                Frac::norm(a * d, b * c),
            ];
            for r in candidates.into_iter().flatten() {
                let mut next = rest.clone();
                next.push(r);
                if reach24(&next) {
                    return true;
                }
            }
        }
    }
    false
}

/// Independent brute force over ordered pairs and the four operations.
pub fn brute_force_24(numbers: [i64; 4]) -> bool {
    reach24(&numbers.map(|n| Frac(n, 1)))
}

fn parse_frac(s: &str) -> Option<Frac> {
    match s.split_once('/') {
        Some((n, d)) => Frac::norm(n.parse().ok()?, d.parse().ok()?),
        None => Some(Frac(s.parse().ok()?, 1)),
    }
}

/// Replays `a op b = c (left: ...)` steps on `numbers` with independent
/// arithmetic; true when every claim holds and the last value is 24.
pub fn steps_reach_24(numbers: [i64; 4], steps: &[&str]) -> bool {
    let mut pool: Vec<Frac> = numbers.iter().map(|&n| Frac(n, 1)).collect();
    for step in steps {
        let expr = step.split(" (left:").next().unwrap_or("");
        let tokens: Vec<&str> = expr.split_whitespace().collect();
        let [a, op, b, "=", c] = tokens[..] else {
            return false;
        };
        let (Some(a), Some(b), Some(c)) = (parse_frac(a), parse_frac(b), parse_frac(c)) else {
            return false;
        };
        let (Frac(an, ad), Frac(bn, bd)) = (a, b);
        let value = match op {
            "+" => Frac::norm(an * bd + bn * ad, ad * bd),
            "-" => Frac::norm(an * bd - bn * ad, ad * bd),
            "*" => Frac::norm(an * bn, ad * bd),
            "/" => Frac::norm(an * bd, ad * bn),
            _ => None,
        };
        if value != Some(c) {
            return false;
        }
        for x in [a, b] {
            let Some(i) = pool.iter().position(|&p| p == x) else {
                return false;
            };
            pool.remove(i);
        }
        pool.push(c);
    }
    pool == [Frac(24, 1)]
}
