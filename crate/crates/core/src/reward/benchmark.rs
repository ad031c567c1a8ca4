//! Synthetic preference sets with known ground truth, for checking that
//! training recovers a ranking.

use rand::Rng;

use super::PreferencePair;
use crate::trajectory::{Action, Instruction, Observation, Trajectory};

const FILLER: usize = 50;

fn trajectory(instruction: &Instruction, context: &[usize], last: &str) -> Trajectory {
    let mut t = Trajectory::new(instruction.clone(), Observation::new("start"));
    for f in context {
        t.push(Action::new(format!("look[f{f:02}]")).expect("non-empty"), Observation::new(""), 10)
            .expect("under the cap");
    }
    t.push(Action::new(last).expect("non-empty"), Observation::new(""), 10)
        .expect("under the cap");
    t
}

fn pair_of<R: Rng>(rng: &mut R, i: usize, better: &str, worse: &str) -> PreferencePair {
    let instruction = Instruction::new(format!("bench-{i:05}"), format!("task {i}: pick the better item")).expect("non-empty");
    let context: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..FILLER)).collect();
    let mut p = PreferencePair::new(trajectory(&instruction, &context, better), trajectory(&instruction, &context, worse));
    p.instruction = instruction.text.clone();
    p
}

/// `n` pairs sharing a random context prefix whose last actions come from
/// disjoint good and bad vocabularies of 20 tokens each. Perfectly
/// separable by the last action's unigram.
pub fn separable_pairs(n: usize, seed: u64) -> Vec<PreferencePair> {
    let mut rng = crate::seed::rng(crate::seed::derive(seed, "bench-separable", 0));
    (0..n)
        .map(|i| {
            let good = format!("keep[g{:02}]", rng.random_range(0..20));
            let bad = format!("keep[b{:02}]", rng.random_range(0..20));
            pair_of(&mut rng, i, &good, &bad)
        })
        .collect()
}

/// `n` pairs over `items` ranked items: each pair compares two distinct
/// items and prefers the higher rank. With probability `noise` a pair's
/// sides are swapped. Whether an item wins depends on its partner, so only
/// the ranking, not an absolute label, is consistent across pairs.
pub fn graded_pairs(n: usize, items: usize, noise: f64, seed: u64) -> Vec<PreferencePair> {
    assert!(items >= 2, "need two items to compare");
    let mut rng = crate::seed::rng(crate::seed::derive(seed, "bench-graded", 0));
    (0..n)
        .map(|i| {
            let a = rng.random_range(0..items);
            let b = (a + rng.random_range(1..items)) % items;
            let (hi, lo) = (a.max(b), a.min(b));
            let (mut better, mut worse) = (format!("pick[item{hi:02}]"), format!("pick[item{lo:02}]"));
            if rng.random_bool(noise) {
                std::mem::swap(&mut better, &mut worse);
            }
            pair_of(&mut rng, i, &better, &worse)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = separable_pairs(30, 1);
        assert_eq!(a, separable_pairs(30, 1));
        assert_ne!(a, separable_pairs(30, 2));
        for p in &a {
            p.validate().unwrap();
            let last = |t: &Trajectory| t.steps.last().unwrap().action.as_str().to_string();
            assert!(last(&p.positive).starts_with("keep[g"));
            assert!(last(&p.negative).starts_with("keep[b"));
        }
    }

    #[test]
    fn noise_flips_roughly_its_share() {
        let rank = |t: &Trajectory| {
            let a = t.steps.last().unwrap().action.as_str();
            a["pick[item".len()..a.len() - 1].parse::<usize>().unwrap()
        };
        let clean = graded_pairs(500, 30, 0.0, 3);
        assert!(clean.iter().all(|p| rank(&p.positive) > rank(&p.negative)));
        let noisy = graded_pairs(2000, 30, 0.1, 3);
        let flipped = noisy.iter().filter(|p| rank(&p.positive) < rank(&p.negative)).count();
        assert!((150..250).contains(&flipped), "{flipped}");
    }
}
