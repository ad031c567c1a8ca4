mod common;

use common::{brute_force_24, steps_reach_24};
use proptest::prelude::*;
use rmplan::env::game24::{all_puzzles, oracle_solve, witness_actions};
use rmplan::env::Puzzle;

#[test]
fn oracle_agrees_with_brute_force_on_every_multiset() {
    let puzzles = all_puzzles();
    assert_eq!(puzzles.len(), 1820);
    let mut solvable = 0;
    for p in &puzzles {
        let expected = brute_force_24(p.numbers());
        let got = oracle_solve(p);
        assert_eq!(got.solvable, expected, "{:?}", p.numbers());
        if expected {
            solvable += 1;
            let steps = witness_actions(p).expect("witness for solvable puzzle");
            let steps: Vec<&str> = steps.iter().map(|a| a.as_str()).collect();
            assert!(steps_reach_24(p.numbers(), &steps), "{:?}: {steps:?}", p.numbers());
        } else {
            assert!(witness_actions(p).is_none());
        }
    }
    // Count of solvable multisets over 1..=13.
    assert_eq!(solvable, 1362);
}

proptest! {
    #[test]
    fn solvability_ignores_order(mut nums in prop::array::uniform4(1i64..=13), rot in 0usize..4) {
        let a = oracle_solve(&Puzzle::new(&nums).unwrap()).solvable;
        nums.rotate_left(rot);
        nums.swap(0, 3);
        prop_assert_eq!(a, oracle_solve(&Puzzle::new(&nums).unwrap()).solvable);
    }
}
