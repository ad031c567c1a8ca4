//! Hashed bag-of-n-grams features over a trajectory's text fields.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::trajectory::Trajectory;

pub const DEFAULT_DIM: usize = 1 << 16;
pub const RECIPE_VERSION: &str = "ngram12-fnv1a64-v1";

/// Sparse feature counts; indices are below `dim` and counts positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: BTreeMap<u32, f64>,
}

impl FeatureVector {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries.get(&index).copied().unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `self - other` as a sparse map without zero entries.
    pub fn minus(&self, other: &FeatureVector) -> BTreeMap<u32, f64> {
        let mut out = self.entries.clone();
        for (&i, &c) in &other.entries {
            *out.entry(i).or_insert(0.0) -= c;
        }
        out.retain(|_, v| *v != 0.0);
        out
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Deterministic featurizer. Fields: the instruction (`i:`), every action
/// (`a:`) and every step observation (`o:`). The initial observation is
/// left out; in both environments it restates the instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    pub dim: usize,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl Featurizer {
    /// `dim` must be a power of two.
    pub fn new(dim: usize) -> Option<Self> {
        (dim.is_power_of_two() && dim <= 1 << 31).then_some(Self { dim })
    }

    pub fn index_of(&self, feature: &str) -> u32 {
        (fnv1a64(feature.as_bytes()) & (self.dim as u64 - 1)) as u32
    }

    fn add_field(&self, out: &mut FeatureVector, namespace: &str, text: &str) {
        let toks = tokens(text);
        for t in &toks {
            *out.entries.entry(self.index_of(&format!("{namespace}:{t}"))).or_insert(0.0) += 1.0;
        }
        for w in toks.windows(2) {
            let f = format!("{namespace}:{} {}", w[0], w[1]);
            *out.entries.entry(self.index_of(&f)).or_insert(0.0) += 1.0;
        }
    }

    pub fn featurize(&self, trajectory: &Trajectory) -> FeatureVector {
        let mut out = FeatureVector::new(self.dim);
        self.add_field(&mut out, "i", &trajectory.instruction.text);
        for step in &trajectory.steps {
            self.add_field(&mut out, "a", step.action.as_str());
            self.add_field(&mut out, "o", &step.observation.text);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Action, Instruction, Observation};

    fn traj(instr: &str, steps: &[(&str, &str)]) -> Trajectory {
        let mut t = Trajectory::new(Instruction::new("t", instr).unwrap(), Observation::new("start page"));
        for (a, o) in steps {
            t.push(Action::new(*a).unwrap(), Observation::new(*o), 10).unwrap();
        }
        t
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn instruction_only() {
        let f = Featurizer::default();
        let v = f.featurize(&traj("a", &[]));
        assert_eq!(v.entries, BTreeMap::from([(f.index_of("i:a"), 1.0)]));
    }

    #[test]
    fn counts_unigrams_and_bigrams() {
        let f = Featurizer::default();
        let v = f.featurize(&traj("Buy, buy RED", &[("click[b01]", "Done")]));
        assert_eq!(v.get(f.index_of("i:buy")), 2.0);
        assert_eq!(v.get(f.index_of("i:buy buy")), 1.0);
        assert_eq!(v.get(f.index_of("i:buy red")), 1.0);
        assert_eq!(v.get(f.index_of("a:click b01")), 1.0);
        assert_eq!(v.get(f.index_of("o:done")), 1.0);
        assert_eq!(v.nnz(), 8);
        assert!(v.entries.keys().all(|&i| (i as usize) < f.dim));
    }

    #[test]
    fn one_token_change_moves_features() {
        let f = Featurizer::default();
        let a = f.featurize(&traj("x", &[("search[red shoes]", "ok")]));
        let b = f.featurize(&traj("x", &[("search[blue shoes]", "ok")]));
        assert_eq!(a, f.featurize(&traj("x", &[("search[red shoes]", "ok")])));
        assert!(!a.minus(&b).is_empty());
    }

    #[test]
    fn dim_must_be_power_of_two() {
        assert!(Featurizer::new(1000).is_none());
        assert_eq!(Featurizer::new(1024).unwrap().dim, 1024);
    }
}
