use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use super::{DatagenError, RefinedInstruction};
use crate::reward::PreferencePair;
use crate::trajectory::Trajectory;

/// A candidate pair before validation and deduplication.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub instruction: RefinedInstruction,
    pub positive: Trajectory,
    pub negative: Trajectory,
}

impl DatasetItem {
    pub fn new(instruction: RefinedInstruction, positive: Trajectory, negative: Trajectory) -> Self {
        Self {
            instruction,
            positive,
            negative,
        }
    }

    fn to_pair(&self) -> PreferencePair {
        let mut pair = PreferencePair::new(self.positive.clone(), self.negative.clone());
        pair.instruction = self.instruction.text.clone();
        pair.meta.insert("source_id".into(), self.instruction.source_id.clone().into());
        pair
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSummary {
    pub pairs_emitted: usize,
    pub duplicates: usize,
    pub rejects: BTreeMap<String, usize>,
}

fn reject_reason(item: &DatasetItem, pair: &PreferencePair) -> Option<&'static str> {
    if pair.validate().is_err() {
        return Some(if pair.positive.to_json_line() == pair.negative.to_json_line() {
            "identical"
        } else {
            "invalid_trajectory"
        });
    }
    if item.positive.instruction.text != item.instruction.text || item.negative.instruction.text != item.instruction.text {
        return Some("instruction_mismatch");
    }
    if let (Some(p), Some(n)) = (item.positive.oracle_reward, item.negative.oracle_reward) {
        if n >= p {
            return Some("not_preferred");
        }
    }
    None
}

/// Writes valid, distinct pairs to `out` as JSONL in input order.
pub fn build_dataset(items: &[DatasetItem], out: &Path) -> Result<DatasetSummary, DatagenError> {
    let io = |e: std::io::Error| DatagenError::Io(format!("{}: {e}", out.display()));
    let mut summary = DatasetSummary::default();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    let mut file = std::io::BufWriter::new(std::fs::File::create(out).map_err(io)?);
    for item in items {
        let pair = item.to_pair();
        if let Some(reason) = reject_reason(item, &pair) {
            *summary.rejects.entry(reason.into()).or_default() += 1;
            continue;
        }
        if !seen.insert(pair.key()) {
            summary.duplicates += 1;
            continue;
        }
        writeln!(file, "{}", pair.to_json_line()).map_err(io)?;
        summary.pairs_emitted += 1;
    }
    file.flush().map_err(io)?;
    Ok(summary)
}
