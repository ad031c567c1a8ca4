//! Linear reward head over hashed features, pairwise and classification
//! objectives, mini-batch SGD and the JSON model file.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{FeatureVector, Featurizer, RECIPE_VERSION};
use super::{RewardError, Scorer};
use crate::trajectory::{EpisodeInfo, Trajectory, TrajectoryError};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `-ln σ(Δ)`.
pub fn pairwise_loss_from_delta(delta: f64) -> f64 {
    softplus(-delta)
}

/// Binary cross-entropy of `σ(score)` against `label`.
pub fn classification_loss_from_score(score: f64, label: bool) -> f64 {
    if label {
        softplus(-score)
    } else {
        softplus(score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub instruction: String,
    pub positive: Trajectory,
    pub negative: Trajectory,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl PreferencePair {
    pub fn new(positive: Trajectory, negative: Trajectory) -> Self {
        Self {
            instruction: positive.instruction.text.clone(),
            positive,
            negative,
            meta: BTreeMap::new(),
        }
    }

    /// Serialized (instruction, positive, negative) triple, used for
    /// inequality and duplicate checks.
    pub fn key(&self) -> (String, String, String) {
        (
            self.instruction.clone(),
            self.positive.to_json_line(),
            self.negative.to_json_line(),
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        self.positive.validate().map_err(|e| format!("positive: {e}"))?;
        self.negative.validate().map_err(|e| format!("negative: {e}"))?;
        if self.positive.to_json_line() == self.negative.to_json_line() {
            return Err("positive and negative trajectories are identical".into());
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("pair serializes")
    }
}

pub fn write_pairs<W: Write>(mut w: W, pairs: &[PreferencePair]) -> std::io::Result<()> {
    for p in pairs {
        writeln!(w, "{}", p.to_json_line())?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(r: R) -> Result<Vec<PreferencePair>, TrajectoryError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| TrajectoryError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PreferencePair = serde_json::from_str(&line).map_err(|e| TrajectoryError::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(pair);
    }
    Ok(out)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>, RewardError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| RewardError::Io(format!("{}: {e}", path.display())))?;
    read_pairs(std::io::BufReader::new(f)).map_err(|e| RewardError::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub recipe_version: String,
    /// sha256 of the training configuration and dataset, empty if untrained.
    pub train_digest: String,
}

impl RewardParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weights: vec![0.0; dim],
            bias: 0.0,
            recipe_version: RECIPE_VERSION.into(),
            train_digest: String::new(),
        }
    }

    pub fn score_features(&self, phi: &FeatureVector) -> Result<f64, RewardError> {
        if phi.dim != self.dim {
            return Err(RewardError::DimensionMismatch {
                model: self.dim,
                features: phi.dim,
            });
        }
        Ok(phi.entries.iter().map(|(&i, &c)| self.weights[i as usize] * c).sum::<f64>() + self.bias)
    }

    fn dot_sparse(&self, v: &BTreeMap<u32, f64>) -> f64 {
        v.iter().map(|(&i, &c)| self.weights[i as usize] * c).sum()
    }

    pub fn pairwise_loss(&self, pos: &FeatureVector, neg: &FeatureVector) -> Result<f64, RewardError> {
        Ok(pairwise_loss_from_delta(self.score_features(pos)? - self.score_features(neg)?))
    }

    /// Sparse `∂L/∂w`; `∂L/∂b` is zero under this objective.
    pub fn pairwise_grad(&self, pos: &FeatureVector, neg: &FeatureVector) -> Result<BTreeMap<u32, f64>, RewardError> {
        let delta = self.score_features(pos)? - self.score_features(neg)?;
        let g = sigmoid(delta) - 1.0;
        let mut diff = pos.minus(neg);
        diff.values_mut().for_each(|v| *v *= g);
        diff.retain(|_, v| *v != 0.0);
        Ok(diff)
    }

    pub fn classification_loss(&self, phi: &FeatureVector, label: bool) -> Result<f64, RewardError> {
        Ok(classification_loss_from_score(self.score_features(phi)?, label))
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainTarget {
    #[default]
    Pairwise,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub target: TrainTarget,
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
            target: TrainTarget::Pairwise,
            dim: super::features::DEFAULT_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<Featurizer, RewardError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RewardError::Config("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(RewardError::Config("epochs and batch_size must be >= 1".into()));
        }
        Featurizer::new(self.dim).ok_or_else(|| RewardError::Config(format!("dim {} is not a power of two", self.dim)))
    }
}

#[derive(Debug, Clone)]
pub struct FeaturizedPair {
    pub positive: FeatureVector,
    pub negative: FeatureVector,
}

pub fn featurize_pairs(featurizer: &Featurizer, pairs: &[PreferencePair]) -> Vec<FeaturizedPair> {
    pairs
        .par_iter()
        .map(|p| FeaturizedPair {
            positive: featurizer.featurize(&p.positive),
            negative: featurizer.featurize(&p.negative),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RewardParams,
    /// Mean training loss per epoch, measured on each batch before its update.
    pub loss_history: Vec<f64>,
}

fn train_digest(cfg: &TrainConfig, pairs: &[PreferencePair]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(cfg).expect("config serializes"));
    for p in pairs {
        h.update(p.positive.to_json_line());
        h.update(p.negative.to_json_line());
    }
    hex::encode(h.finalize())
}

pub fn train(pairs: &[PreferencePair], cfg: &TrainConfig) -> Result<TrainOutcome, RewardError> {
    let featurizer = cfg.validate()?;
    if pairs.is_empty() {
        return Err(RewardError::EmptyDataset);
    }
    let data = featurize_pairs(&featurizer, pairs);
    let mut out = train_featurized(&data, cfg)?;
    out.params.train_digest = train_digest(cfg, pairs);
    Ok(out)
}

pub fn train_featurized(data: &[FeaturizedPair], cfg: &TrainConfig) -> Result<TrainOutcome, RewardError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(RewardError::EmptyDataset);
    }
    let mut params = RewardParams::zeros(cfg.dim);
    // Classification unrolls each pair into (h+, 1) and (h-, 0).
    let n = match cfg.target {
        TrainTarget::Pairwise => data.len(),
        TrainTarget::Classification => 2 * data.len(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut crate::seed::rng(crate::seed::derive(cfg.seed, "train-epoch", epoch as u64)));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad: BTreeMap<u32, f64> = BTreeMap::new();
            let mut grad_bias = 0.0;
            for &k in batch {
                match cfg.target {
                    TrainTarget::Pairwise => {
                        let p = &data[k];
                        let diff = p.positive.minus(&p.negative);
                        let delta = params.dot_sparse(&diff);
                        total += pairwise_loss_from_delta(delta);
                        let g = sigmoid(delta) - 1.0;
                        for (i, c) in diff {
                            *grad.entry(i).or_insert(0.0) += g * c;
                        }
                    }
                    TrainTarget::Classification => {
                        let (phi, label) = if k % 2 == 0 {
                            (&data[k / 2].positive, true)
                        } else {
                            (&data[k / 2].negative, false)
                        };
                        let s = params.score_features(phi)?;
                        total += classification_loss_from_score(s, label);
                        let g = sigmoid(s) - if label { 1.0 } else { 0.0 };
                        for (&i, &c) in &phi.entries {
                            *grad.entry(i).or_insert(0.0) += g * c;
                        }
                        grad_bias += g;
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (i, g) in grad {
                params.weights[i as usize] -= scale * g;
            }
            params.bias -= scale * grad_bias;
        }
        let mean = total / n as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(RewardError::DivergenceDetected { epoch });
        }
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        history.push(mean);
    }
    Ok(TrainOutcome { params, loss_history: history })
}

/// Fraction of pairs with `score+ > score-`; ties count as wrong.
pub fn eval_pairwise_accuracy(params: &RewardParams, featurizer: &Featurizer, pairs: &[PreferencePair]) -> Result<f64, RewardError> {
    if pairs.is_empty() {
        return Err(RewardError::EmptyDataset);
    }
    let correct = pairs
        .par_iter()
        .map(|p| {
            let pos = params.score_features(&featurizer.featurize(&p.positive))?;
            let neg = params.score_features(&featurizer.featurize(&p.negative))?;
            Ok(usize::from(pos > neg))
        })
        .collect::<Result<Vec<_>, RewardError>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / pairs.len() as f64)
}

pub fn eval_featurized_accuracy(params: &RewardParams, data: &[FeaturizedPair]) -> Result<f64, RewardError> {
    if data.is_empty() {
        return Err(RewardError::EmptyDataset);
    }
    let mut correct = 0usize;
    for p in data {
        if params.score_features(&p.positive)? > params.score_features(&p.negative)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    dim: usize,
    recipe_version: String,
    bias: f64,
    train_digest: String,
    /// Non-zero weights as `[index, value]`, ascending index.
    weights: Vec<(u32, f64)>,
    digest: String,
}

const MODEL_FORMAT: &str = "rmplan-linear-reward/1";

fn content_digest(f: &ModelFile) -> String {
    let mut h = Sha256::new();
    h.update(f.format.as_bytes());
    h.update(f.dim.to_le_bytes());
    h.update(f.recipe_version.as_bytes());
    h.update(f.bias.to_bits().to_le_bytes());
    h.update(f.train_digest.as_bytes());
    for (i, w) in &f.weights {
        h.update(i.to_le_bytes());
        h.update(w.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl RewardParams {
    pub fn to_json(&self) -> String {
        let mut file = ModelFile {
            format: MODEL_FORMAT.into(),
            dim: self.dim,
            recipe_version: self.recipe_version.clone(),
            bias: self.bias,
            train_digest: self.train_digest.clone(),
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i as u32, *w))
                .collect(),
            digest: String::new(),
        };
        file.digest = content_digest(&file);
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RewardError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| RewardError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(RewardError::Format(format!("unknown model format `{}`", file.format)));
        }
        if file.recipe_version != RECIPE_VERSION {
            return Err(RewardError::Format(format!(
                "model built with feature recipe `{}`, this build uses `{RECIPE_VERSION}`",
                file.recipe_version
            )));
        }
        if content_digest(&file) != file.digest {
            return Err(RewardError::Format("model digest does not match its contents".into()));
        }
        if Featurizer::new(file.dim).is_none() {
            return Err(RewardError::Format(format!("dim {} is not a power of two", file.dim)));
        }
        let mut weights = vec![0.0; file.dim];
        for (i, w) in file.weights {
            let slot = weights
                .get_mut(i as usize)
                .ok_or_else(|| RewardError::Format(format!("weight index {i} out of range")))?;
            *slot = w;
        }
        let params = Self {
            dim: file.dim,
            weights,
            bias: file.bias,
            recipe_version: file.recipe_version,
            train_digest: file.train_digest,
        };
        if !params.is_finite() {
            return Err(RewardError::Format("non-finite parameter".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RewardError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| RewardError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RewardError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RewardError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Learned scorer: `w·φ(x, h) + b`.
#[derive(Debug, Clone)]
pub struct LinearRewardModel {
    pub params: RewardParams,
    pub featurizer: Featurizer,
}

impl LinearRewardModel {
    pub fn new(params: RewardParams) -> Self {
        Self {
            featurizer: Featurizer { dim: params.dim },
            params,
        }
    }

    /// Pairs a model with an externally configured featurizer, checking
    /// that their dimensions agree.
    pub fn with_featurizer(params: RewardParams, featurizer: Featurizer) -> Result<Self, RewardError> {
        if params.dim != featurizer.dim {
            return Err(RewardError::DimensionMismatch {
                model: params.dim,
                features: featurizer.dim,
            });
        }
        Ok(Self { params, featurizer })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RewardError> {
        Ok(Self::new(RewardParams::load(path)?))
    }

    pub fn score_trajectory(&self, trajectory: &Trajectory) -> Result<f64, RewardError> {
        self.params.score_features(&self.featurizer.featurize(trajectory))
    }

    pub fn accuracy(&self, pairs: &[PreferencePair]) -> Result<f64, RewardError> {
        eval_pairwise_accuracy(&self.params, &self.featurizer, pairs)
    }
}

impl Scorer for LinearRewardModel {
    fn name(&self) -> String {
        "learned".into()
    }

    fn score(&self, trajectory: &Trajectory, _info: &EpisodeInfo) -> Result<f64, RewardError> {
        self.score_trajectory(trajectory)
    }
}
