//! Run configuration: one TOML file per experiment.
//!
//! Relative paths resolve against the file's directory. Secrets never
//! appear in the file: `api_key` and `token` take the form `${VAR}` and name
//! the environment variable read at request time, and `${...}` anywhere
//! else is rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::datagen::StrategyMix;
use crate::planners::{Budget, PlannerConfig, PlannerKind, SelectionRule};
use crate::policy::EndpointConfig;
use crate::remote::HttpConfig;
use crate::reward::{TrainConfig, TrainTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Identifies the run when reports are merged; defaults to the config
    /// file's stem.
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads for suite evaluation; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    pub environment: EnvSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub reward: RewardSpec,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub datagen: DatagenSpec,
    #[serde(default)]
    pub train: TrainSpec,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Game24 {
        /// Puzzle file, one `a b c d` per line.
        #[serde(default)]
        puzzles: Option<PathBuf>,
        /// Use the first `n` puzzles of the random-walk suite instead.
        #[serde(default)]
        random_walk_suite: Option<usize>,
        #[serde(default)]
        limit: Option<usize>,
    },
    Shop {
        catalog: PathBuf,
        #[serde(default)]
        goals: Option<PathBuf>,
        #[serde(default)]
        limit: Option<usize>,
    },
}

/// Chat endpoint as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    pub base_url: String,
    pub model: String,
    /// `${VAR}` naming the variable that holds the bearer token.
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub http: HttpConfig,
}

impl EndpointSpec {
    pub fn to_endpoint(&self) -> Result<EndpointConfig, HarnessError> {
        let mut e = EndpointConfig::new(&self.base_url, &self.model);
        e.api_key_env = self.api_key.as_deref().map(secret_var).transpose()?;
        if let Some(m) = self.max_tokens {
            e.max_tokens = m;
        }
        e.http = self.http.clone();
        Ok(e)
    }
}

/// Variable name inside `${VAR}`.
pub fn secret_var(value: &str) -> Result<String, HarnessError> {
    let name = value
        .strip_prefix("${")
        .and_then(|v| v.strip_suffix('}'))
        .filter(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
        .ok_or_else(|| HarnessError::Config(format!("secrets must be written as ${{VAR}}, got `{value}`")))?;
    Ok(name.to_string())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    #[default]
    Random,
    /// Valid actions in environment order.
    Exhaustive,
    /// Plays a known solution of each Game of 24 puzzle.
    Solver,
    /// Scripted shop routes to satisfying products.
    Navigator {
        #[serde(default = "default_products")]
        products: usize,
        #[serde(default = "default_true")]
        detours: bool,
        #[serde(default)]
        failing_weight: f64,
    },
    Scripted {
        path: PathBuf,
    },
    Chat {
        endpoint: EndpointSpec,
    },
}

fn default_products() -> usize {
    2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    /// `oracle`, `learned:<model path>`, `judge` or `remote:<url>`.
    pub backend: String,
    /// Chat endpoint for `judge`.
    #[serde(default)]
    pub endpoint: Option<EndpointSpec>,
    /// `${VAR}` holding the bearer token for `remote`.
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default)]
    pub http: HttpConfig,
    #[serde(default)]
    pub lambda_length: f64,
    #[serde(default)]
    pub mu_price: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            backend: "oracle".into(),
            endpoint: None,
            token: None,
            http: HttpConfig::default(),
            lambda_length: 0.0,
            mu_price: 0.0,
        }
    }
}

/// The parsed `backend` string.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardBackend {
    Oracle,
    Learned(PathBuf),
    Judge(EndpointSpec),
    Remote(String),
}

impl RewardSpec {
    pub fn backend(&self) -> Result<RewardBackend, HarnessError> {
        let (kind, arg) = match self.backend.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (self.backend.trim(), None),
        };
        let backend = match (kind, arg) {
            ("oracle", None) => RewardBackend::Oracle,
            ("learned", Some(p)) if !p.is_empty() => RewardBackend::Learned(PathBuf::from(p)),
            ("judge", None) => RewardBackend::Judge(
                self.endpoint
                    .clone()
                    .ok_or_else(|| HarnessError::Config("reward backend `judge` needs [reward.endpoint]".into()))?,
            ),
            ("remote", Some(u)) if !u.is_empty() => RewardBackend::Remote(u.to_string()),
            _ => {
                return Err(HarnessError::Config(format!(
                    "reward backend must be one of oracle, learned:<path>, judge, remote:<url>; got `{}`",
                    self.backend
                )))
            }
        };
        if self.endpoint.is_some() && !matches!(backend, RewardBackend::Judge(_)) {
            return Err(HarnessError::Config(
                "exactly one reward backend: [reward.endpoint] is only for `judge`".into(),
            ));
        }
        if self.token.is_some() && !matches!(backend, RewardBackend::Remote(_)) {
            return Err(HarnessError::Config("exactly one reward backend: `token` is only for `remote`".into()));
        }
        if !(self.lambda_length >= 0.0 && self.mu_price >= 0.0) {
            return Err(HarnessError::Config("lambda_length and mu_price must be >= 0".into()));
        }
        Ok(backend)
    }

    pub fn is_composite(&self) -> bool {
        self.lambda_length > 0.0 || self.mu_price > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    pub kind: PlannerKind,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub max_trials: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub selection_rule: SelectionRule,
    #[serde(default)]
    pub exploration_c: Option<f64>,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        Self {
            kind: PlannerKind::Sampling,
            n: None,
            max_trials: None,
            threshold: None,
            selection_rule: SelectionRule::Last,
            exploration_c: None,
        }
    }
}

impl PlannerSpec {
    pub fn to_config(&self, budget: Budget) -> PlannerConfig {
        let mut cfg = PlannerConfig::new(self.kind, budget);
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(t) = self.max_trials {
            cfg.max_trials = t;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(c) = self.exploration_c {
            cfg.exploration_c = c;
        }
        cfg.selection_rule = self.selection_rule;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    Template,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuffixPolicy {
    /// Regenerate negative suffixes with the random policy.
    #[default]
    Random,
    /// Regenerate them with the collecting policy.
    Collector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenSpec {
    pub generator: GeneratorMode,
    pub endpoint: Option<EndpointSpec>,
    pub count: usize,
    pub repeats: usize,
    pub max_retries: usize,
    pub mix: StrategyMix,
    /// Collecting policy; the solver for Game of 24 and the navigator for
    /// the shop when absent.
    pub collector: Option<PolicySpec>,
    pub suffix: SuffixPolicy,
    /// Game of 24: draw only solvable puzzles.
    pub solvable_only: bool,
    /// Game of 24: never draw the puzzles in this file.
    pub exclude_puzzles: Option<PathBuf>,
    /// Game of 24: never draw the first `n` puzzles of the random-walk suite.
    pub exclude_random_walk_suite: Option<usize>,
    /// Seed of the run; the first entry of `seeds` when absent.
    pub seed: Option<u64>,
}

impl Default for DatagenSpec {
    fn default() -> Self {
        Self {
            generator: GeneratorMode::Template,
            endpoint: None,
            count: 100,
            repeats: 1,
            max_retries: 8,
            mix: StrategyMix::default(),
            collector: None,
            suffix: SuffixPolicy::Random,
            solvable_only: true,
            exclude_puzzles: None,
            exclude_random_walk_suite: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    /// Pairs file; `<out_dir>/pairs.jsonl` when absent.
    pub dataset: Option<PathBuf>,
    /// Share of pairs held out for evaluation.
    pub heldout_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target: TrainTarget,
    pub dim: usize,
    /// Seed of the run; the first entry of `seeds` when absent.
    pub seed: Option<u64>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dataset: None,
            heldout_fraction: 0.2,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            target: t.target,
            dim: t.dim,
            seed: None,
        }
    }
}

impl TrainSpec {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            target: self.target,
            dim: self.dim,
        }
    }
}

fn check_no_stray_interpolation(value: &toml::Value, key: &str) -> Result<(), HarnessError> {
    match value {
        toml::Value::String(s) if s.contains("${") && key != "api_key" && key != "token" => Err(HarnessError::Config(
            format!("`{key}`: environment interpolation is only allowed for api_key and token"),
        )),
        toml::Value::Table(t) => t.iter().try_for_each(|(k, v)| check_no_stray_interpolation(v, k)),
        toml::Value::Array(a) => a.iter().try_for_each(|v| check_no_stray_interpolation(v, key)),
        _ => Ok(()),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn require(p: &Path, what: &str) -> Result<(), HarnessError> {
    if p.exists() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("{what} not found: {}", p.display())))
    }
}

impl RunConfig {
    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let value: toml::Value = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        check_no_stray_interpolation(&value, "")?;
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).unwrap_or(base);
        let mut cfg = Self::parse(&text, &base)?;
        if cfg.run_id.is_none() {
            cfg.run_id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        match &mut self.environment {
            EnvSpec::Game24 { puzzles, .. } => {
                if let Some(p) = puzzles {
                    resolve(base, p);
                }
            }
            EnvSpec::Shop { catalog, goals, .. } => {
                resolve(base, catalog);
                if let Some(g) = goals {
                    resolve(base, g);
                }
            }
        }
        for policy in [Some(&mut self.policy), self.datagen.collector.as_mut()].into_iter().flatten() {
            if let PolicySpec::Scripted { path } = policy {
                resolve(base, path);
            }
        }
        if let Some(rest) = self.reward.backend.strip_prefix("learned:") {
            let mut p = PathBuf::from(rest.trim());
            resolve(base, &mut p);
            self.reward.backend = format!("learned:{}", p.display());
        }
        if let Some(p) = &mut self.datagen.exclude_puzzles {
            resolve(base, p);
        }
        if let Some(p) = &mut self.train.dataset {
            resolve(base, p);
        }
    }

    /// Checks invariants and that referenced input files exist.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.workers == Some(0) {
            return Err(HarnessError::Config("workers must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        self.budget.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.environment {
            EnvSpec::Game24 {
                puzzles,
                random_walk_suite,
                ..
            } => match (puzzles, random_walk_suite) {
                (Some(p), None) => require(p, "puzzle file")?,
                (None, Some(_)) => {}
                _ => {
                    return Err(HarnessError::Config(
                        "game24 needs exactly one of `puzzles` or `random_walk_suite`".into(),
                    ))
                }
            },
            EnvSpec::Shop { catalog, goals, .. } => {
                require(catalog, "catalog")?;
                if let Some(g) = goals {
                    require(g, "goals file")?;
                }
            }
        }
        for policy in [Some(&self.policy), self.datagen.collector.as_ref()].into_iter().flatten() {
            match policy {
                PolicySpec::Scripted { path } => require(path, "scripted policy")?,
                PolicySpec::Chat { endpoint } => {
                    endpoint.to_endpoint()?;
                }
                _ => {}
            }
        }
        match self.reward.backend()? {
            RewardBackend::Learned(p) => require(&p, "reward model")?,
            RewardBackend::Judge(e) => {
                e.to_endpoint()?;
            }
            RewardBackend::Remote(_) => {
                if let Some(t) = &self.reward.token {
                    secret_var(t)?;
                }
            }
            RewardBackend::Oracle => {}
        }
        if let Some(p) = &self.datagen.exclude_puzzles {
            require(p, "excluded puzzle file")?;
        }
        if self.datagen.generator == GeneratorMode::Llm {
            match &self.datagen.endpoint {
                Some(e) => {
                    e.to_endpoint()?;
                }
                None => return Err(HarnessError::Config("datagen generator `llm` needs [datagen.endpoint]".into())),
            }
        }
        if !(0.0..1.0).contains(&self.train.heldout_fraction) {
            return Err(HarnessError::Config("train.heldout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| "run".into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
