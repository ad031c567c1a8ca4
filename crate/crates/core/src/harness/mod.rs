//! Experiment commands behind the `rmplan` binary.
//!
//! Every command takes a parsed [`RunConfig`] and an output directory and
//! returns what it wrote; the binary only formats the results. Errors carry
//! the process exit code: 2 for configuration problems, 3 for failures
//! while running.

pub mod config;

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    DatagenSpec, EndpointSpec, EnvSpec, GeneratorMode, PlannerSpec, PolicySpec, RewardBackend, RewardSpec, RunConfig,
    SuffixPolicy, TrainSpec,
};

use crate::datagen::{
    run_pipeline, synthesize_game24, synthesize_shop, DatagenError, Game24Source, Generator, PipelineConfig,
    SynthesisReport,
};
use crate::env::game24::{parse_puzzle_file, random_walk_suite};
use crate::env::shop::load_goals;
use crate::env::shop_routes::{navigator, NavigatorSpec};
use crate::env::{Catalog, Game24Env, Puzzle, ShopEnv};
use crate::metrics::{read_csv, write_csv, MetricRow, MetricsTable};
use crate::planners::{evaluate_suite, PlanError, TaskRun};
use crate::policy::{ChatClient, ChatPolicy, Policy, RandomPolicy, ScriptedPolicy};
use crate::reward::{
    load_pairs, train, CompositeScorer, JudgeScorer, LinearRewardModel, OracleScorer, PreferencePair, RemoteScorer,
    RewardError, Scorer,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }
}

impl From<PlanError> for HarnessError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Config(m) => HarnessError::Config(m),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<RewardError> for HarnessError {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::Config(m) => HarnessError::Config(m),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<DatagenError> for HarnessError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Invalid(m) => HarnessError::Config(m),
            DatagenError::Plan(p) => p.into(),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// The tasks named by an environment spec.
pub enum Suite {
    Game24(Vec<Game24Env>),
    Shop(Vec<ShopEnv>),
}

impl Suite {
    pub fn len(&self) -> usize {
        match self {
            Suite::Game24(e) => e.len(),
            Suite::Shop(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_puzzles(path: &Path) -> Result<Vec<Puzzle>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    parse_puzzle_file(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn load_catalog(path: &Path) -> Result<Arc<Catalog>, HarnessError> {
    Catalog::load(path)
        .map(Arc::new)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

pub fn load_suite(spec: &EnvSpec) -> Result<Suite, HarnessError> {
    let suite = match spec {
        EnvSpec::Game24 {
            puzzles,
            random_walk_suite: n,
            limit,
        } => {
            let mut list = match (puzzles, n) {
                (Some(p), _) => load_puzzles(p)?,
                (None, Some(n)) => random_walk_suite(*n),
                (None, None) => return Err(HarnessError::Config("no game24 puzzles configured".into())),
            };
            list.truncate(limit.unwrap_or(usize::MAX));
            Suite::Game24(list.into_iter().map(Game24Env::new).collect())
        }
        EnvSpec::Shop { catalog, goals, limit } => {
            let Some(goals) = goals else {
                return Err(HarnessError::Config("shop planning needs a `goals` file".into()));
            };
            let catalog = load_catalog(catalog)?;
            let records = load_goals(goals).map_err(|e| HarnessError::Config(format!("{}: {e}", goals.display())))?;
            let envs = records
                .iter()
                .take(limit.unwrap_or(usize::MAX))
                .enumerate()
                .map(|(i, r)| ShopEnv::from_record(catalog.clone(), r, format!("goal-{i:03}")))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            Suite::Shop(envs)
        }
    };
    if suite.is_empty() {
        return Err(HarnessError::Config("the task suite is empty".into()));
    }
    Ok(suite)
}

fn chat_client(spec: &EndpointSpec) -> Result<Arc<ChatClient>, HarnessError> {
    Ok(Arc::new(ChatClient::new(spec.to_endpoint()?)))
}

/// Builds a policy for the given tasks. The solver and navigator are
/// scripted from the tasks themselves.
pub fn build_policy(spec: &PolicySpec, suite: &Suite) -> Result<Box<dyn Policy>, HarnessError> {
    Ok(match (spec, suite) {
        (PolicySpec::Random, _) => Box::new(RandomPolicy),
        (PolicySpec::Exhaustive, _) => Box::new(ScriptedPolicy::exhaustive()),
        (PolicySpec::Solver, Suite::Game24(envs)) => Box::new(ScriptedPolicy::game24_solver(envs.iter().map(|e| e.puzzle()))),
        (
            PolicySpec::Navigator {
                products,
                detours,
                failing_weight,
            },
            Suite::Shop(envs),
        ) => {
            let spec = NavigatorSpec {
                products: *products,
                detours: *detours,
                failing_weight: *failing_weight,
            };
            Box::new(navigator(envs, &spec))
        }
        (PolicySpec::Solver, _) => return Err(HarnessError::Config("the solver policy is for game24 only".into())),
        (PolicySpec::Navigator { .. }, _) => {
            return Err(HarnessError::Config("the navigator policy is for the shop only".into()))
        }
        (PolicySpec::Scripted { path }, _) => Box::new(
            ScriptedPolicy::load(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?,
        ),
        (PolicySpec::Chat { endpoint }, _) => Box::new(ChatPolicy::new(chat_client(endpoint)?)),
    })
}

pub fn build_scorer(spec: &RewardSpec) -> Result<Box<dyn Scorer>, HarnessError> {
    let base: Box<dyn Scorer> = match spec.backend()? {
        RewardBackend::Oracle => Box::new(OracleScorer),
        RewardBackend::Learned(path) => Box::new(
            LinearRewardModel::load(&path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?,
        ),
        RewardBackend::Judge(endpoint) => Box::new(JudgeScorer::new(chat_client(&endpoint)?)),
        RewardBackend::Remote(url) => {
            let mut scorer = RemoteScorer::new(url, spec.http.clone());
            if let Some(token) = &spec.token {
                scorer = scorer.with_token_env(config::secret_var(token)?);
            }
            Box::new(scorer)
        }
    };
    if spec.is_composite() {
        Ok(Box::new(CompositeScorer::new(base, spec.lambda_length, spec.mu_price)?))
    } else {
        Ok(base)
    }
}

/// What `plan` wrote.
#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub run_dir: PathBuf,
    pub rows: Vec<MetricRow>,
    pub table: String,
}

fn run_suite(cfg: &RunConfig, suite: &Suite, policy: &dyn Policy, scorer: &dyn Scorer) -> Result<Vec<TaskRun>, HarnessError> {
    let planner = cfg.planner.to_config(cfg.budget);
    let run = || match suite {
        Suite::Game24(envs) => evaluate_suite(envs, &planner, policy, scorer, &cfg.seeds),
        Suite::Shop(envs) => evaluate_suite(envs, &planner, policy, scorer, &cfg.seeds),
    };
    let runs = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Runtime(e.to_string()))?
            .install(run),
        None => run(),
    };
    Ok(runs?)
}

/// Runs the configured planner over the suite for every seed and writes a
/// run directory at `out`.
pub fn cmd_plan(cfg: &RunConfig, out: &Path) -> Result<PlanOutput, HarnessError> {
    let suite = load_suite(&cfg.environment)?;
    let policy = build_policy(&cfg.policy, &suite)?;
    let scorer = build_scorer(&cfg.reward)?;
    log::info!(
        "plan: {} tasks x {} seeds, planner {}, policy {}, reward {}",
        suite.len(),
        cfg.seeds.len(),
        cfg.planner.to_config(cfg.budget).label(),
        policy.name(),
        scorer.name()
    );
    let runs = run_suite(cfg, &suite, policy.as_ref(), scorer.as_ref())?;

    create_dir(out)?;
    let run_dir = std::path::absolute(out).map_err(io_err(out))?;
    let mut snapshot = cfg.clone();
    snapshot.out_dir = run_dir.clone();
    snapshot.run_id = Some(cfg.run_id());
    write_file(&run_dir.join("config.toml"), snapshot.to_toml())?;
    let seeds: String = cfg.seeds.iter().map(|s| format!("{s}\n")).collect();
    write_file(&run_dir.join("seeds.txt"), seeds)?;
    write_file(&run_dir.join("version.txt"), format!("{}\n", env!("CARGO_PKG_VERSION")))?;
    write_file(&run_dir.join("run_id.txt"), format!("{}\n", cfg.run_id()))?;

    let traj_dir = run_dir.join("trajectories");
    create_dir(&traj_dir)?;
    let mut by_task: Vec<(&str, String)> = Vec::new();
    for r in &runs {
        let line = format!("{}\n", r.trajectory.to_json_line());
        match by_task.iter_mut().find(|(t, _)| *t == r.task_id) {
            Some((_, text)) => text.push_str(&line),
            None => by_task.push((&r.task_id, line)),
        }
    }
    for (task, text) in &by_task {
        write_file(&traj_dir.join(format!("{task}.jsonl")), text)?;
    }

    let rows: Vec<MetricRow> = runs.iter().map(MetricRow::from).collect();
    let mut csv = Vec::new();
    write_csv(&mut csv, &rows).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    write_file(&run_dir.join("metrics.csv"), csv)?;
    let table = MetricsTable::new(rows.clone()).render();
    write_file(&run_dir.join("table.txt"), &table)?;
    Ok(PlanOutput { run_dir, rows, table })
}

/// What `synthesize` wrote.
#[derive(Debug, Clone)]
pub struct SynthesizeOutput {
    pub dataset: PathBuf,
    pub report_path: PathBuf,
    pub report: SynthesisReport,
    /// sha256 of the dataset file.
    pub digest: String,
}

fn generator(spec: &DatagenSpec) -> Result<Generator, HarnessError> {
    match (spec.generator, &spec.endpoint) {
        (GeneratorMode::Template, _) => Ok(Generator::Template),
        (GeneratorMode::Llm, Some(e)) => Ok(Generator::Llm(chat_client(e)?)),
        (GeneratorMode::Llm, None) => Err(HarnessError::Config("datagen generator `llm` needs [datagen.endpoint]".into())),
    }
}

fn pipeline<E: crate::datagen::TaskEnv>(
    items: &[crate::datagen::Synthesized<E>],
    collector: &dyn Policy,
    spec: &DatagenSpec,
    generator: &Generator,
    pcfg: &PipelineConfig,
    out: &Path,
) -> Result<SynthesisReport, HarnessError> {
    let suffix: &dyn Policy = match spec.suffix {
        SuffixPolicy::Random => &RandomPolicy,
        SuffixPolicy::Collector => collector,
    };
    Ok(run_pipeline(items, collector, suffix, generator, pcfg, out)?)
}

/// Synthesizes instructions, collects and refines trajectories, builds
/// negatives and writes `pairs.jsonl` plus `synthesis_report.json` to `out`.
pub fn cmd_synthesize(cfg: &RunConfig, out: &Path) -> Result<SynthesizeOutput, HarnessError> {
    let spec = &cfg.datagen;
    let seed = spec.seed.unwrap_or(cfg.seeds[0]);
    let generator = generator(spec)?;
    let pcfg = PipelineConfig {
        repeats: spec.repeats,
        max_retries: spec.max_retries,
        mix: spec.mix,
        budget: cfg.budget,
        seed,
    };
    create_dir(out)?;
    let dataset = out.join("pairs.jsonl");
    let (mut report, failures, tokens) = match &cfg.environment {
        EnvSpec::Game24 { .. } => {
            let mut exclude: BTreeSet<Puzzle> = BTreeSet::new();
            if let Some(p) = &spec.exclude_puzzles {
                exclude.extend(load_puzzles(p)?.iter().map(Puzzle::canonical));
            }
            if let Some(n) = spec.exclude_random_walk_suite {
                exclude.extend(random_walk_suite(n).iter().map(Puzzle::canonical));
            }
            let source = Game24Source {
                solvable_only: spec.solvable_only,
                exclude,
            };
            let synth = synthesize_game24(&generator, spec.count, seed, &source)?;
            let suite = Suite::Game24(synth.items.iter().map(|s| s.env.clone()).collect());
            let collector = build_policy(spec.collector.as_ref().unwrap_or(&PolicySpec::Solver), &suite)?;
            let report = pipeline(&synth.items, collector.as_ref(), spec, &generator, &pcfg, &dataset)?;
            (report, synth.failures, synth.tokens)
        }
        EnvSpec::Shop { catalog, .. } => {
            let catalog = load_catalog(catalog)?;
            let synth = synthesize_shop(&catalog, &generator, spec.count, seed)?;
            let suite = Suite::Shop(synth.items.iter().map(|s| s.env.clone()).collect());
            let default_nav = PolicySpec::Navigator {
                products: 2,
                detours: true,
                failing_weight: 0.0,
            };
            let collector = build_policy(spec.collector.as_ref().unwrap_or(&default_nav), &suite)?;
            let report = pipeline(&synth.items, collector.as_ref(), spec, &generator, &pcfg, &dataset)?;
            (report, synth.failures, synth.tokens)
        }
    };
    report.instruction_failures = failures;
    report.tokens += tokens;
    report
        .check_conservation()
        .map_err(|m| HarnessError::Runtime(format!("synthesis report does not add up: {m}")))?;
    let report_path = out.join("synthesis_report.json");
    write_file(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    let digest = sha256_file(&dataset)?;
    log::info!("synthesize: {} pairs, sha256 {digest}", report.pairs_emitted);
    Ok(SynthesizeOutput {
        dataset,
        report_path,
        report,
        digest,
    })
}

/// What `train` wrote.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub model_path: PathBuf,
    pub loss_curve: PathBuf,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    /// Pairwise accuracy on the held-out split; `None` when nothing was held out.
    pub heldout_accuracy: Option<f64>,
    pub train_accuracy: f64,
}

/// Seeded split into (train, held-out). The held-out share rounds to the
/// nearest pair but always leaves one pair for training.
pub fn split_pairs(pairs: &[PreferencePair], fraction: f64, seed: u64) -> (Vec<PreferencePair>, Vec<PreferencePair>) {
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut crate::seed::rng(crate::seed::derive(seed, "split", 0)));
    let held = ((pairs.len() as f64 * fraction).round() as usize).min(pairs.len().saturating_sub(1));
    let (h, t) = idx.split_at(held);
    let pick = |ix: &[usize]| {
        let mut ix = ix.to_vec();
        ix.sort_unstable();
        ix.into_iter().map(|i| pairs[i].clone()).collect::<Vec<_>>()
    };
    (pick(t), pick(h))
}

pub fn load_dataset(path: &Path) -> Result<Vec<PreferencePair>, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::Config(format!("dataset not found: {}", path.display())));
    }
    Ok(load_pairs(path)?)
}

/// Trains a reward model on `dataset` and writes `model.json` and
/// `loss_curve.csv` to `out`.
pub fn cmd_train(spec: &TrainSpec, dataset: &Path, seed: u64, out: &Path) -> Result<TrainOutputs, HarnessError> {
    let pairs = load_dataset(dataset)?;
    let (train_set, heldout) = split_pairs(&pairs, spec.heldout_fraction, seed);
    let tcfg = spec.to_config(seed);
    let outcome = train(&train_set, &tcfg)?;
    let model = LinearRewardModel::new(outcome.params);
    create_dir(out)?;
    let model_path = out.join("model.json");
    model.params.save(&model_path)?;
    let loss_curve = out.join("loss_curve.csv");
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in outcome.loss_history.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    write_file(&loss_curve, csv)?;
    let heldout_accuracy = if heldout.is_empty() {
        None
    } else {
        Some(model.accuracy(&heldout)?)
    };
    Ok(TrainOutputs {
        model_path,
        loss_curve,
        train_pairs: train_set.len(),
        heldout_pairs: heldout.len(),
        heldout_accuracy,
        train_accuracy: model.accuracy(&train_set)?,
    })
}

/// Pairwise accuracy of a saved model on a dataset, featurized at `dim`
/// (the model's own dimension when absent). Ties count as errors.
pub fn cmd_eval_rm(model: &Path, dataset: &Path, dim: Option<usize>) -> Result<f64, HarnessError> {
    if !model.exists() {
        return Err(HarnessError::Config(format!("model not found: {}", model.display())));
    }
    let params = crate::reward::RewardParams::load(model)?;
    let dim = dim.unwrap_or(params.dim);
    let featurizer = crate::reward::Featurizer::new(dim)
        .ok_or_else(|| HarnessError::Config(format!("feature dimension {dim} must be a power of two")))?;
    let model = LinearRewardModel::with_featurizer(params, featurizer)?;
    let pairs = load_dataset(dataset)?;
    if pairs.is_empty() {
        return Err(RewardError::EmptyDataset.into());
    }
    Ok(model.accuracy(&pairs)?)
}

/// Merged metrics from several run directories.
#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub run_ids: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub table: String,
}

/// Merges the metrics of `runs`; a run id seen twice contributes once.
/// Writes `metrics.csv` and `table.txt` to `out` when given.
pub fn cmd_report(runs: &[PathBuf], out: Option<&Path>) -> Result<ReportOutput, HarnessError> {
    if runs.is_empty() {
        return Err(HarnessError::Config("no run directories given".into()));
    }
    let mut seen: HashSet<String> = HashSet::new();
    let mut run_ids = Vec::new();
    let mut rows = Vec::new();
    for dir in runs {
        let metrics = dir.join("metrics.csv");
        if !metrics.is_file() {
            return Err(HarnessError::Config(format!("{} has no metrics.csv", dir.display())));
        }
        let id = std::fs::read_to_string(dir.join("run_id.txt"))
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|_| dir.display().to_string());
        if !seen.insert(id.clone()) {
            log::info!("report: skipping duplicate run id {id} in {}", dir.display());
            continue;
        }
        let file = std::fs::File::open(&metrics).map_err(io_err(&metrics))?;
        rows.extend(read_csv(file).map_err(|e| HarnessError::Runtime(format!("{}: {e}", metrics.display())))?);
        run_ids.push(id);
    }
    let table = MetricsTable::new(rows.clone()).render();
    if let Some(out) = out {
        create_dir(out)?;
        let mut csv = Vec::new();
        write_csv(&mut csv, &rows).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        write_file(&out.join("metrics.csv"), csv)?;
        let mut f = std::fs::File::create(out.join("table.txt")).map_err(io_err(out))?;
        f.write_all(table.as_bytes()).map_err(io_err(out))?;
    }
    Ok(ReportOutput { run_ids, rows, table })
}
