use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rmplan::harness::{self, HarnessError, RunConfig, TrainSpec};
use rmplan::reward::TrainTarget;

#[derive(Parser)]
#[command(name = "rmplan", version, about = "Reward-model-guided planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a preference-pair dataset.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of instructions to synthesize.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a reward model on a pairs file.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        target: Option<Target>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise accuracy of a saved model.
    EvalRm {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Feature dimension used to featurize the dataset.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Run a planner over a task suite.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed list; repeatable.
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge run directories into one table.
    Report {
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Target {
    Pairwise,
    Classification,
}

fn load(path: &Path) -> Result<RunConfig, HarnessError> {
    RunConfig::load(path)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Synthesize { config, seed, count, out } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.datagen.seed = Some(s);
            }
            if let Some(c) = count {
                cfg.datagen.count = c;
            }
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            let res = harness::cmd_synthesize(&cfg, &out)?;
            println!("dataset: {}", res.dataset.display());
            println!("report: {}", res.report_path.display());
            println!("pairs: {}", res.report.pairs_emitted);
            println!("sha256: {}", res.digest);
        }
        Command::Train {
            config,
            dataset,
            target,
            epochs,
            seed,
            out,
        } => {
            let cfg = config.as_deref().map(load).transpose()?;
            let mut spec = cfg.as_ref().map(|c| c.train.clone()).unwrap_or_else(TrainSpec::default);
            if let Some(t) = target {
                spec.target = match t {
                    Target::Pairwise => TrainTarget::Pairwise,
                    Target::Classification => TrainTarget::Classification,
                };
            }
            if let Some(e) = epochs {
                spec.epochs = e;
            }
            let out = out
                .or_else(|| cfg.as_ref().map(|c| c.out_dir.clone()))
                .ok_or_else(|| HarnessError::Config("train needs --out or --config".into()))?;
            let dataset = dataset
                .or(spec.dataset.clone())
                .unwrap_or_else(|| out.join("pairs.jsonl"));
            let seed = seed.or(spec.seed).or_else(|| cfg.as_ref().map(|c| c.seeds[0])).unwrap_or(0);
            let res = harness::cmd_train(&spec, &dataset, seed, &out)?;
            println!("model: {}", res.model_path.display());
            println!("loss_curve: {}", res.loss_curve.display());
            println!("train_pairs: {}", res.train_pairs);
            println!("train_accuracy: {:.4}", res.train_accuracy);
            match res.heldout_accuracy {
                Some(a) => println!("heldout_accuracy: {a:.4} ({} pairs)", res.heldout_pairs),
                None => println!("heldout_accuracy: - (nothing held out)"),
            }
        }
        Command::EvalRm {
            config,
            model,
            dataset,
            dim,
        } => {
            let cfg = config.as_deref().map(load).transpose()?;
            let model = model
                .or_else(|| cfg.as_ref().map(|c| c.out_dir.join("model.json")))
                .ok_or_else(|| HarnessError::Config("eval-rm needs --model or --config".into()))?;
            let dataset = dataset
                .or_else(|| cfg.as_ref().and_then(|c| c.train.dataset.clone()))
                .or_else(|| cfg.as_ref().map(|c| c.out_dir.join("pairs.jsonl")))
                .ok_or_else(|| HarnessError::Config("eval-rm needs --dataset or --config".into()))?;
            let acc = harness::cmd_eval_rm(&model, &dataset, dim)?;
            println!("accuracy: {acc:.4}");
        }
        Command::Plan { config, seed, out } => {
            let mut cfg = load(&config)?;
            if !seed.is_empty() {
                cfg.seeds = seed;
            }
            let out = out.unwrap_or_else(|| cfg.out_dir.join(cfg.run_id()));
            let res = harness::cmd_plan(&cfg, &out)?;
            print!("{}", res.table);
            println!("run: {}", res.run_dir.display());
        }
        Command::Report { runs, out } => {
            let res = harness::cmd_report(&runs, out.as_deref())?;
            print!("{}", res.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
