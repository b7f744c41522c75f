use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aplr::data::{save_dataset, Layout};
use aplr::labels::{
    infer_pseudo_labels_aggregated, load_labels_csv, save_labels_csv, select_hcs,
};
use aplr::model::{load_checkpoint, save_checkpoint};
use aplr::pipeline::{
    ablate, ablation_to_csv, evaluate_accuracy, metrics_to_csv, pretrain_source, refine, run_all,
    train_target, AblationAxis, RunConfig,
};
use aplr::{Error, Result};

#[derive(Parser)]
#[command(name = "aplr", about = "Pseudo-label refinement with negative ensemble learning", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to a JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the ensemble size N_e.
    #[arg(long)]
    n_e: Option<usize>,
    /// Override the residual labels per member N_RL.
    #[arg(long)]
    n_rl: Option<usize>,
    /// Override the snapshot window N_a.
    #[arg(long)]
    n_a: Option<usize>,
    /// Override the confidence threshold alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override the source pretraining epoch count.
    #[arg(long)]
    epochs_source: Option<usize>,
    /// Override the refinement epoch budget.
    #[arg(long)]
    epochs_refine: Option<usize>,
    /// Override the target training epoch count.
    #[arg(long)]
    epochs_target: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_json_file(&self.config)?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.n_e {
            cfg.n_e = v;
        }
        if let Some(v) = self.n_rl {
            cfg.n_rl = Some(v);
        }
        if let Some(v) = self.n_a {
            cfg.n_a = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs_source {
            cfg.epochs_source = v;
        }
        if let Some(v) = self.epochs_refine {
            cfg.epochs_refine = v;
        }
        if let Some(v) = self.epochs_target {
            cfg.epochs_target = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the source/target datasets of the configured task.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for source.{csv,json} and target.{csv,json}.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the source model and write its checkpoint.
    Pretrain {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer initial pseudo-labels for the target set from a checkpoint.
    Infer {
        #[command(flatten)]
        config: ConfigArgs,
        /// Source model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Output label CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the refinement loop; writes refined labels and per-epoch metrics.
    Refine {
        #[command(flatten)]
        config: ConfigArgs,
        /// Source model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Output directory for refined_labels.csv and metrics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the final target model on the high-confidence samples.
    TrainTarget {
        #[command(flatten)]
        config: ConfigArgs,
        /// Source model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Refined label CSV.
        #[arg(long)]
        labels: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute the whole pipeline and emit all artifacts.
    RunAll {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one hyperparameter axis over shared seeds.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Axis: alpha, n_rl, n_e, or diversity.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values (defaults per axis).
        #[arg(long)]
        values: Option<String>,
        /// Comma-separated seeds (defaults to the config seed).
        #[arg(long)]
        seeds: Option<String>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the accuracy of a checkpoint on the labeled target set.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
    },
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed '{}'", s)))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = config.load()?;
            let (source, target) = cfg.load_task()?;
            std::fs::create_dir_all(&out)?;
            save_dataset(&source, &out.join("source"))?;
            save_dataset(&target, &out.join("target"))?;
            println!(
                "wrote {} source / {} target samples ({} classes) to {}",
                source.len(),
                target.len(),
                source.num_classes,
                out.display()
            );
        }
        Command::Pretrain { config, out } => {
            let cfg = config.load()?;
            let (source, _) = cfg.load_task()?;
            let (model, train_acc, holdout_acc) = pretrain_source(&cfg, &source)?;
            save_checkpoint(&model, cfg.seed, &out)?;
            println!(
                "source model: train acc {:.2}%, holdout acc {:.2}% -> {}",
                train_acc,
                holdout_acc,
                out.display()
            );
        }
        Command::Infer { config, model, out } => {
            let cfg = config.load()?;
            let (_, target) = cfg.load_task()?;
            let model = load_checkpoint(&model)?;
            let truth = (!target.labels.is_empty()).then(|| target.labels.clone());
            let labels = infer_pseudo_labels_aggregated(&model, &target.features, truth)?;
            save_labels_csv(&labels, &out)?;
            match labels.noise_pct() {
                Some(n) => println!("{} pseudo-labels, noise {:.2}%", labels.len(), n),
                None => println!("{} pseudo-labels", labels.len()),
            }
        }
        Command::Refine { config, model, out } => {
            let cfg = config.load()?;
            let (_, target) = cfg.load_task()?;
            let model = load_checkpoint(&model)?;
            let truth = (!target.labels.is_empty()).then(|| target.labels.clone());
            let initial = infer_pseudo_labels_aggregated(&model, &target.features, truth)?;
            let outcome = refine(&cfg, &model, &target.features, initial)?;
            std::fs::create_dir_all(&out)?;
            save_labels_csv(&outcome.labels, &out.join("refined_labels.csv"))?;
            std::fs::write(out.join("metrics.csv"), metrics_to_csv(&outcome.metrics))?;
            println!(
                "refined for {} epochs (stall: {}) -> {}",
                outcome.epochs_run,
                outcome.stall_fired,
                out.display()
            );
        }
        Command::TrainTarget {
            config,
            model,
            labels,
            out,
        } => {
            let cfg = config.load()?;
            let (_, target) = cfg.load_task()?;
            let model = load_checkpoint(&model)?;
            let refined = load_labels_csv(&labels, model.num_classes)?;
            let hcs = select_hcs(&refined, cfg.alpha);
            let target_model = train_target(&cfg, &model, &refined, &target.features, &hcs)?;
            save_checkpoint(&target_model, cfg.seed, &out)?;
            println!("trained on {} high-confidence samples -> {}", hcs.len(), out.display());
        }
        Command::RunAll { config, out } => {
            let cfg = config.load()?;
            let summary = run_all(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
        }
        Command::Ablate {
            config,
            axis,
            values,
            seeds,
            out,
        } => {
            let cfg = config.load()?;
            let axis_enum = AblationAxis::parse(&axis)?;
            let values: Vec<String> = match values {
                Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
                None => axis_enum.default_values(),
            };
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => vec![cfg.seed],
            };
            let cells = ablate(&cfg, axis_enum, &values, &seeds);
            std::fs::write(&out, ablation_to_csv(&axis, &cells))?;
            let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
            println!(
                "{} cells ({} failed) -> {}",
                cells.len(),
                failed,
                out.display()
            );
        }
        Command::Eval { config, model } => {
            let cfg = config.load()?;
            let (_, target) = cfg.load_task()?;
            if target.labels.is_empty() {
                return Err(Error::Argument("target set carries no labels".into()));
            }
            let model = load_checkpoint(&model)?;
            if let Layout::Grid { h, w } = target.layout {
                if h * w != model.input_dim {
                    return Err(Error::Dimension("layout does not match model input".into()));
                }
            }
            let acc = evaluate_accuracy(&model, &target.features, &target.labels)?;
            println!("accuracy: {:.2}%", acc);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
