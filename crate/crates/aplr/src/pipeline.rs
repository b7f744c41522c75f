//! Orchestration of the four stages: source pretraining, pseudo-label
//! inference, the negative-ensemble refinement loop, and final target
//! training, plus ablation sweeps and metrics emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    augment, generate_blob_task, load_dataset, AugmentationSpec, LabeledDataset, Layout, ShiftTask,
};
use crate::ensemble::{ConfidenceHistory, EnsembleState, Member};
use crate::error::{Error, Result};
use crate::labels::{
    compute_gamma, infer_pseudo_labels_aggregated, reassign, refresh_confidences,
    sample_disjoint_residual_labels, sample_shared_residual_labels, select_hcs, PseudoLabelSet,
};
use crate::losses::{batch_mean, nel_loss, pl_loss, LossResult};
use crate::model::{AdamConfig, AdamState, ClassifierModel};
use crate::numerics::{argmax, Matrix, RngStream};

// Stream-id namespaces, one per randomness purpose.
const STREAM_SOURCE_INIT: u64 = 0x01;
const STREAM_SOURCE_SHUFFLE: u64 = 0x0100;
const STREAM_MEMBER_HEAD: u64 = 0x0200;
const STREAM_MEMBER_AUG: u64 = 0x0300;
const STREAM_SHARED_AUG: u64 = 0x03FF;
const STREAM_RL: u64 = 0x0400;
const STREAM_REFINE_SHUFFLE: u64 = 0x0500;
const STREAM_TARGET_HEAD: u64 = 0x02;
const STREAM_TARGET_SHUFFLE: u64 = 0x0600;

/// Residual-label diversity mode: disjoint per member (DRL) or one shared
/// block for all members (SRL).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlMode {
    Disjoint,
    Shared,
}

/// Augmentation diversity mode: a distinct stochastic draw per member
/// (DAUG) or the same augmented batch for every member (SAUG).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugMode {
    Distinct,
    Shared,
}

/// Where the task data comes from: a generated blob task or dataset stems
/// on disk (paths without extension; `.csv` + `.json` expected).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSource {
    Blob(ShiftTask),
    Paths { source: String, target: String },
}

fn default_n_e() -> usize {
    3
}
fn default_n_a() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.9
}
fn default_batch_size() -> usize {
    32
}
fn default_epochs_source() -> usize {
    300
}
fn default_epochs_refine() -> usize {
    120
}
fn default_epochs_target() -> usize {
    200
}
fn default_stall_window() -> usize {
    8
}
fn default_stall_min_fraction() -> f64 {
    0.002
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_rl_mode() -> RlMode {
    RlMode::Disjoint
}
fn default_aug_mode() -> AugMode {
    AugMode::Distinct
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskSource,
    #[serde(default = "default_n_e")]
    pub n_e: usize,
    /// Residual labels per member; defaults to floor((C-1)/N_e).
    #[serde(default)]
    pub n_rl: Option<usize>,
    #[serde(default = "default_n_a")]
    pub n_a: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Optimizer override for source pretraining; falls back to `adam`.
    #[serde(default)]
    pub adam_source: Option<AdamConfig>,
    /// Optimizer override for final target training; falls back to `adam`.
    #[serde(default)]
    pub adam_target: Option<AdamConfig>,
    #[serde(default = "default_epochs_source")]
    pub epochs_source: usize,
    #[serde(default = "default_epochs_refine")]
    pub epochs_refine: usize,
    #[serde(default = "default_epochs_target")]
    pub epochs_target: usize,
    #[serde(default = "default_stall_window")]
    pub stall_window: usize,
    #[serde(default = "default_stall_min_fraction")]
    pub stall_min_fraction: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_rl_mode")]
    pub rl_mode: RlMode,
    #[serde(default = "default_aug_mode")]
    pub aug_mode: AugMode,
    /// Per-member augmentation spec; defaults by feature layout.
    #[serde(default)]
    pub augmentation: Option<AugmentationSpec>,
    /// Disable the reassignment pass (used by the noise-distribution study).
    #[serde(default = "default_true")]
    pub reassign_enabled: bool,
}

impl RunConfig {
    pub fn blob(seed: u64, task: ShiftTask) -> RunConfig {
        RunConfig {
            seed,
            task: TaskSource::Blob(task),
            n_e: default_n_e(),
            n_rl: None,
            n_a: default_n_a(),
            alpha: default_alpha(),
            batch_size: default_batch_size(),
            adam: AdamConfig::default(),
            adam_source: None,
            adam_target: None,
            epochs_source: default_epochs_source(),
            epochs_refine: default_epochs_refine(),
            epochs_target: default_epochs_target(),
            stall_window: default_stall_window(),
            stall_min_fraction: default_stall_min_fraction(),
            hidden: default_hidden(),
            rl_mode: default_rl_mode(),
            aug_mode: default_aug_mode(),
            augmentation: None,
            reassign_enabled: true,
        }
    }

    pub fn from_json_str(json: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("config parse: {}", e)))?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json_str(&text)
    }

    pub fn effective_n_rl(&self, num_classes: usize) -> usize {
        self.n_rl.unwrap_or(((num_classes - 1) / self.n_e).max(1))
    }

    /// Validates against the number of classes of the task at hand.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.n_e == 0 {
            return Err(Error::Config("N_e must be >= 1".into()));
        }
        let n_rl = self.effective_n_rl(num_classes);
        if n_rl == 0 {
            return Err(Error::Config("N_RL must be >= 1".into()));
        }
        match self.rl_mode {
            RlMode::Disjoint => {
                if self.n_e * n_rl > num_classes - 1 {
                    return Err(Error::Config(format!(
                        "N_e*N_RL = {} exceeds C-1 = {}",
                        self.n_e * n_rl,
                        num_classes - 1
                    )));
                }
            }
            RlMode::Shared => {
                if n_rl > num_classes - 1 {
                    return Err(Error::Config(format!(
                        "N_RL = {} exceeds C-1 = {}",
                        n_rl,
                        num_classes - 1
                    )));
                }
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.n_a == 0 {
            return Err(Error::Config("N_a must be >= 1".into()));
        }
        if self.epochs_source == 0 || self.epochs_refine == 0 || self.epochs_target == 0 {
            return Err(Error::Config("all epoch counts must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be non-empty, nonzero".into()));
        }
        Ok(())
    }

    pub fn load_task(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        match &self.task {
            TaskSource::Blob(spec) => generate_blob_task(spec),
            TaskSource::Paths { source, target } => Ok((
                load_dataset(Path::new(source))?,
                load_dataset(Path::new(target))?,
            )),
        }
    }

    fn augmentation_for(&self, layout: Layout) -> AugmentationSpec {
        self.augmentation.clone().unwrap_or(match layout {
            Layout::Flat => AugmentationSpec::default_flat(),
            Layout::Grid { .. } => AugmentationSpec::default_grid(),
        })
    }

    fn task_tag(&self) -> String {
        match &self.task {
            TaskSource::Blob(t) => format!(
                "blob-c{}-d{}-rot{}-seed{}",
                t.num_classes, t.dim, t.rotation_deg, t.seed
            ),
            TaskSource::Paths { target, .. } => target.clone(),
        }
    }
}

/// Per-epoch refinement diagnostics. Truth-based fields are None when no
/// hidden ground truth is attached.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub noise_pct: Option<f64>,
    pub gamma: f64,
    pub hcs_count: usize,
    pub reassigned_count: usize,
    pub mean_conf_clean: Option<f64>,
    pub mean_conf_noisy: Option<f64>,
    pub mean_nel_loss: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "epoch,noise_pct,gamma,hcs_count,reassigned_count,mean_conf_clean,mean_conf_noisy,mean_nel_loss";

fn opt_field(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{:?}", x),
        _ => String::new(),
    }
}

pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:?},{},{},{},{},{:?}",
            r.epoch,
            opt_field(r.noise_pct),
            r.gamma,
            r.hcs_count,
            r.reassigned_count,
            opt_field(r.mean_conf_clean),
            opt_field(r.mean_conf_noisy),
            r.mean_nel_loss
        );
    }
    out
}

/// Classification accuracy of a model on labeled features, in percent.
pub fn evaluate_accuracy(model: &ClassifierModel, features: &Matrix, labels: &[usize]) -> Result<f64> {
    let logits = model.logits(features)?;
    let correct = (0..features.rows)
        .filter(|&r| argmax(logits.row(r)) == labels[r])
        .count();
    Ok(100.0 * correct as f64 / features.rows as f64)
}

fn gather_rows(features: &Matrix, indices: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(indices.len() * features.cols);
    for &i in indices {
        data.extend_from_slice(features.row(i));
    }
    Matrix::from_vec(indices.len(), features.cols, data).unwrap()
}

/// Supervised training of one model with cross-entropy and Adam.
fn train_supervised(
    model: &mut ClassifierModel,
    features: &Matrix,
    labels: &[usize],
    adam: AdamConfig,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    shuffle_ns: u64,
    stage: &str,
) -> Result<()> {
    let mut optimizer = AdamState::new(model, adam);
    let n = features.rows;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle = RngStream::new(seed, shuffle_ns + epoch as u64);
        shuffle.shuffle(&mut order);
        for chunk in order.chunks(batch_size) {
            let batch = gather_rows(features, chunk);
            let (logits, cache) = model.forward(&batch)?;
            let mut grad_logits = Matrix::zeros(batch.rows, model.num_classes);
            let mut diverged = false;
            for (bi, &sample) in chunk.iter().enumerate() {
                let lr = pl_loss(logits.row(bi), labels[sample])?;
                if !lr.value.is_finite() {
                    diverged = true;
                    break;
                }
                for c in 0..model.num_classes {
                    grad_logits.set(bi, c, lr.grad_logits[c] / batch.rows as f64);
                }
            }
            if diverged {
                return Err(Error::Training {
                    stage: stage.into(),
                    detail: "non-finite loss".into(),
                });
            }
            let grads = model.backward(&cache, &grad_logits)?;
            optimizer.step(model, &grads).map_err(|e| Error::Training {
                stage: stage.into(),
                detail: e.to_string(),
            })?;
        }
    }
    Ok(())
}

/// Trains the source model with standard cross-entropy on a 90/10
/// train/holdout split. Returns (model, train accuracy, holdout accuracy).
pub fn pretrain_source(
    config: &RunConfig,
    source: &LabeledDataset,
) -> Result<(ClassifierModel, f64, f64)> {
    config.validate(source.num_classes)?;
    if source.is_empty() {
        return Err(Error::Argument("empty source dataset".into()));
    }
    let n = source.len();
    let holdout_n = (n / 10).max(1).min(n - 1);
    let train_n = n - holdout_n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_stream = RngStream::new(config.seed, STREAM_SOURCE_INIT + 0x10);
    split_stream.shuffle(&mut order);
    let train_idx = &order[..train_n];
    let holdout_idx = &order[train_n..];
    let train_x = gather_rows(&source.features, train_idx);
    let train_y: Vec<usize> = train_idx.iter().map(|&i| source.labels[i]).collect();
    let holdout_x = gather_rows(&source.features, holdout_idx);
    let holdout_y: Vec<usize> = holdout_idx.iter().map(|&i| source.labels[i]).collect();

    let mut init = RngStream::new(config.seed, STREAM_SOURCE_INIT);
    let mut model = ClassifierModel::new(source.dim(), &config.hidden, source.num_classes, &mut init);
    train_supervised(
        &mut model,
        &train_x,
        &train_y,
        config.adam_source.unwrap_or(config.adam),
        config.epochs_source,
        config.batch_size,
        config.seed,
        STREAM_SOURCE_SHUFFLE,
        "pretrain",
    )?;
    let train_acc = evaluate_accuracy(&model, &train_x, &train_y)?;
    let holdout_acc = evaluate_accuracy(&model, &holdout_x, &holdout_y)?;
    Ok((model, train_acc, holdout_acc))
}

/// Builds the refinement ensemble: feature layers copied from the source
/// model, heads re-initialized per member.
fn build_ensemble(config: &RunConfig, source_model: &ClassifierModel) -> Result<EnsembleState> {
    let members = (0..config.n_e)
        .map(|k| {
            let mut model = source_model.clone();
            let mut head_stream = RngStream::new(config.seed, STREAM_MEMBER_HEAD + k as u64);
            model.reinit_head(&mut head_stream);
            let optimizer = AdamState::new(&model, config.adam);
            Member {
                model,
                optimizer,
                aug_stream: RngStream::new(config.seed, STREAM_MEMBER_AUG + k as u64),
                rl_stream: RngStream::new(config.seed, STREAM_RL + k as u64),
            }
        })
        .collect();
    EnsembleState::new(members)
}

pub struct RefineOutcome {
    pub labels: PseudoLabelSet,
    pub metrics: Vec<MetricsRecord>,
    pub epochs_run: usize,
    pub stall_fired: bool,
    pub ensemble: EnsembleState,
}

/// The refinement loop. Per epoch: every member takes one Adam step per
/// batch on the NEL loss of its own augmentation and residual block, then
/// a clean snapshot is recorded, consensus confidences and gamma are
/// recomputed, and the reassignment rule is applied.
pub fn refine(
    config: &RunConfig,
    source_model: &ClassifierModel,
    target_features: &Matrix,
    initial_labels: PseudoLabelSet,
) -> Result<RefineOutcome> {
    let c = source_model.num_classes;
    config.validate(c)?;
    if target_features.rows == 0 {
        return Err(Error::Argument("empty target set".into()));
    }
    if initial_labels.len() != target_features.rows {
        return Err(Error::Argument("label set / target size mismatch".into()));
    }
    let n_t = target_features.rows;
    let n_rl = config.effective_n_rl(c);
    let aug_spec = config.augmentation_for(Layout::Flat);

    let mut ensemble = build_ensemble(config, source_model)?;
    let mut shared_aug = RngStream::new(config.seed, STREAM_SHARED_AUG);
    let mut rl_stream = RngStream::new(config.seed, STREAM_RL + 0xFF);
    let mut history = ConfidenceHistory::new(n_t, c, config.n_e, config.n_a);
    let mut label_set = initial_labels;

    let mut metrics = Vec::with_capacity(config.epochs_refine);
    let mut stall_fired = false;
    let mut stall_streak = 0usize;
    let mut reassignment_started = false;
    let mut epochs_run = 0usize;

    for epoch in 1..=config.epochs_refine {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..n_t).collect();
        let mut shuffle = RngStream::new(config.seed, STREAM_REFINE_SHUFFLE + epoch as u64);
        shuffle.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut loss_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = gather_rows(target_features, chunk);
            // residual blocks per sample, one assignment spanning all members
            let assignments: Result<Vec<_>> = chunk
                .iter()
                .map(|&sample| match config.rl_mode {
                    RlMode::Disjoint => sample_disjoint_residual_labels(
                        &mut rl_stream,
                        label_set.labels[sample],
                        c,
                        config.n_e,
                        n_rl,
                    ),
                    RlMode::Shared => sample_shared_residual_labels(
                        &mut rl_stream,
                        label_set.labels[sample],
                        c,
                        config.n_e,
                        n_rl,
                    ),
                })
                .collect();
            let assignments = assignments?;

            // SAUG: one augmentation draw feeds every member
            let shared_batch = match config.aug_mode {
                AugMode::Shared => {
                    Some(augment(&batch, &aug_spec, Layout::Flat, &mut shared_aug)?)
                }
                AugMode::Distinct => None,
            };

            for k in 0..config.n_e {
                let member = &mut ensemble.members[k];
                let member_batch = match &shared_batch {
                    Some(b) => b.clone(),
                    None => augment(&batch, &aug_spec, Layout::Flat, &mut member.aug_stream)?,
                };
                let (logits, cache) = member.model.forward(&member_batch)?;
                let mut per_sample: Vec<LossResult> = Vec::with_capacity(chunk.len());
                for (bi, assignment) in assignments.iter().enumerate() {
                    per_sample.push(nel_loss(logits.row(bi), &assignment.blocks[k])?);
                }
                let mean = batch_mean(&per_sample)?;
                if !mean.value.is_finite() {
                    return Err(Error::Training {
                        stage: "refine".into(),
                        detail: "non-finite NEL loss".into(),
                    });
                }
                loss_sum += mean.value;
                loss_batches += 1;
                let mut grad_logits = Matrix::zeros(chunk.len(), c);
                for (bi, lr) in per_sample.iter().enumerate() {
                    for cls in 0..c {
                        grad_logits.set(bi, cls, lr.grad_logits[cls] / chunk.len() as f64);
                    }
                }
                let grads = member.model.backward(&cache, &grad_logits)?;
                member
                    .optimizer
                    .step(&mut member.model, &grads)
                    .map_err(|e| Error::Training {
                        stage: "refine".into(),
                        detail: e.to_string(),
                    })?;
            }
        }

        // epoch barrier: clean snapshot -> consensus confidences -> gamma ->
        // reassignment
        history.record_epoch_snapshot(&ensemble, target_features)?;
        refresh_confidences(&mut label_set, &history)?;
        let gamma = compute_gamma(&label_set, config.alpha)?;
        let reassigned = if config.reassign_enabled {
            reassign(&mut label_set, &history, gamma)?
        } else {
            label_set.epoch += 1;
            0
        };

        let (clean, noisy) = match label_set.mean_conf_split() {
            Some((c0, n0)) => (Some(c0), Some(n0)),
            None => (None, None),
        };
        metrics.push(MetricsRecord {
            epoch,
            noise_pct: label_set.noise_pct(),
            gamma,
            hcs_count: select_hcs(&label_set, config.alpha).len(),
            reassigned_count: reassigned,
            mean_conf_clean: clean,
            mean_conf_noisy: noisy,
            mean_nel_loss: loss_sum / loss_batches.max(1) as f64,
        });

        if reassigned > 0 {
            reassignment_started = true;
        }
        if reassignment_started {
            if (reassigned as f64) < config.stall_min_fraction * n_t as f64 {
                stall_streak += 1;
                if stall_streak >= config.stall_window {
                    stall_fired = true;
                    break;
                }
            } else {
                stall_streak = 0;
            }
        }
    }

    Ok(RefineOutcome {
        labels: label_set,
        metrics,
        epochs_run,
        stall_fired,
        ensemble,
    })
}

/// Trains the final single target model on the high-confidence samples with
/// their refined labels. Feature layers start from the source model.
pub fn train_target(
    config: &RunConfig,
    source_model: &ClassifierModel,
    refined: &PseudoLabelSet,
    target_features: &Matrix,
    hcs: &[usize],
) -> Result<ClassifierModel> {
    config.validate(source_model.num_classes)?;
    if hcs.is_empty() {
        return Err(Error::EmptyHcs(
            "no sample exceeded the confidence threshold".into(),
        ));
    }
    let mut model = source_model.clone();
    let mut head_stream = RngStream::new(config.seed, STREAM_TARGET_HEAD);
    model.reinit_head(&mut head_stream);
    let features = gather_rows(target_features, hcs);
    let labels: Vec<usize> = hcs.iter().map(|&i| refined.labels[i]).collect();
    train_supervised(
        &mut model,
        &features,
        &labels,
        config.adam_target.unwrap_or(config.adam),
        config.epochs_target,
        config.batch_size,
        config.seed,
        STREAM_TARGET_SHUFFLE,
        "train-target",
    )?;
    Ok(model)
}

/// Run summary; serialized with the exact key set expected on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub task: String,
    pub initial_noise_pct: Option<f64>,
    pub final_noise_pct: Option<f64>,
    pub pseudo_label_acc_initial: Option<f64>,
    pub pseudo_label_acc_refined: Option<f64>,
    pub target_acc: Option<f64>,
    pub epochs_refine_run: usize,
    pub stall_fired: bool,
}

pub struct PipelineResult {
    pub summary: RunSummary,
    pub source_model: ClassifierModel,
    pub target_model: ClassifierModel,
    pub initial_labels: PseudoLabelSet,
    pub refined_labels: PseudoLabelSet,
    pub metrics: Vec<MetricsRecord>,
    pub source_holdout_acc: f64,
}

/// Executes pretrain -> infer -> refine -> train-target fully in memory.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineResult> {
    let (source, target) = config.load_task()?;
    if source.num_classes != target.num_classes {
        return Err(Error::Config("source/target class count mismatch".into()));
    }
    config.validate(source.num_classes)?;

    let (source_model, _train_acc, holdout_acc) = pretrain_source(config, &source)?;

    // source data is never touched past this point
    let truth = if target.labels.is_empty() {
        None
    } else {
        Some(target.labels.clone())
    };
    let initial_labels =
        infer_pseudo_labels_aggregated(&source_model, &target.features, truth)?;
    let initial_noise = initial_labels.noise_pct();
    let initial_acc = initial_labels.accuracy_pct();

    let outcome = refine(config, &source_model, &target.features, initial_labels.clone())?;
    let refined = outcome.labels;

    let hcs = select_hcs(&refined, config.alpha);
    let target_model = train_target(config, &source_model, &refined, &target.features, &hcs)?;
    let target_acc = if refined.has_truth() {
        Some(evaluate_accuracy(&target_model, &target.features, &target.labels)?)
    } else {
        None
    };

    let summary = RunSummary {
        seed: config.seed,
        task: config.task_tag(),
        initial_noise_pct: initial_noise,
        final_noise_pct: refined.noise_pct(),
        pseudo_label_acc_initial: initial_acc,
        pseudo_label_acc_refined: refined.accuracy_pct(),
        target_acc,
        epochs_refine_run: outcome.epochs_run,
        stall_fired: outcome.stall_fired,
    };
    Ok(PipelineResult {
        summary,
        source_model,
        target_model,
        initial_labels,
        refined_labels: refined,
        metrics: outcome.metrics,
        source_holdout_acc: holdout_acc,
    })
}

/// Full pipeline plus artifact emission: metrics CSV, refined-label CSV,
/// source/target checkpoints, and a summary JSON.
pub fn run_all(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let result = run_pipeline(config)?;
    std::fs::write(out_dir.join("metrics.csv"), metrics_to_csv(&result.metrics))?;
    crate::labels::save_labels_csv(&result.refined_labels, &out_dir.join("refined_labels.csv"))?;
    crate::model::save_checkpoint(&result.source_model, config.seed, &out_dir.join("source.aplr"))?;
    crate::model::save_checkpoint(&result.target_model, config.seed, &out_dir.join("target.aplr"))?;
    let summary_json = serde_json::to_string_pretty(&result.summary).unwrap();
    std::fs::write(out_dir.join("summary.json"), summary_json)?;
    Ok(result.summary)
}

/// Ablation axes mirroring the study's figure panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Alpha,
    NRl,
    NE,
    Diversity,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<AblationAxis> {
        match s {
            "alpha" => Ok(AblationAxis::Alpha),
            "n_rl" => Ok(AblationAxis::NRl),
            "n_e" => Ok(AblationAxis::NE),
            "diversity" => Ok(AblationAxis::Diversity),
            _ => Err(Error::Config(format!("unknown ablation axis '{}'", s))),
        }
    }

    pub fn default_values(&self) -> Vec<String> {
        match self {
            AblationAxis::Alpha => vec!["0.5", "0.8", "0.9", "0.95"],
            AblationAxis::NRl => vec!["1", "2", "3"],
            AblationAxis::NE => vec!["1", "2", "3"],
            AblationAxis::Diversity => vec!["drl_daug", "drl_saug", "srl_daug", "srl_saug"],
        }
        .into_iter()
        .map(String::from)
        .collect()
    }

    /// Applies one axis value to a copy of the base config.
    pub fn apply(&self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            AblationAxis::Alpha => {
                cfg.alpha = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad alpha '{}'", value)))?;
            }
            AblationAxis::NRl => {
                cfg.n_rl = Some(
                    value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad n_rl '{}'", value)))?,
                );
            }
            AblationAxis::NE => {
                cfg.n_e = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad n_e '{}'", value)))?;
            }
            AblationAxis::Diversity => {
                let (rl, aug) = match value {
                    "drl_daug" => (RlMode::Disjoint, AugMode::Distinct),
                    "drl_saug" => (RlMode::Disjoint, AugMode::Shared),
                    "srl_daug" => (RlMode::Shared, AugMode::Distinct),
                    "srl_saug" => (RlMode::Shared, AugMode::Shared),
                    _ => return Err(Error::Config(format!("bad diversity mode '{}'", value))),
                };
                cfg.rl_mode = rl;
                cfg.aug_mode = aug;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct AblationCell {
    pub value: String,
    pub seed: u64,
    pub outcome: std::result::Result<RunSummary, String>,
}

/// Grid of runs over one axis with shared seeds per cell. Invalid cells are
/// recorded as failures and the sweep continues.
pub fn ablate(base: &RunConfig, axis: AblationAxis, values: &[String], seeds: &[u64]) -> Vec<AblationCell> {
    let mut cells = Vec::new();
    for value in values {
        for &seed in seeds {
            let outcome = axis
                .apply(base, value)
                .and_then(|mut cfg| {
                    cfg.seed = seed;
                    if let TaskSource::Blob(t) = &mut cfg.task {
                        t.seed = seed;
                    }
                    run_pipeline(&cfg)
                })
                .map(|r| r.summary)
                .map_err(|e| e.to_string());
            cells.push(AblationCell {
                value: value.clone(),
                seed,
                outcome,
            });
        }
    }
    cells
}

pub fn ablation_to_csv(axis_name: &str, cells: &[AblationCell]) -> String {
    let mut out = String::from(
        "axis,value,seed,status,initial_noise_pct,final_noise_pct,target_acc,epochs_refine_run,stall_fired\n",
    );
    for cell in cells {
        match &cell.outcome {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},ok,{},{},{},{},{}",
                    axis_name,
                    cell.value,
                    cell.seed,
                    opt_field(s.initial_noise_pct),
                    opt_field(s.final_noise_pct),
                    opt_field(s.target_acc),
                    s.epochs_refine_run,
                    s.stall_fired
                );
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "{},{},{},failed: {},,,,,",
                    axis_name,
                    cell.value,
                    cell.seed,
                    e.replace(',', ";")
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_task(seed: u64) -> ShiftTask {
        ShiftTask {
            num_classes: 4,
            dim: 3,
            n_source: 120,
            n_target: 120,
            cluster_radius: 4.0,
            cluster_std: 0.5,
            aux_scale: 1.0,
            rotation_deg: 25.0,
            seed,
            ..ShiftTask::default()
        }
    }

    fn fast_config(seed: u64) -> RunConfig {
        let mut cfg = RunConfig::blob(seed, small_task(seed));
        // desk-scale tasks have ~30x fewer steps per epoch than the method's
        // reference setting, so the optimizer runs proportionally hotter
        cfg.adam.lr_head = 3e-3;
        cfg.adam.lr_feature = 3e-4;
        cfg.adam.weight_decay = 5e-3;
        let big = AdamConfig {
            lr_head: 1e-2,
            lr_feature: 1e-3,
            ..AdamConfig::default()
        };
        cfg.adam_source = Some(big);
        cfg.adam_target = Some(big);
        cfg.epochs_source = 60;
        cfg.epochs_refine = 40;
        cfg.epochs_target = 40;
        cfg.n_e = 2;
        cfg
    }

    #[test]
    fn config_validation_rules() {
        let mut cfg = fast_config(1);
        cfg.n_e = 4;
        cfg.n_rl = Some(3);
        assert!(matches!(cfg.validate(10), Err(Error::Config(_))));
        let mut cfg = fast_config(1);
        cfg.alpha = 1.0;
        assert!(matches!(cfg.validate(10), Err(Error::Config(_))));
        let mut cfg = fast_config(1);
        cfg.epochs_refine = 0;
        assert!(matches!(cfg.validate(10), Err(Error::Config(_))));
        assert!(fast_config(1).validate(10).is_ok());
    }

    #[test]
    fn default_n_rl_respects_disjointness() {
        let cfg = fast_config(1);
        // C=10, N_e=2 -> floor(9/2)=4; 2*4 <= 9
        assert_eq!(cfg.effective_n_rl(10), 4);
        let mut cfg3 = cfg.clone();
        cfg3.n_e = 3;
        assert_eq!(cfg3.effective_n_rl(10), 3);
        assert!(cfg3.validate(10).is_ok());
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let json = r#"{"seed": 7, "task": {"blob": {"num_classes": 4, "dim": 3,
            "n_source": 100, "n_target": 100, "cluster_radius": 3.0,
            "cluster_std": 0.5, "aux_scale": 1.0, "rotation_deg": 20.0,
            "translation": [], "scaling": [], "feature_noise_sigma": 0.0,
            "seed": 7}}}"#;
        let cfg = RunConfig::from_json_str(json).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_e, 3);
        assert_eq!(cfg.n_a, 10);
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.batch_size, 32);
        assert!(cfg.reassign_enabled);
        assert!(RunConfig::from_json_str("{not json").is_err());
    }

    #[test]
    fn pretrain_separable_source() {
        let cfg = fast_config(3);
        let (source, _target) = cfg.load_task().unwrap();
        let (_model, train_acc, holdout_acc) = pretrain_source(&cfg, &source).unwrap();
        assert!(train_acc > 90.0, "train acc {}", train_acc);
        assert!(holdout_acc > 80.0, "holdout acc {}", holdout_acc);
    }

    #[test]
    fn pretrain_deterministic() {
        let cfg = fast_config(4);
        let (source, _) = cfg.load_task().unwrap();
        let (m1, _, _) = pretrain_source(&cfg, &source).unwrap();
        let (m2, _, _) = pretrain_source(&cfg, &source).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn refine_gamma_starts_at_zero() {
        let cfg = fast_config(5);
        let (source, target) = cfg.load_task().unwrap();
        let (model, _, _) = pretrain_source(&cfg, &source).unwrap();
        let initial = infer_pseudo_labels_aggregated(
            &model,
            &target.features,
            Some(target.labels.clone()),
        )
        .unwrap();
        let outcome = refine(&cfg, &model, &target.features, initial).unwrap();
        // after one epoch the consensus probs of a single fresh-head
        // snapshot sit near 1/C, so nothing clears alpha yet
        assert_eq!(outcome.metrics[0].gamma, 0.0);
        for rec in &outcome.metrics {
            assert!(rec.hcs_count <= target.len());
            assert!(rec.reassigned_count <= target.len());
        }
    }

    #[test]
    fn refine_rejects_empty_target() {
        let cfg = fast_config(6);
        let (source, _target) = cfg.load_task().unwrap();
        let (model, _, _) = pretrain_source(&cfg, &source).unwrap();
        let empty = Matrix::zeros(0, 3);
        let labels = PseudoLabelSet::new(vec![], vec![], 4, None).unwrap();
        assert!(matches!(
            refine(&cfg, &model, &empty, labels),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn train_target_empty_hcs_fails_with_code_4() {
        let cfg = fast_config(7);
        let (source, target) = cfg.load_task().unwrap();
        let (model, _, _) = pretrain_source(&cfg, &source).unwrap();
        let refined = infer_pseudo_labels_aggregated(&model, &target.features, None).unwrap();
        let err = train_target(&cfg, &model, &refined, &target.features, &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyHcs(_)));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn run_pipeline_deterministic_metrics() {
        let cfg = fast_config(8);
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&cfg).unwrap();
        assert_eq!(metrics_to_csv(&a.metrics), metrics_to_csv(&b.metrics));
        assert_eq!(a.target_model, b.target_model);
        assert_eq!(a.refined_labels.labels, b.refined_labels.labels);
    }

    #[test]
    fn hidden_truth_isolation() {
        let cfg = fast_config(9);
        let (source, target) = cfg.load_task().unwrap();
        let (model, _, _) = pretrain_source(&cfg, &source).unwrap();
        let with_truth = infer_pseudo_labels_aggregated(
            &model,
            &target.features,
            Some(target.labels.clone()),
        )
        .unwrap();
        let mut without_truth = with_truth.clone();
        without_truth.strip_truth();
        let a = refine(&cfg, &model, &target.features, with_truth).unwrap();
        let b = refine(&cfg, &model, &target.features, without_truth).unwrap();
        assert_eq!(a.labels.labels, b.labels.labels);
        assert_eq!(a.epochs_run, b.epochs_run);
        // only the truth-derived metrics columns differ
        for (ra, rb) in a.metrics.iter().zip(&b.metrics) {
            assert_eq!(ra.gamma, rb.gamma);
            assert_eq!(ra.reassigned_count, rb.reassigned_count);
            assert!(rb.noise_pct.is_none());
            assert!(ra.noise_pct.is_some());
        }
    }

    #[test]
    fn run_all_emits_artifacts() {
        let cfg = fast_config(10);
        let dir = tempfile::tempdir().unwrap();
        let summary = run_all(&cfg, dir.path()).unwrap();
        assert!(dir.path().join("metrics.csv").exists());
        assert!(dir.path().join("refined_labels.csv").exists());
        assert!(dir.path().join("source.aplr").exists());
        assert!(dir.path().join("target.aplr").exists());
        let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in [
            "seed",
            "task",
            "initial_noise_pct",
            "final_noise_pct",
            "pseudo_label_acc_initial",
            "pseudo_label_acc_refined",
            "target_acc",
            "epochs_refine_run",
            "stall_fired",
        ] {
            assert!(parsed.get(key).is_some(), "missing summary key {}", key);
        }
        assert_eq!(summary.seed, 10);
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.starts_with(METRICS_CSV_HEADER));
    }

    #[test]
    fn ablate_single_value_equals_run_all() {
        let cfg = fast_config(11);
        let cells = ablate(
            &cfg,
            AblationAxis::NE,
            &["2".to_string()],
            &[11],
        );
        assert_eq!(cells.len(), 1);
        let cell_summary = cells[0].outcome.as_ref().unwrap();
        let direct = run_pipeline(&cfg).unwrap().summary;
        assert_eq!(cell_summary.final_noise_pct, direct.final_noise_pct);
        assert_eq!(cell_summary.target_acc, direct.target_acc);
    }

    #[test]
    fn ablate_records_invalid_cells_and_continues() {
        let cfg = fast_config(12);
        // n_e=9 with default n_rl >= 1 violates 9*1 <= C-1=3 for C=4
        let cells = ablate(
            &cfg,
            AblationAxis::NE,
            &["9".to_string(), "2".to_string()],
            &[12],
        );
        assert!(cells[0].outcome.is_err());
        assert!(cells[1].outcome.is_ok());
        let csv = ablation_to_csv("n_e", &cells);
        assert!(csv.contains("failed"));
        assert!(csv.lines().count() == 3);
    }
}
