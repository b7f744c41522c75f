//! Pseudo-label inference, disjoint residual label sampling, the adaptive
//! threshold gamma, the per-epoch reassignment rule, and high-confidence
//! sample selection.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::ensemble::ConfidenceHistory;
use crate::error::{Error, Result};
use crate::model::ClassifierModel;
use crate::numerics::{argmax, softmax, Matrix, RngStream};

/// Current pseudo-label and confidence per target sample. The hidden
/// ground truth (when present) feeds metrics only; training code receives
/// views that cannot see it.
#[derive(Debug, Clone)]
pub struct PseudoLabelSet {
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
    pub num_classes: usize,
    pub epoch: usize,
    hidden_truth: Option<Vec<usize>>,
}

impl PseudoLabelSet {
    pub fn new(
        labels: Vec<usize>,
        confidences: Vec<f64>,
        num_classes: usize,
        hidden_truth: Option<Vec<usize>>,
    ) -> Result<PseudoLabelSet> {
        if labels.len() != confidences.len() {
            return Err(Error::Argument("labels/confidences length mismatch".into()));
        }
        if let Some(t) = &hidden_truth {
            if t.len() != labels.len() {
                return Err(Error::Argument("hidden truth length mismatch".into()));
            }
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::Label("pseudo-label out of range".into()));
        }
        Ok(PseudoLabelSet {
            labels,
            confidences,
            num_classes,
            epoch: 0,
            hidden_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_truth(&self) -> bool {
        self.hidden_truth.is_some()
    }

    pub fn strip_truth(&mut self) {
        self.hidden_truth = None;
    }

    /// Fraction of pseudo-labels disagreeing with the hidden truth, as a
    /// percentage. Diagnostic only; None when no truth is attached.
    pub fn noise_pct(&self) -> Option<f64> {
        let truth = self.hidden_truth.as_ref()?;
        let wrong = self
            .labels
            .iter()
            .zip(truth)
            .filter(|(a, b)| a != b)
            .count();
        Some(100.0 * wrong as f64 / self.labels.len() as f64)
    }

    pub fn accuracy_pct(&self) -> Option<f64> {
        self.noise_pct().map(|n| 100.0 - n)
    }

    /// Mean confidence over (clean, noisy) samples per the hidden truth.
    pub fn mean_conf_split(&self) -> Option<(f64, f64)> {
        let truth = self.hidden_truth.as_ref()?;
        let (mut cs, mut cn, mut ns, mut nn) = (0.0, 0usize, 0.0, 0usize);
        for ((&l, &t), &p) in self.labels.iter().zip(truth).zip(&self.confidences) {
            if l == t {
                cs += p;
                cn += 1;
            } else {
                ns += p;
                nn += 1;
            }
        }
        let clean = if cn > 0 { cs / cn as f64 } else { f64::NAN };
        let noisy = if nn > 0 { ns / nn as f64 } else { f64::NAN };
        Some((clean, noisy))
    }

    /// Fraction of noisy samples whose confidence exceeds the threshold.
    pub fn noisy_overfit_fraction(&self, threshold: f64) -> Option<f64> {
        let truth = self.hidden_truth.as_ref()?;
        let mut noisy = 0usize;
        let mut over = 0usize;
        for ((&l, &t), &p) in self.labels.iter().zip(truth).zip(&self.confidences) {
            if l != t {
                noisy += 1;
                if p > threshold {
                    over += 1;
                }
            }
        }
        if noisy == 0 {
            return Some(0.0);
        }
        Some(over as f64 / noisy as f64)
    }
}

/// Per-member residual label blocks; pairwise disjoint, never containing
/// the pseudo-label.
#[derive(Debug, Clone)]
pub struct ResidualAssignment {
    pub blocks: Vec<Vec<usize>>,
}

/// Pseudo-labels via argmax of a single source model's logits; confidences
/// from the softmax of those logits. Ties break to the lowest class index.
pub fn infer_pseudo_labels_aggregated(
    source_model: &ClassifierModel,
    features: &Matrix,
    hidden_truth: Option<Vec<usize>>,
) -> Result<PseudoLabelSet> {
    infer_pseudo_labels_late_fusion(std::slice::from_ref(source_model), features, hidden_truth)
}

/// Late fusion: argmax of the logit sum across source models.
pub fn infer_pseudo_labels_late_fusion(
    models: &[ClassifierModel],
    features: &Matrix,
    hidden_truth: Option<Vec<usize>>,
) -> Result<PseudoLabelSet> {
    if models.is_empty() {
        return Err(Error::Argument("no source models supplied".into()));
    }
    let c = models[0].num_classes;
    if models.iter().any(|m| m.num_classes != c) {
        return Err(Error::Dimension("source models disagree on C".into()));
    }
    let mut total: Option<Matrix> = None;
    for model in models {
        let logits = model.logits(features)?;
        match &mut total {
            None => total = Some(logits),
            Some(acc) => {
                for (a, b) in acc.data.iter_mut().zip(&logits.data) {
                    *a += b;
                }
            }
        }
    }
    let summed = total.unwrap();
    let mut labels = Vec::with_capacity(features.rows);
    let mut confidences = Vec::with_capacity(features.rows);
    for r in 0..features.rows {
        let row = summed.row(r);
        let y = argmax(row);
        labels.push(y);
        confidences.push(softmax(row)?.get(y));
    }
    PseudoLabelSet::new(labels, confidences, c, hidden_truth)
}

/// Uniformly shuffles the complement of the pseudo-label and partitions the
/// first N_e * N_RL elements into N_e disjoint blocks of N_RL.
pub fn sample_disjoint_residual_labels(
    stream: &mut RngStream,
    pseudo_label: usize,
    num_classes: usize,
    n_e: usize,
    n_rl: usize,
) -> Result<ResidualAssignment> {
    if n_e * n_rl > num_classes - 1 {
        return Err(Error::Config(format!(
            "N_e*N_RL = {} exceeds C-1 = {}",
            n_e * n_rl,
            num_classes - 1
        )));
    }
    let mut complement: Vec<usize> = (0..num_classes).filter(|&c| c != pseudo_label).collect();
    stream.shuffle(&mut complement);
    let blocks = (0..n_e)
        .map(|k| complement[k * n_rl..(k + 1) * n_rl].to_vec())
        .collect();
    Ok(ResidualAssignment { blocks })
}

/// Same residual block replicated for every member (the SRL ablation mode).
pub fn sample_shared_residual_labels(
    stream: &mut RngStream,
    pseudo_label: usize,
    num_classes: usize,
    n_e: usize,
    n_rl: usize,
) -> Result<ResidualAssignment> {
    if n_rl > num_classes - 1 {
        return Err(Error::Config(format!(
            "N_RL = {} exceeds C-1 = {}",
            n_rl,
            num_classes - 1
        )));
    }
    let complement: Vec<usize> = (0..num_classes).filter(|&c| c != pseudo_label).collect();
    let block = crate::numerics::draw_uniform_subset(stream, &complement, n_rl)?;
    Ok(ResidualAssignment {
        blocks: vec![block; n_e],
    })
}

/// Ratio of high-confidence samples: count(p > alpha, strict) / N_t.
pub fn compute_gamma(label_set: &PseudoLabelSet, alpha: f64) -> Result<f64> {
    if label_set.is_empty() {
        return Err(Error::Argument("empty label set".into()));
    }
    let hcs = label_set.confidences.iter().filter(|&&p| p > alpha).count();
    Ok(hcs as f64 / label_set.len() as f64)
}

/// Applies the per-epoch reassignment rule. For each sample the consensus
/// probability is recomputed; if the confidence of the previous label is
/// strictly below gamma, the label moves to the consensus argmax.
/// Returns the number of reassigned samples.
pub fn reassign(
    label_set: &mut PseudoLabelSet,
    history: &ConfidenceHistory,
    gamma: f64,
) -> Result<usize> {
    let mut reassigned = 0usize;
    for j in 0..label_set.len() {
        let p = history.consensus_probs(j)?;
        let prev = label_set.labels[j];
        let conf_prev = p.get(prev);
        if conf_prev < gamma {
            let new = p.argmax();
            if new != prev {
                reassigned += 1;
            }
            label_set.labels[j] = new;
            label_set.confidences[j] = p.get(new);
        } else {
            label_set.labels[j] = prev;
            label_set.confidences[j] = conf_prev;
        }
    }
    label_set.epoch += 1;
    Ok(reassigned)
}

/// Refreshes confidences from the consensus without changing labels.
pub fn refresh_confidences(
    label_set: &mut PseudoLabelSet,
    history: &ConfidenceHistory,
) -> Result<()> {
    for j in 0..label_set.len() {
        let p = history.consensus_probs(j)?;
        label_set.confidences[j] = p.get(label_set.labels[j]);
    }
    Ok(())
}

/// Indices with confidence strictly above alpha.
pub fn select_hcs(label_set: &PseudoLabelSet, alpha: f64) -> Vec<usize> {
    label_set
        .confidences
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > alpha)
        .map(|(i, _)| i)
        .collect()
}

// ---------------------------------------------------------------------------
// CSV serialization: sample_id, pseudo_label, confidence, (optional)
// true_label.
// ---------------------------------------------------------------------------

pub fn labels_to_csv(label_set: &PseudoLabelSet) -> String {
    let mut out = String::new();
    if label_set.has_truth() {
        out.push_str("sample_id,pseudo_label,confidence,true_label\n");
    } else {
        out.push_str("sample_id,pseudo_label,confidence\n");
    }
    for j in 0..label_set.len() {
        out.push_str(&format!(
            "{},{},{:?}",
            j, label_set.labels[j], label_set.confidences[j]
        ));
        if let Some(t) = &label_set.hidden_truth {
            out.push_str(&format!(",{}", t[j]));
        }
        out.push('\n');
    }
    out
}

pub fn labels_from_csv_str(text: &str, num_classes: usize) -> Result<PseudoLabelSet> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty label CSV".into()))?;
    let with_truth = match header {
        "sample_id,pseudo_label,confidence,true_label" => true,
        "sample_id,pseudo_label,confidence" => false,
        _ => return Err(Error::Format(format!("bad label CSV header: {}", header))),
    };
    let mut labels = Vec::new();
    let mut confidences = Vec::new();
    let mut truth = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if with_truth { 4 } else { 3 };
        if fields.len() != expected {
            return Err(Error::Format(format!("row {}: wrong field count", i + 2)));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("row {}: bad sample_id", i + 2)))?;
        if id != labels.len() {
            return Err(Error::Format(format!("row {}: non-sequential id", i + 2)));
        }
        labels.push(
            fields[1]
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad label", i + 2)))?,
        );
        let conf: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Format(format!("row {}: bad confidence", i + 2)))?;
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::Format(format!("row {}: confidence out of range", i + 2)));
        }
        confidences.push(conf);
        if with_truth {
            truth.push(
                fields[3]
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad true_label", i + 2)))?,
            );
        }
    }
    PseudoLabelSet::new(
        labels,
        confidences,
        num_classes,
        if with_truth { Some(truth) } else { None },
    )
}

pub fn save_labels_csv(label_set: &PseudoLabelSet, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(labels_to_csv(label_set).as_bytes())?;
    Ok(())
}

pub fn load_labels_csv(path: &Path, num_classes: usize) -> Result<PseudoLabelSet> {
    let file = std::fs::File::open(path)?;
    let mut text = String::new();
    let mut reader = std::io::BufReader::new(file);
    while reader.read_line(&mut text)? != 0 {}
    labels_from_csv_str(&text, num_classes)
}
