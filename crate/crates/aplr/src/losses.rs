//! Positive, negative, and negative-ensemble losses with analytic
//! gradients with respect to logits.
//!
//! Losses are computed from logits (fused softmax + loss) so the backward
//! signal uses the stable `p - onehot` form and its negative-learning
//! analogues. Probabilities are clamped to [PROB_EPS, 1-PROB_EPS] before
//! any log, which bounds both the value and the gradient near saturation.

use crate::error::{Error, Result};
use crate::numerics::{softmax, PROB_EPS};

#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub grad_logits: Vec<f64>,
}

fn check_label(label: usize, c: usize) -> Result<()> {
    if label >= c {
        return Err(Error::Label(format!("label {} out of range (C={})", label, c)));
    }
    Ok(())
}

/// Cross-entropy on the (pseudo-)label: value = -log(p_label),
/// gradient wrt logits = p - onehot(label).
pub fn pl_loss(logits: &[f64], label: usize) -> Result<LossResult> {
    check_label(label, logits.len())?;
    let p = softmax(logits)?;
    let value = -p.get(label).ln();
    let mut grad_logits = p.values().to_vec();
    grad_logits[label] -= 1.0;
    Ok(LossResult { value, grad_logits })
}

/// Negative-learning loss on a single complementary label:
/// value = -log(1 - p_bar).
pub fn nl_loss(logits: &[f64], complementary_label: usize) -> Result<LossResult> {
    nel_loss(logits, &[complementary_label])
}

/// Negative ensemble learning loss over a residual-label set:
/// value = -(1/N_RL) * sum_{c in RL} log(1 - p_c).
///
/// With |RL| = 1 this reduces exactly to `nl_loss`.
pub fn nel_loss(logits: &[f64], residual_labels: &[usize]) -> Result<LossResult> {
    if residual_labels.is_empty() {
        return Err(Error::Argument("residual label set is empty".into()));
    }
    let c = logits.len();
    for &rl in residual_labels {
        check_label(rl, c)?;
    }
    let p = softmax(logits)?;
    let n_rl = residual_labels.len() as f64;

    let mut value = 0.0;
    // coefficient q_c = p_c / (1 - p_c) for each residual label; the
    // gradient wrt logit j is (1/N_RL) * sum_c q_c * (1[j==c] - p_j)
    let mut q_sum = 0.0;
    let mut q = vec![0.0; c];
    for &rl in residual_labels {
        let pc = p.get(rl).min(1.0 - PROB_EPS);
        value -= (1.0 - pc).ln();
        let qc = pc / (1.0 - pc);
        q[rl] += qc;
        q_sum += qc;
    }
    value /= n_rl;

    let mut grad_logits = vec![0.0; c];
    for j in 0..c {
        grad_logits[j] = (q[j] - q_sum * p.get(j)) / n_rl;
    }
    Ok(LossResult { value, grad_logits })
}

/// Arithmetic mean of per-sample loss results over a batch.
pub fn batch_mean(results: &[LossResult]) -> Result<LossResult> {
    if results.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let c = results[0].grad_logits.len();
    let n = results.len() as f64;
    let mut value = 0.0;
    let mut grad_logits = vec![0.0; c];
    for r in results {
        value += r.value;
        for (g, rg) in grad_logits.iter_mut().zip(&r.grad_logits) {
            *g += rg;
        }
    }
    value /= n;
    for g in &mut grad_logits {
        *g /= n;
    }
    Ok(LossResult { value, grad_logits })
}
