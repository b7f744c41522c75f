//! Ensemble management: member logit aggregation and the per-sample
//! moving-average consensus over the last N_a epoch snapshots.

use crate::error::{Error, Result};
use crate::model::{AdamState, ClassifierModel};
use crate::numerics::{softmax, Matrix, ProbVector, RngStream};

/// One ensemble member: model, optimizer state, and the member's RNG
/// streams for augmentation and residual-label sampling.
pub struct Member {
    pub model: ClassifierModel,
    pub optimizer: AdamState,
    pub aug_stream: RngStream,
    pub rl_stream: RngStream,
}

/// N_e members with fixed unit weights.
pub struct EnsembleState {
    pub members: Vec<Member>,
    /// Per-member aggregation weights; fixed to 1.
    pub member_weights: Vec<f64>,
}

impl EnsembleState {
    pub fn new(members: Vec<Member>) -> Result<EnsembleState> {
        if members.is_empty() {
            return Err(Error::State("ensemble has no members".into()));
        }
        let (d, c) = (members[0].model.input_dim, members[0].model.num_classes);
        if members
            .iter()
            .any(|m| m.model.input_dim != d || m.model.num_classes != c)
        {
            return Err(Error::State("members disagree on input_dim or C".into()));
        }
        let n = members.len();
        Ok(EnsembleState {
            members,
            member_weights: vec![1.0; n],
        })
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn num_classes(&self) -> usize {
        self.members[0].model.num_classes
    }

    /// Weighted sum of member logits (weights fixed to 1, so a plain sum).
    pub fn ensemble_logits(&self, batch: &Matrix) -> Result<Matrix> {
        let mut total: Option<Matrix> = None;
        for (member, &w) in self.members.iter().zip(&self.member_weights) {
            let logits = member.model.logits(batch)?;
            match &mut total {
                None => {
                    let mut m = logits;
                    if w != 1.0 {
                        m.data.iter_mut().for_each(|v| *v *= w);
                    }
                    total = Some(m);
                }
                Some(acc) => {
                    for (a, l) in acc.data.iter_mut().zip(&logits.data) {
                        *a += w * l;
                    }
                }
            }
        }
        Ok(total.unwrap())
    }
}

/// Per-sample ring buffer of the last N_a ensemble logit snapshots.
pub struct ConfidenceHistory {
    capacity: usize,
    num_samples: usize,
    num_classes: usize,
    num_members: usize,
    /// buffers[sample] holds up to `capacity` logit vectors, oldest first.
    buffers: Vec<Vec<Vec<f64>>>,
}

impl ConfidenceHistory {
    pub fn new(num_samples: usize, num_classes: usize, num_members: usize, capacity: usize) -> Self {
        ConfidenceHistory {
            capacity,
            num_samples,
            num_classes,
            num_members,
            buffers: vec![Vec::new(); num_samples],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill(&self, sample: usize) -> usize {
        self.buffers[sample].len()
    }

    pub fn snapshots(&self, sample: usize) -> &[Vec<f64>] {
        &self.buffers[sample]
    }

    /// Records one clean-pass ensemble logit vector per sample. The oldest
    /// snapshot is evicted once the buffer holds N_a entries.
    pub fn record_epoch_snapshot(
        &mut self,
        state: &EnsembleState,
        features: &Matrix,
    ) -> Result<()> {
        if features.rows != self.num_samples {
            return Err(Error::State(format!(
                "dataset has {} samples, history expects {}",
                features.rows, self.num_samples
            )));
        }
        if state.num_members() != self.num_members {
            return Err(Error::State("member count changed under history".into()));
        }
        let logits = state.ensemble_logits(features)?;
        if !logits.is_finite() {
            return Err(Error::Numeric("non-finite snapshot logits".into()));
        }
        for sample in 0..self.num_samples {
            let buf = &mut self.buffers[sample];
            if buf.len() == self.capacity {
                buf.remove(0);
            }
            buf.push(logits.row(sample).to_vec());
        }
        Ok(())
    }

    /// Consensus probabilities for one sample:
    /// softmax of (1/(fill * N_e)) * sum over stored snapshots.
    /// Uses the fill count, not N_a, before the buffer is full.
    pub fn consensus_probs(&self, sample: usize) -> Result<ProbVector> {
        let buf = &self.buffers[sample];
        if buf.is_empty() {
            return Err(Error::NotReady(format!(
                "no snapshot recorded for sample {}",
                sample
            )));
        }
        let scale = 1.0 / (buf.len() as f64 * self.num_members as f64);
        let mut mean = vec![0.0; self.num_classes];
        for snap in buf {
            for (m, v) in mean.iter_mut().zip(snap) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m *= scale;
        }
        softmax(&mean)
    }
}
