//! Adaptive pseudo-label refinement for source-free domain adaptation.
//!
//! The engine trains an ensemble of small feedforward classifiers with a
//! negative-learning loss over disjoint residual labels, progressively
//! filters and reassigns noisy pseudo-labels with a fully adaptive
//! confidence threshold, and finally trains a single target model on the
//! refined high-confidence labels.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod labels;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
