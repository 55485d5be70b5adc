//! The DD estimator: a convolutional real-vs-generated sentence classifier.
//!
//! Topology (fixed after construction):
//!
//! ```text
//! [BOS] + ids ──embedding──▶ 1-D convolutions (one per (window, kernels) layer)
//!     ──max over positions──▶ concatenate ──dropout──▶ affine ──sigmoid──▶ z
//! ```
//!
//! `z` is the learned surrogate for `p_real / (p_real + p_generated)`. The
//! classifier is trained on balanced data with binary cross-entropy, and its
//! accuracy `a` on the held-out test split gives `dd_hat = max(0, 2a − 1)`.
//!
//! Gradients are derived by hand for this topology; the test suite checks
//! them against central finite differences.

mod adam;
mod checkpoint;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::{SplitOrder, SplitSpec, DEFAULT_MAX_TOKENS};
use crate::error::{invalid, Result};
use crate::oracle::{DdMethod, DdScore};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use model::{loss_and_grads, ClassifierModel, ForwardMode, LabeledBatch, ParamGroup, PROB_EPS};
pub use train::{
    accuracy, dd_report, estimate_dd, prepare_dataset, train, Dataset, EpochRecord, LabeledExample, TrainedClassifier,
    TrainingLog,
};

/// One convolution layer: window width and number of kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub window: usize,
    pub kernels: usize,
}

impl From<(usize, usize)> for ConvSpec {
    fn from((window, kernels): (usize, usize)) -> Self {
        ConvSpec { window, kernels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub embed_dim: usize,
    /// `(window, kernels)` per layer.
    pub layers: Vec<(usize, usize)>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev-accuracy gain above `min_improvement` before
    /// training stops.
    pub patience: usize,
    pub min_improvement: f64,
    /// Longest accepted sequence, terminator included.
    pub max_len: usize,
    pub adam: AdamConfig,
    /// Split proportions; the ordering is always a seeded shuffle.
    pub split: (u64, u64, u64),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            embed_dim: 32,
            layers: vec![(2, 100), (3, 200)],
            dropout: 0.5,
            learning_rate: 1e-4,
            batch_size: 512,
            max_epochs: 100,
            patience: 10,
            min_improvement: 1e-3,
            max_len: DEFAULT_MAX_TOKENS + 1,
            adam: AdamConfig::default(),
            split: (8, 1, 1),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(invalid!("embedding dimension must be positive"));
        }
        if self.layers.is_empty() {
            return Err(invalid!("at least one convolution layer is required"));
        }
        for &(w, k) in &self.layers {
            if w == 0 || k == 0 {
                return Err(invalid!("convolution layer ({w}, {k}) needs window and kernels >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid!("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_len == 0 {
            return Err(invalid!("batch size, epoch limit and max_len must be positive"));
        }
        self.split_spec(0)?;
        Ok(())
    }

    pub fn conv_specs(&self) -> Vec<ConvSpec> {
        self.layers.iter().copied().map(ConvSpec::from).collect()
    }

    pub(crate) fn split_spec(&self, seed: u64) -> Result<SplitSpec> {
        SplitSpec::new(self.split.0, self.split.1, self.split.2, SplitOrder::Shuffled(seed))
    }
}

/// Outcome of one DD estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdReport {
    /// Test accuracy `a`.
    pub accuracy: f64,
    /// `b = 1 − a`.
    pub error: f64,
    /// `max(0, 2a − 1)`.
    pub dd: f64,
    pub accuracy_real: f64,
    pub accuracy_generated: f64,
    pub dev_accuracy: f64,
    pub test_size: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub seed: u64,
    pub config: ClassifierConfig,
    pub log: TrainingLog,
}

impl DdReport {
    pub fn score(&self) -> DdScore {
        let mut s = dd_from_accuracy(self.accuracy).expect("accuracy is a fraction");
        s.seed = Some(self.seed);
        s
    }
}

/// `dd_hat = max(0, 2a − 1)` for a held-out accuracy `a`.
pub fn dd_from_accuracy(accuracy: f64) -> Result<DdScore> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(invalid!("accuracy must lie in [0, 1], got {accuracy}"));
    }
    Ok(DdScore::new(2.0 * accuracy - 1.0, DdMethod::ClassifierEstimate, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_from_accuracy_examples() {
        assert_eq!(dd_from_accuracy(0.5).unwrap().value, 0.0);
        assert!((dd_from_accuracy(0.596).unwrap().value - 0.192).abs() < 1e-12);
        assert!((dd_from_accuracy(0.721).unwrap().value - 0.442).abs() < 1e-12);
        assert_eq!(dd_from_accuracy(1.0).unwrap().value, 1.0);
    }

    #[test]
    fn below_chance_clamps_to_zero() {
        let s = dd_from_accuracy(0.4).unwrap();
        assert_eq!(s.value, 0.0);
        assert!((s.raw.unwrap() + 0.2).abs() < 1e-15);
        assert!(dd_from_accuracy(1.2).is_err());
        assert!(dd_from_accuracy(f64::NAN).is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = ClassifierConfig::default();
        assert_eq!(c.layers, vec![(2, 100), (3, 200)]);
        assert_eq!(c.dropout, 0.5);
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.batch_size, 512);
        c.validate().unwrap();
        assert!(ClassifierConfig {
            dropout: 1.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(ClassifierConfig {
            layers: vec![(0, 3)],
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(ClassifierConfig {
            learning_rate: 0.0,
            ..c
        }
        .validate()
        .is_err());
    }
}
