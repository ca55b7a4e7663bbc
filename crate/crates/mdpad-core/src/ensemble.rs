//! Stacked recurrent ensemble: LSTM/BiLSTM/GRU base learners trained per
//! synthetic subset, k-fold out-of-fold stacking with a leakage audit, and
//! a GRU meta-model combining the base predictions.

use thiserror::Error;

mod extract;
mod io;
mod rnn;
mod stacking;
mod train;

pub use extract::{extract_features, FEATURE_DIM};
pub use io::{read_feature_file, read_model, read_scores, write_feature_file, write_model,
    write_scores};
pub use rnn::{gradient_check, rnn_forward, rnn_step_probs, CellKind, RnnParams};
pub use stacking::{audit_leakage, build_meta_dataset, make_stacking_plan, predict_meta,
    train_final_bases, train_meta, BaseModelConfig, MetaDataset, MetaEntry, Provenance,
    StackingConfig, StackingPlan, TrainedStack};
pub use train::{accuracy, train_rnn, TrainConfig, TrainReport, ValCheck};

use crate::distill::SubsetLabel;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("feature sequence is empty")]
    EmptySequence,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {0} is not 0 (attack) or 1 (live)")]
    BadLabel(u8),
    #[error("training split needs both classes")]
    OneClassTraining,
    #[error("training aborted: non-finite loss at iteration {iteration}")]
    NanLoss { iteration: usize },
    #[error("invalid stacking setup: {0}")]
    InvalidStacking(String),
    #[error("leakage detected: {0}")]
    Leakage(String),
    #[error("missing {subset} sequence for video {video_id}")]
    MissingSequence { video_id: String, subset: SubsetLabel },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: std::path::PathBuf, message: String },
}

/// One video's features: an ordered sequence of per-segment vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    /// 1 = live, 0 = attack.
    pub label: u8,
    pub subset: SubsetLabel,
    pub steps: Vec<Vec<f64>>,
    pub dim: usize,
}

impl FeatureSequence {
    pub fn new(
        video_id: impl Into<String>,
        label: u8,
        subset: SubsetLabel,
        steps: Vec<Vec<f64>>,
    ) -> Result<Self, EnsembleError> {
        if label > 1 {
            return Err(EnsembleError::BadLabel(label));
        }
        let Some(first) = steps.first() else {
            return Err(EnsembleError::EmptySequence);
        };
        let dim = first.len();
        for s in &steps {
            if s.len() != dim {
                return Err(EnsembleError::DimensionMismatch { expected: dim, got: s.len() });
            }
        }
        Ok(Self { video_id: video_id.into(), label, subset, steps, dim })
    }
}
