//! Video distillation and stacked recurrent ensembles for face
//! presentation attack detection experiments.
//!
//! The library covers the full desk-scale pipeline:
//!
//! * [`imaging`] — frame buffers, grayscale conversion, bilinear rigid
//!   warping, integral images and box means.
//! * [`features`] — FAST corner detection, retina-style 512-bit binary
//!   descriptors and Hamming matching with cross-check.
//! * [`motion`] — rigid 2D transform algebra, closed-form estimation from
//!   correspondences and MSAC-robust estimation from noisy matches.
//! * [`distill`] — video segmentation, spatiotemporal-encoded images,
//!   naive frame averaging and alpha-composited synthetic augmentation.
//! * [`ensemble`] — LSTM/BiLSTM/GRU base learners trained per synthetic
//!   subset, out-of-fold stacking and a GRU meta-model.
//! * [`metrics`] — ROC, AUC, EER and HTER for biometric score sets.
//!
//! Everything is deterministic given an explicit seed; all pixel math is
//! carried in 64-bit floats and only quantized at file export.

pub mod distill;
pub mod ensemble;
pub mod features;
pub mod imaging;
pub mod metrics;
pub mod motion;

mod seed;

pub use seed::derive_seed;
