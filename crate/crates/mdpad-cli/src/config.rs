//! Run configuration: flat `key=value` text with dotted namespaces, e.g.
//! `msac.threshold_px=2.0`. `#` starts a comment. Unknown keys are
//! errors; omitted keys keep their defaults.

use anyhow::{bail, Context, Result};
use mdpad_core::distill::{PipelineConfig, SubsetLabel};
use mdpad_core::ensemble::{BaseModelConfig, CellKind, StackingConfig, TrainConfig};
use std::path::Path;
use std::str::FromStr;

/// One base-model slot of the stacking pairing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingEntry {
    pub kind: CellKind,
    pub subset: SubsetLabel,
    pub hidden: usize,
}

impl FromStr for PairingEntry {
    type Err = anyhow::Error;

    /// `kind:subset:hidden`, e.g. `lstm:synt1:500`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            bail!("pairing entry `{s}` must be kind:subset:hidden");
        }
        Ok(Self {
            kind: parts[0].parse().map_err(anyhow::Error::msg)?,
            subset: parts[1].parse().map_err(anyhow::Error::msg)?,
            hidden: parts[2].parse().context("hidden units")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,

    // pipeline.*
    pub segment_len: usize,
    pub alphas: Vec<f64>,
    pub role_swap: bool,

    // detector.*
    pub detector_threshold: f64,
    pub detector_n_contiguous: usize,
    pub detector_nonmax: bool,
    pub detector_max_keypoints: usize,

    // matcher.*
    pub matcher_max_distance: u32,

    // msac.*
    pub msac_threshold_px: f64,
    pub msac_confidence: f64,
    pub msac_max_iters: usize,
    pub msac_min_inliers: usize,

    // train.*
    pub learning_rate: f64,
    pub batch_size: usize,
    pub val_check_period: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub max_iters: usize,
    pub holdout_fraction: f64,

    // stacking.*
    pub stacking_k: usize,
    pub pairing: Vec<PairingEntry>,
    pub meta_hidden: usize,
    /// The reference tables list 1 here; that diverges with Adam, so the
    /// working default is 1e-3 and the table value stays reachable via
    /// config.
    pub meta_learning_rate: f64,
    pub meta_flat: bool,

    // corpus.*
    pub corpus_videos: usize,
    pub corpus_frames: usize,
    pub corpus_size: u32,
    pub corpus_drift: f64,
    pub corpus_rotation_deg: f64,
    pub corpus_motion_amplitude: f64,

    // bench.*
    pub bench_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            segment_len: 40,
            alphas: vec![0.5, 1.0, 1.5],
            role_swap: false,
            detector_threshold: 20.0,
            detector_n_contiguous: 9,
            detector_nonmax: true,
            detector_max_keypoints: 2000,
            matcher_max_distance: 128,
            msac_threshold_px: 2.0,
            msac_confidence: 0.99,
            msac_max_iters: 2000,
            msac_min_inliers: 6,
            learning_rate: 1e-4,
            batch_size: 32,
            val_check_period: 30,
            patience: 5,
            min_delta: 1e-6,
            max_iters: 5000,
            holdout_fraction: 0.2,
            stacking_k: 5,
            pairing: vec![
                PairingEntry { kind: CellKind::Lstm, subset: SubsetLabel::Synt(1), hidden: 500 },
                PairingEntry { kind: CellKind::BiLstm, subset: SubsetLabel::Synt(2), hidden: 20 },
                PairingEntry { kind: CellKind::Gru, subset: SubsetLabel::Synt(3), hidden: 20 },
            ],
            meta_hidden: 100,
            meta_learning_rate: 1e-3,
            meta_flat: false,
            corpus_videos: 24,
            corpus_frames: 120,
            corpus_size: 224,
            corpus_drift: 0.5,
            corpus_rotation_deg: 0.0,
            corpus_motion_amplitude: 10.0,
            bench_repeats: 5,
        }
    }
}

fn parse_into<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("config key `{key}`: bad value `{value}` ({e})"))
}

impl RunConfig {
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value, got `{line}`", lineno + 1);
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("config line {}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_into(key, value)?,
            "jobs" => self.jobs = parse_into(key, value)?,
            "pipeline.segment_len" => self.segment_len = parse_into(key, value)?,
            "pipeline.alphas" => {
                self.alphas = value
                    .split(',')
                    .map(|v| parse_into::<f64>(key, v.trim()))
                    .collect::<Result<_>>()?;
                if self.alphas.is_empty() || self.alphas.iter().any(|a| !a.is_finite()) {
                    bail!("config key `{key}`: alphas must be nonempty and finite");
                }
            }
            "pipeline.role_swap" => self.role_swap = parse_into(key, value)?,
            "detector.threshold" => self.detector_threshold = parse_into(key, value)?,
            "detector.n_contiguous" => self.detector_n_contiguous = parse_into(key, value)?,
            "detector.nonmax" => self.detector_nonmax = parse_into(key, value)?,
            "detector.max_keypoints" => self.detector_max_keypoints = parse_into(key, value)?,
            "matcher.max_distance" => self.matcher_max_distance = parse_into(key, value)?,
            "msac.threshold_px" => self.msac_threshold_px = parse_into(key, value)?,
            "msac.confidence" => self.msac_confidence = parse_into(key, value)?,
            "msac.max_iters" => self.msac_max_iters = parse_into(key, value)?,
            "msac.min_inliers" => self.msac_min_inliers = parse_into(key, value)?,
            "train.learning_rate" => self.learning_rate = parse_into(key, value)?,
            "train.batch_size" => self.batch_size = parse_into(key, value)?,
            "train.val_check_period" => self.val_check_period = parse_into(key, value)?,
            "train.patience" => self.patience = parse_into(key, value)?,
            "train.min_delta" => self.min_delta = parse_into(key, value)?,
            "train.max_iters" => self.max_iters = parse_into(key, value)?,
            "train.holdout_fraction" => self.holdout_fraction = parse_into(key, value)?,
            "stacking.k" => self.stacking_k = parse_into(key, value)?,
            "stacking.pairing" => {
                self.pairing = value
                    .split(',')
                    .map(|v| v.trim().parse())
                    .collect::<Result<_>>()?;
                if self.pairing.is_empty() {
                    bail!("config key `{key}`: pairing must be nonempty");
                }
            }
            "stacking.meta_hidden" => self.meta_hidden = parse_into(key, value)?,
            "stacking.meta_learning_rate" => self.meta_learning_rate = parse_into(key, value)?,
            "stacking.meta_flat" => self.meta_flat = parse_into(key, value)?,
            "corpus.videos" => self.corpus_videos = parse_into(key, value)?,
            "corpus.frames" => self.corpus_frames = parse_into(key, value)?,
            "corpus.size" => self.corpus_size = parse_into(key, value)?,
            "corpus.drift" => self.corpus_drift = parse_into(key, value)?,
            "corpus.rotation_deg" => self.corpus_rotation_deg = parse_into(key, value)?,
            "corpus.motion_amplitude" => self.corpus_motion_amplitude = parse_into(key, value)?,
            "bench.repeats" => self.bench_repeats = parse_into(key, value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            segment_len: self.segment_len,
            alphas: self.alphas.clone(),
            detector: mdpad_core::features::FastConfig {
                threshold: self.detector_threshold,
                n_contiguous: self.detector_n_contiguous,
                nonmax: self.detector_nonmax,
                max_keypoints: self.detector_max_keypoints,
            },
            pattern: Default::default(),
            match_max_distance: self.matcher_max_distance,
            msac: mdpad_core::motion::MsacParams {
                threshold_px: self.msac_threshold_px,
                confidence: self.msac_confidence,
                max_iters: self.msac_max_iters,
                min_inliers: self.msac_min_inliers,
                seed: self.seed,
            },
            role_swap: self.role_swap,
            seed: self.seed,
        }
    }

    fn train_config(&self, learning_rate: f64) -> TrainConfig {
        TrainConfig {
            learning_rate,
            batch_size: self.batch_size,
            val_check_period: self.val_check_period,
            patience: self.patience,
            min_delta: self.min_delta,
            max_iters: self.max_iters,
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn stacking(&self) -> StackingConfig {
        StackingConfig {
            k: self.stacking_k,
            bases: self
                .pairing
                .iter()
                .map(|p| BaseModelConfig {
                    kind: p.kind,
                    subset: p.subset,
                    hidden: p.hidden,
                    train: self.train_config(self.learning_rate),
                })
                .collect(),
            meta_hidden: self.meta_hidden,
            meta_train: self.train_config(self.meta_learning_rate),
            meta_flat: self.meta_flat,
            holdout_fraction: self.holdout_fraction,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.segment_len, 40);
        assert_eq!(cfg.alphas, vec![0.5, 1.0, 1.5]);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.val_check_period, 30);
        assert_eq!(cfg.pairing[0].hidden, 500);
        assert_eq!(cfg.pairing[1].hidden, 20);
        assert_eq!(cfg.pairing[2].hidden, 20);
        assert_eq!(cfg.meta_hidden, 100);
    }

    #[test]
    fn parses_dotted_keys_and_lists() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\n\
             msac.threshold_px=3.5\n\
             pipeline.alphas=0.25, 0.75\n\
             stacking.pairing=gru:original:8,lstm:synt1:16\n\
             seed=42\n",
        )
        .unwrap();
        assert_eq!(cfg.msac_threshold_px, 3.5);
        assert_eq!(cfg.alphas, vec![0.25, 0.75]);
        assert_eq!(cfg.seed, 42);
        assert_eq!(
            cfg.pairing,
            vec![
                PairingEntry { kind: CellKind::Gru, subset: SubsetLabel::Original, hidden: 8 },
                PairingEntry { kind: CellKind::Lstm, subset: SubsetLabel::Synt(1), hidden: 16 },
            ]
        );
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = RunConfig::default();
        let err = format!("{:#}", cfg.apply_text("no_such_key=1\n").unwrap_err());
        assert!(err.contains("unknown config key"), "{err}");
        assert!(cfg.apply_text("seed=abc\n").is_err());
        assert!(cfg.apply_text("pipeline.alphas=\n").is_err());
        assert!(cfg.apply_text("just a line\n").is_err());
    }
}
