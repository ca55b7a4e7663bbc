//! Video distillation: segments a video, estimates per-frame cumulative
//! rigid transforms, collapses each segment into a spatiotemporal-encoded
//! image, and produces alpha-composited synthetic variants.
//!
//! Each segment's first frame is the fixed reference. For every later
//! frame the inter-frame transform is estimated from matched FAST/retinal
//! features with MSAC, composed onto the running cumulative transform,
//! and the warped frames are averaged. Removing the alignment yields the
//! naive average baseline, which keeps the motion blur the encoded image
//! removes.

use crate::features::{build_pattern, describe, detect_fast, match_descriptors, FastConfig,
    PatternConfig, RetinalPattern};
use crate::imaging::{clamp_sample, frame_from_parts, to_grayscale, warp_rigid, Frame};
use crate::motion::{estimate_msac, Correspondence, MsacParams, RigidTransform};
use crate::seed::derive_seed;
use std::fmt;
use std::time::{Duration, Instant};
use thiserror::Error;

pub use crate::imaging::alpha_blend;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("video has no frames")]
    EmptyVideo,
    #[error("segment length must be at least 1")]
    ZeroSegmentLength,
    #[error("frames are not contiguous: index {found} after {previous}")]
    NonContiguousFrames { previous: usize, found: usize },
    #[error("frame {index} has shape {got}, segment expects {expected}")]
    ShapeMismatch { index: usize, got: String, expected: String },
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
}

/// Pipeline parameters for distillation and synthetic augmentation.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Frames per segment (N).
    pub segment_len: usize,
    /// Blend weights for the synthetic subsets.
    pub alphas: Vec<f64>,
    pub detector: FastConfig,
    pub pattern: PatternConfig,
    /// Maximum Hamming distance accepted by the matcher.
    pub match_max_distance: u32,
    pub msac: MsacParams,
    /// Swaps which image the alpha weight applies to in the blend.
    pub role_swap: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segment_len: 40,
            alphas: vec![0.5, 1.0, 1.5],
            detector: FastConfig::default(),
            pattern: PatternConfig::default(),
            match_max_distance: 128,
            msac: MsacParams::default(),
            role_swap: false,
            seed: 0,
        }
    }
}

/// A contiguous run of frames from one video.
#[derive(Debug, Clone)]
pub struct Segment {
    pub frames: Vec<Frame>,
    pub segment_index: usize,
    pub video_id: String,
    /// Set when this is a kept remainder shorter than the configured
    /// segment length.
    pub short_remainder: bool,
}

impl Segment {
    fn new(
        frames: Vec<Frame>,
        segment_index: usize,
        video_id: &str,
        short_remainder: bool,
    ) -> Result<Self, DistillError> {
        debug_assert!(!frames.is_empty());
        let first = &frames[0];
        let expected = (first.width(), first.height(), first.channels());
        let mut prev_index = first.index;
        for f in &frames[1..] {
            if f.index != prev_index + 1 {
                return Err(DistillError::NonContiguousFrames {
                    previous: prev_index,
                    found: f.index,
                });
            }
            prev_index = f.index;
            if (f.width(), f.height(), f.channels()) != expected {
                return Err(DistillError::ShapeMismatch {
                    index: f.index,
                    got: format!("{}x{}x{}", f.width(), f.height(), f.channels()),
                    expected: format!("{}x{}x{}", expected.0, expected.1, expected.2),
                });
            }
        }
        Ok(Self { frames, segment_index, video_id: video_id.to_string(), short_remainder })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Splits a video into consecutive non-overlapping chunks of `n` frames.
/// A final shorter remainder is kept (flagged) when it spans at least half
/// a segment, otherwise it merges into the previous chunk.
pub fn segment_video(
    frames: Vec<Frame>,
    video_id: &str,
    n: usize,
) -> Result<Vec<Segment>, DistillError> {
    if frames.is_empty() {
        return Err(DistillError::EmptyVideo);
    }
    if n == 0 {
        return Err(DistillError::ZeroSegmentLength);
    }
    let total = frames.len();
    let full = total / n;
    let rem = total % n;
    let mut boundaries: Vec<usize> = (0..=full).map(|k| k * n).collect();
    if rem > 0 {
        if 2 * rem >= n || full == 0 {
            boundaries.push(total); // kept as its own (short) segment
        } else {
            *boundaries.last_mut().unwrap() = total; // merged into previous
        }
    }

    let mut segments = Vec::with_capacity(boundaries.len() - 1);
    let mut rest = frames;
    for (k, w) in boundaries.windows(2).enumerate() {
        let tail = rest.split_off(w[1] - w[0]);
        let chunk = std::mem::replace(&mut rest, tail);
        let short = chunk.len() < n;
        segments.push(Segment::new(chunk, k, video_id, short)?);
    }
    Ok(segments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StiMode {
    /// Motion-compensated accumulation.
    Accumulated,
    /// Naive frame average.
    Averaged,
}

/// Per-frame estimation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameDiagnostics {
    pub frame_index: usize,
    pub matches: usize,
    pub inliers: usize,
    pub fallback: bool,
}

/// A per-segment accumulation result plus diagnostics.
#[derive(Debug, Clone)]
pub struct SpatioTemporalImage {
    pub image: Frame,
    pub mode: StiMode,
    pub diagnostics: Vec<FrameDiagnostics>,
}

/// Wall-clock accounting for the pipeline stages of one or more segments.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub detect: Duration,
    pub describe: Duration,
    pub matching: Duration,
    pub msac: Duration,
    pub warp: Duration,
    pub blend: Duration,
}

impl StageTimings {
    pub fn stage_list(&self) -> [(&'static str, Duration); 6] {
        [
            ("detect", self.detect),
            ("describe", self.describe),
            ("match", self.matching),
            ("msac", self.msac),
            ("warp", self.warp),
            ("blend", self.blend),
        ]
    }

    pub fn total(&self) -> Duration {
        self.stage_list().iter().map(|(_, d)| *d).sum()
    }
}

/// Distills a segment into its spatiotemporal-encoded image.
///
/// Frame 1 is the fixed reference. For frame i the rigid transform onto
/// frame i-1 is estimated (features on the earlier frame are "fixed"),
/// the cumulative transform onto frame 1 is composed, and the average of
/// all warped frames is returned. Estimation failures fall back to the
/// identity transform and are flagged in the diagnostics.
pub fn distill_segment(segment: &Segment, config: &PipelineConfig) -> SpatioTemporalImage {
    let mut timings = StageTimings::default();
    distill_segment_timed(segment, config, &mut timings)
}

pub fn distill_segment_timed(
    segment: &Segment,
    config: &PipelineConfig,
    timings: &mut StageTimings,
) -> SpatioTemporalImage {
    let pattern = build_pattern(&config.pattern);
    let first = &segment.frames[0];
    let mut acc = vec![0.0f64; first.data().len()];
    for (dst, &src) in acc.iter_mut().zip(first.data()) {
        *dst = src;
    }
    let mut diagnostics =
        vec![FrameDiagnostics { frame_index: first.index, matches: 0, inliers: 0, fallback: false }];

    let mut prev_descs = frame_descriptors(first, config, &pattern, timings);
    let mut cumulative = RigidTransform::identity();

    for (offset, frame) in segment.frames.iter().enumerate().skip(1) {
        let descs = frame_descriptors(frame, config, &pattern, timings);

        let t0 = Instant::now();
        let matches = match_descriptors(&prev_descs, &descs, config.match_max_distance);
        timings.matching += t0.elapsed();

        let pairs: Vec<Correspondence> = matches
            .iter()
            .map(|m| {
                let f = prev_descs[m.index_fixed].keypoint;
                let v = descs[m.index_moving].keypoint;
                ((f.x, f.y), (v.x, v.y))
            })
            .collect();

        let t0 = Instant::now();
        let msac = MsacParams {
            seed: derive_seed(config.seed, (segment.segment_index as u64) << 32 | offset as u64),
            ..config.msac
        };
        let result = estimate_msac(&pairs, &msac);
        timings.msac += t0.elapsed();

        cumulative = cumulative.compose(&result.transform);
        diagnostics.push(FrameDiagnostics {
            frame_index: frame.index,
            matches: matches.len(),
            inliers: result.inlier_mask.iter().filter(|&&m| m).count(),
            fallback: result.fallback,
        });

        let t0 = Instant::now();
        let warped = warp_rigid(frame, &cumulative);
        timings.warp += t0.elapsed();
        for (dst, &src) in acc.iter_mut().zip(warped.data()) {
            *dst += src;
        }
        prev_descs = descs;
    }

    let n = segment.len() as f64;
    let data = acc.into_iter().map(|v| clamp_sample(v / n)).collect();
    let image =
        frame_from_parts(first.width(), first.height(), first.channels(), data, first.index);
    SpatioTemporalImage { image, mode: StiMode::Accumulated, diagnostics }
}

fn frame_descriptors(
    frame: &Frame,
    config: &PipelineConfig,
    pattern: &RetinalPattern,
    timings: &mut StageTimings,
) -> Vec<crate::features::BinaryDescriptor> {
    let gray = to_grayscale(frame);
    let t0 = Instant::now();
    let keypoints = detect_fast(&gray, &config.detector).unwrap_or_default();
    timings.detect += t0.elapsed();
    let t0 = Instant::now();
    let descs = describe(&gray, &keypoints, pattern);
    timings.describe += t0.elapsed();
    descs
}

/// Naive average of the segment (no warping): the baseline that keeps
/// camera-motion blur.
pub fn average_segment(segment: &Segment) -> SpatioTemporalImage {
    let first = &segment.frames[0];
    let mut acc = vec![0.0f64; first.data().len()];
    for frame in &segment.frames {
        for (dst, &src) in acc.iter_mut().zip(frame.data()) {
            *dst += src;
        }
    }
    let n = segment.len() as f64;
    let data = acc.into_iter().map(|v| clamp_sample(v / n)).collect();
    let image =
        frame_from_parts(first.width(), first.height(), first.channels(), data, first.index);
    let diagnostics = segment
        .frames
        .iter()
        .map(|f| FrameDiagnostics { frame_index: f.index, matches: 0, inliers: 0, fallback: false })
        .collect();
    SpatioTemporalImage { image, mode: StiMode::Averaged, diagnostics }
}

/// Identifies which training subset an image belongs to. `Synt(k)` labels
/// follow ascending alpha order, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubsetLabel {
    Original,
    Synt(usize),
}

impl fmt::Display for SubsetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetLabel::Original => write!(f, "original"),
            SubsetLabel::Synt(k) => write!(f, "synt{k}"),
        }
    }
}

impl std::str::FromStr for SubsetLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "original" {
            return Ok(SubsetLabel::Original);
        }
        if let Some(k) = s.strip_prefix("synt").and_then(|k| k.parse().ok()) {
            return Ok(SubsetLabel::Synt(k));
        }
        Err(format!("unknown subset label `{s}`"))
    }
}

/// An alpha-composited segment image.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image: Frame,
    pub alpha: f64,
    pub segment_index: usize,
    pub video_id: String,
    pub subset: SubsetLabel,
}

/// All distillation outputs for one video: the spatiotemporal set plus one
/// synthetic image per (segment, alpha).
#[derive(Debug, Clone)]
pub struct DistilledVideo {
    pub video_id: String,
    pub spatiotemporal: Vec<SpatioTemporalImage>,
    pub synthetic: Vec<SyntheticImage>,
}

impl DistilledVideo {
    /// Images of one subset in segment order.
    pub fn subset_images(&self, subset: SubsetLabel) -> Vec<&Frame> {
        match subset {
            SubsetLabel::Original => self.spatiotemporal.iter().map(|s| &s.image).collect(),
            SubsetLabel::Synt(_) => self
                .synthetic
                .iter()
                .filter(|s| s.subset == subset)
                .map(|s| &s.image)
                .collect(),
        }
    }

    pub fn subsets(&self) -> Vec<SubsetLabel> {
        let mut labels = vec![SubsetLabel::Original];
        let mut synt: Vec<SubsetLabel> =
            self.synthetic.iter().map(|s| s.subset).collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
        labels.append(&mut synt);
        labels
    }
}

/// Distills every segment once, then blends each spatiotemporal image with
/// its segment's first (static) frame at every alpha. By default alpha
/// weights the spatiotemporal image; `role_swap` flips the roles.
pub fn generate_synthetic_sets(
    frames: Vec<Frame>,
    video_id: &str,
    config: &PipelineConfig,
) -> Result<DistilledVideo, DistillError> {
    let mut timings = StageTimings::default();
    generate_synthetic_sets_timed(frames, video_id, config, &mut timings)
}

pub fn generate_synthetic_sets_timed(
    frames: Vec<Frame>,
    video_id: &str,
    config: &PipelineConfig,
    timings: &mut StageTimings,
) -> Result<DistilledVideo, DistillError> {
    let segments = segment_video(frames, video_id, config.segment_len)?;
    let mut alphas = config.alphas.clone();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut spatiotemporal = Vec::with_capacity(segments.len());
    let mut synthetic = Vec::with_capacity(segments.len() * alphas.len());
    for segment in &segments {
        let sti = distill_segment_timed(segment, config, timings);
        let still = &segment.frames[0];
        for (k, &alpha) in alphas.iter().enumerate() {
            let t0 = Instant::now();
            let image = if config.role_swap {
                alpha_blend(still, &sti.image, alpha)?
            } else {
                alpha_blend(&sti.image, still, alpha)?
            };
            timings.blend += t0.elapsed();
            synthetic.push(SyntheticImage {
                image,
                alpha,
                segment_index: segment.segment_index,
                video_id: video_id.to_string(),
                subset: SubsetLabel::Synt(k + 1),
            });
        }
        spatiotemporal.push(sti);
    }
    Ok(DistilledVideo { video_id: video_id.to_string(), spatiotemporal, synthetic })
}
