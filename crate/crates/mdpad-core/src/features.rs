//! Sparse interest points and binary descriptors: FAST segment-test
//! detection, a retina-style 512-bit descriptor built from box-mean
//! comparisons, and Hamming matching with mutual cross-check.

use crate::imaging::{box_mean, integral, GrayFrame, IntegralImage};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {0}x{1} too small for the detection circle (needs 7x7)")]
    ImageTooSmall(u32, u32),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: std::path::PathBuf, message: String },
}

/// Number of bits in every descriptor.
pub const DESCRIPTOR_BITS: usize = 512;
const WORDS: usize = DESCRIPTOR_BITS / 64;

/// 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Corner strength; see [`detect_fast`].
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FastConfig {
    /// Intensity contrast on the 0-255 scale.
    pub threshold: f64,
    /// Required contiguous arc length, 9..=12.
    pub n_contiguous: usize,
    pub nonmax: bool,
    /// Keep at most this many strongest detections.
    pub max_keypoints: usize,
}

impl Default for FastConfig {
    fn default() -> Self {
        Self { threshold: 20.0, n_contiguous: 9, nonmax: true, max_keypoints: 2000 }
    }
}

/// Segment-test corner score at (x, y), or None if not a corner.
///
/// A pixel is a corner iff some arc of `n` contiguous circle pixels is
/// entirely brighter than `p + t` or entirely darker than `p - t`. The
/// score is the largest, over qualifying arcs, of the arc sum of
/// `|circle - p| - t`.
fn segment_test(gray: &GrayFrame, x: u32, y: u32, t: f64, n: usize) -> Option<f64> {
    let p = gray.get(x, y);
    let mut diff = [0.0f64; 16];
    for (i, (dx, dy)) in CIRCLE.iter().enumerate() {
        let cx = (x as i32 + dx) as u32;
        let cy = (y as i32 + dy) as u32;
        diff[i] = gray.get(cx, cy) - p;
    }
    let mut best: Option<f64> = None;
    for polarity in [1.0f64, -1.0] {
        let qualifies = |i: usize| polarity * diff[i] > t;
        if (0..16).all(qualifies) {
            let sum: f64 = (0..16).map(|i| polarity * diff[i] - t).sum();
            best = Some(best.map_or(sum, |b: f64| b.max(sum)));
            continue;
        }
        for start in 0..16 {
            // Maximal runs only: start where the previous pixel fails.
            if !qualifies(start) || qualifies((start + 15) % 16) {
                continue;
            }
            let mut len = 0;
            let mut sum = 0.0;
            while len < 16 && qualifies((start + len) % 16) {
                sum += polarity * diff[(start + len) % 16] - t;
                len += 1;
            }
            if len >= n {
                best = Some(best.map_or(sum, |b: f64| b.max(sum)));
            }
        }
    }
    best
}

/// FAST corner detection with optional 3x3 non-maximum suppression.
///
/// Detections are capped at `max_keypoints` strongest; ties break by
/// scan order so output is deterministic.
pub fn detect_fast(gray: &GrayFrame, config: &FastConfig) -> Result<Vec<Keypoint>, FeatureError> {
    if gray.width() < 7 || gray.height() < 7 {
        return Err(FeatureError::ImageTooSmall(gray.width(), gray.height()));
    }
    if !(config.threshold > 0.0 && config.threshold < 255.0) {
        return Err(FeatureError::InvalidConfig(format!("threshold {}", config.threshold)));
    }
    if !(9..=12).contains(&config.n_contiguous) {
        return Err(FeatureError::InvalidConfig(format!(
            "n_contiguous {} outside 9..=12",
            config.n_contiguous
        )));
    }

    let (w, h) = (gray.width(), gray.height());
    let mut scores = vec![f64::NEG_INFINITY; w as usize * h as usize];
    let at = |x: u32, y: u32| y as usize * w as usize + x as usize;
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if let Some(s) = segment_test(gray, x, y, config.threshold, config.n_contiguous) {
                scores[at(x, y)] = s;
            }
        }
    }

    let mut kps = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let s = scores[at(x, y)];
            if s == f64::NEG_INFINITY {
                continue;
            }
            if config.nonmax {
                // Survive iff strictly stronger than every neighbor, with
                // equal scores resolved in favor of the earlier pixel in
                // scan order. Guarantees no two survivors are adjacent.
                let mut suppressed = false;
                'nb: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let ns = scores[at(nx as u32, ny as u32)];
                        let earlier = (ny, nx) < (y as i64, x as i64);
                        if ns > s || (ns == s && earlier) {
                            suppressed = true;
                            break 'nb;
                        }
                    }
                }
                if suppressed {
                    continue;
                }
            }
            kps.push(Keypoint { x: x as f64, y: y as f64, score: s });
        }
    }

    if kps.len() > config.max_keypoints {
        kps.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then((a.y, a.x).partial_cmp(&(b.y, b.x)).unwrap())
        });
        kps.truncate(config.max_keypoints);
        kps.sort_by(|a, b| (a.y, a.x).partial_cmp(&(b.y, b.x)).unwrap());
    }
    Ok(kps)
}

/// One receptive field: offset from the keypoint plus a box radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptiveField {
    pub dx: f64,
    pub dy: f64,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct PatternConfig {
    pub center_radius: f64,
    /// Ring eccentricities, innermost first.
    pub ring_radii: [f64; 7],
    /// Field box radii per ring, innermost first.
    pub field_radii: [f64; 7],
    pub fields_per_ring: usize,
    pub pair_count: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            center_radius: 1.5,
            ring_radii: [4.0, 6.0, 8.0, 11.0, 14.0, 18.0, 22.0],
            field_radii: [1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0],
            fields_per_ring: 6,
            pair_count: DESCRIPTOR_BITS,
        }
    }
}

/// Retina-style sampling pattern: one center field plus 7 rings of 6
/// fields, and the comparison pairs ordered coarse-to-fine.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinalPattern {
    fields: Vec<ReceptiveField>,
    pairs: Vec<(u16, u16)>,
}

impl RetinalPattern {
    pub fn fields(&self) -> &[ReceptiveField] {
        &self.fields
    }

    pub fn pairs(&self) -> &[(u16, u16)] {
        &self.pairs
    }

    /// Largest axis-aligned reach of any field, for border checks.
    pub fn max_reach(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| f.dx.abs().max(f.dy.abs()) + f.radius)
            .fold(0.0, f64::max)
    }
}

/// Builds the sampling pattern deterministically: fields go center first,
/// then rings innermost to outermost, 6 per ring at 60 degree steps with a
/// 30 degree offset on alternating rings. Pairs are all field pairs sorted
/// by descending radius sum (coarse first), ties by index, truncated to
/// `pair_count`.
pub fn build_pattern(config: &PatternConfig) -> RetinalPattern {
    let mut fields =
        vec![ReceptiveField { dx: 0.0, dy: 0.0, radius: config.center_radius }];
    for (ring, (&ecc, &radius)) in
        config.ring_radii.iter().zip(&config.field_radii).enumerate()
    {
        let offset = if ring % 2 == 1 { 30f64.to_radians() } else { 0.0 };
        for k in 0..config.fields_per_ring {
            let angle = offset + k as f64 * std::f64::consts::TAU / config.fields_per_ring as f64;
            fields.push(ReceptiveField {
                dx: ecc * angle.cos(),
                dy: ecc * angle.sin(),
                radius,
            });
        }
    }

    let mut pairs = Vec::with_capacity(fields.len() * (fields.len() - 1) / 2);
    for a in 0..fields.len() as u16 {
        for b in a + 1..fields.len() as u16 {
            pairs.push((a, b));
        }
    }
    pairs.sort_by(|&(a1, b1), &(a2, b2)| {
        let s1 = fields[a1 as usize].radius + fields[b1 as usize].radius;
        let s2 = fields[a2 as usize].radius + fields[b2 as usize].radius;
        s2.partial_cmp(&s1).unwrap().then((a1, b1).cmp(&(a2, b2)))
    });
    pairs.truncate(config.pair_count);
    RetinalPattern { fields, pairs }
}

/// A 512-bit keypoint signature compared by Hamming distance.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDescriptor {
    bits: [u64; WORDS],
    pub keypoint: Keypoint,
}

impl BinaryDescriptor {
    pub fn from_bits(bits: [u64; WORDS], keypoint: Keypoint) -> Self {
        Self { bits, keypoint }
    }

    pub fn bit(&self, j: usize) -> bool {
        debug_assert!(j < DESCRIPTOR_BITS);
        self.bits[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn words(&self) -> &[u64; WORDS] {
        &self.bits
    }

    pub fn hamming(&self, other: &BinaryDescriptor) -> u32 {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn complement(&self) -> BinaryDescriptor {
        let mut bits = self.bits;
        for w in &mut bits {
            *w = !*w;
        }
        Self { bits, keypoint: self.keypoint }
    }
}

fn field_in_image(ii: &IntegralImage, cx: f64, cy: f64, r: f64) -> bool {
    (cx - r).ceil() >= 0.0
        && (cy - r).ceil() >= 0.0
        && (cx + r).floor() <= ii.width() as f64 - 1.0
        && (cy + r).floor() <= ii.height() as f64 - 1.0
}

/// Describes keypoints with the retinal pattern: bit `j` is 1 iff the box
/// mean of pair `j`'s first field strictly exceeds the second's (ties give
/// 0). Keypoints whose outermost field leaves the image are dropped.
pub fn describe(
    gray: &GrayFrame,
    keypoints: &[Keypoint],
    pattern: &RetinalPattern,
) -> Vec<BinaryDescriptor> {
    let ii = integral(gray);
    let mut out = Vec::with_capacity(keypoints.len());
    let mut means = vec![0.0f64; pattern.fields.len()];
    'kp: for kp in keypoints {
        for f in &pattern.fields {
            if !field_in_image(&ii, kp.x + f.dx, kp.y + f.dy, f.radius) {
                continue 'kp;
            }
        }
        for (m, f) in means.iter_mut().zip(&pattern.fields) {
            // In-image was just checked, so box_mean cannot fail.
            *m = box_mean(&ii, (kp.x + f.dx, kp.y + f.dy), f.radius).expect("field in image");
        }
        let mut bits = [0u64; WORDS];
        for (j, &(a, b)) in pattern.pairs.iter().enumerate() {
            if means[a as usize] > means[b as usize] {
                bits[j / 64] |= 1 << (j % 64);
            }
        }
        out.push(BinaryDescriptor { bits, keypoint: *kp });
    }
    out
}

/// A correspondence between descriptor indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub index_fixed: usize,
    pub index_moving: usize,
    /// Hamming distance, 0..=512.
    pub distance: u32,
}

/// Mutual nearest-neighbor matching under Hamming distance.
///
/// Ties break toward the lowest candidate index; pairs farther than
/// `max_distance` are discarded. The result is a partial injection: no
/// index appears twice on either side.
pub fn match_descriptors(
    fixed: &[BinaryDescriptor],
    moving: &[BinaryDescriptor],
    max_distance: u32,
) -> Vec<Match> {
    if fixed.is_empty() || moving.is_empty() {
        return Vec::new();
    }
    let nearest = |query: &BinaryDescriptor, pool: &[BinaryDescriptor]| {
        let mut best = (0usize, u32::MAX);
        for (j, cand) in pool.iter().enumerate() {
            let d = query.hamming(cand);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    };
    let forward: Vec<(usize, u32)> = fixed.iter().map(|f| nearest(f, moving)).collect();
    let backward: Vec<(usize, u32)> = moving.iter().map(|m| nearest(m, fixed)).collect();
    let mut matches = Vec::new();
    for (i, &(j, d)) in forward.iter().enumerate() {
        if d <= max_distance && backward[j].0 == i {
            matches.push(Match { index_fixed: i, index_moving: j, distance: d });
        }
    }
    matches
}

const DUMP_MAGIC: &[u8; 4] = b"MDBD";

/// Writes descriptors as magic `MDBD`, little-endian u32 count, then per
/// record two f32 coordinates, an f32 score and 64 bytes of bits
/// (LSB-first within each byte, bit `j` in byte `j / 8`).
pub fn write_descriptors(path: &Path, descriptors: &[BinaryDescriptor]) -> Result<(), FeatureError> {
    let mut buf = Vec::with_capacity(8 + descriptors.len() * 76);
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&(descriptors.len() as u32).to_le_bytes());
    for d in descriptors {
        buf.extend_from_slice(&(d.keypoint.x as f32).to_le_bytes());
        buf.extend_from_slice(&(d.keypoint.y as f32).to_le_bytes());
        buf.extend_from_slice(&(d.keypoint.score as f32).to_le_bytes());
        for w in &d.bits {
            buf.extend_from_slice(&w.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| FeatureError::Io { path: path.into(), source: e })
}

pub fn read_descriptors(path: &Path) -> Result<Vec<BinaryDescriptor>, FeatureError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| FeatureError::Io { path: path.into(), source: e })?;
    let fail = |m: &str| FeatureError::Format { path: path.into(), message: m.into() };
    if bytes.len() < 8 || &bytes[..4] != DUMP_MAGIC {
        return Err(fail("missing MDBD magic"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let record = 12 + 64;
    if bytes.len() != 8 + count * record {
        return Err(fail("truncated descriptor records"));
    }
    let mut out = Vec::with_capacity(count);
    for r in 0..count {
        let base = 8 + r * record;
        let f32_at = |o: usize| {
            f32::from_le_bytes(bytes[base + o..base + o + 4].try_into().unwrap()) as f64
        };
        let mut bits = [0u64; WORDS];
        for (w, chunk) in bits.iter_mut().zip(bytes[base + 12..base + record].chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().unwrap());
        }
        out.push(BinaryDescriptor {
            bits,
            keypoint: Keypoint { x: f32_at(0), y: f32_at(4), score: f32_at(8) },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent segment-test oracle: every start offset and arc length
    /// is checked literally against the corner definition.
    fn oracle_is_corner(gray: &GrayFrame, x: u32, y: u32, t: f64, n: usize) -> bool {
        let p = gray.get(x, y);
        for start in 0..16 {
            for (bright, dark) in [(true, false), (false, true)] {
                let ok = (0..n).all(|k| {
                    let (dx, dy) = CIRCLE[(start + k) % 16];
                    let c = gray.get((x as i32 + dx) as u32, (y as i32 + dy) as u32);
                    (bright && c > p + t) || (dark && c < p - t)
                });
                if ok {
                    return true;
                }
            }
        }
        false
    }

    fn oracle_score(gray: &GrayFrame, x: u32, y: u32, t: f64, n: usize) -> Option<f64> {
        let p = gray.get(x, y);
        let mut best: Option<f64> = None;
        for start in 0..16 {
            for len in n..=16 {
                for sign in [1.0, -1.0] {
                    let mut sum = 0.0;
                    let mut ok = true;
                    for k in 0..len {
                        let (dx, dy) = CIRCLE[(start + k) % 16];
                        let c = gray.get((x as i32 + dx) as u32, (y as i32 + dy) as u32);
                        if sign * (c - p) > t {
                            sum += sign * (c - p) - t;
                        } else {
                            ok = false;
                            break;
                        }
                    }
                    if ok {
                        best = Some(best.map_or(sum, |b: f64| b.max(sum)));
                    }
                }
            }
        }
        best
    }

    fn random_gray(seed: u64, w: u32, h: u32) -> GrayFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayFrame::from_fn(w, h, |_, _| rng.random_range(0..=255) as f64)
    }

    #[test]
    fn constant_image_has_no_corners() {
        let gray = GrayFrame::from_fn(16, 16, |_, _| 128.0);
        let kps = detect_fast(&gray, &FastConfig::default()).unwrap();
        assert!(kps.is_empty());
    }

    #[test]
    fn white_square_corners_detected() {
        let gray = GrayFrame::from_fn(32, 32, |x, y| {
            if (11..21).contains(&x) && (11..21).contains(&y) {
                255.0
            } else {
                0.0
            }
        });
        let kps = detect_fast(&gray, &FastConfig { threshold: 20.0, ..Default::default() }).unwrap();
        assert_eq!(kps.len(), 4, "{kps:?}");
        for corner in [(11.0, 11.0), (20.0, 11.0), (11.0, 20.0), (20.0, 20.0)] {
            assert!(
                kps.iter().any(|k| (k.x - corner.0).abs() <= 1.0 && (k.y - corner.1).abs() <= 1.0),
                "no keypoint near {corner:?}: {kps:?}"
            );
        }
    }

    #[test]
    fn detection_is_shift_invariant() {
        let base = GrayFrame::from_fn(32, 32, |x, y| {
            if (11..21).contains(&x) && (11..21).contains(&y) {
                200.0
            } else {
                30.0
            }
        });
        let shifted = GrayFrame::from_fn(32, 32, |x, y| base.get(x, y) + 10.0);
        let cfg = FastConfig::default();
        let a = detect_fast(&base, &cfg).unwrap();
        let b = detect_fast(&shifted, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let cfg = FastConfig { nonmax: false, max_keypoints: usize::MAX, ..Default::default() };
        for seed in 0..5 {
            let gray = random_gray(seed, 64, 64);
            let kps = detect_fast(&gray, &cfg).unwrap();
            let mut found = vec![false; 64 * 64];
            for k in &kps {
                found[k.y as usize * 64 + k.x as usize] = true;
                let oracle = oracle_score(&gray, k.x as u32, k.y as u32, cfg.threshold, 9)
                    .expect("oracle agrees it is a corner");
                assert!((oracle - k.score).abs() < 1e-9);
            }
            for y in 3..61u32 {
                for x in 3..61u32 {
                    assert_eq!(
                        oracle_is_corner(&gray, x, y, cfg.threshold, 9),
                        found[y as usize * 64 + x as usize],
                        "disagreement at ({x},{y}) seed {seed}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_small_images_and_bad_config() {
        let gray = GrayFrame::from_fn(6, 9, |_, _| 0.0);
        assert!(matches!(
            detect_fast(&gray, &FastConfig::default()),
            Err(FeatureError::ImageTooSmall(6, 9))
        ));
        let gray = GrayFrame::from_fn(16, 16, |_, _| 0.0);
        assert!(detect_fast(&gray, &FastConfig { threshold: 0.0, ..Default::default() }).is_err());
        assert!(
            detect_fast(&gray, &FastConfig { n_contiguous: 8, ..Default::default() }).is_err()
        );
    }

    #[test]
    fn nonmax_enforces_chebyshev_spacing() {
        for seed in 0..4 {
            let gray = random_gray(100 + seed, 48, 48);
            let kps = detect_fast(&gray, &FastConfig::default()).unwrap();
            for (i, a) in kps.iter().enumerate() {
                for b in &kps[i + 1..] {
                    let cheb = (a.x - b.x).abs().max((a.y - b.y).abs());
                    assert!(cheb > 1.0, "{a:?} and {b:?} too close");
                }
            }
        }
    }

    #[test]
    fn pattern_counts_and_determinism() {
        let p = build_pattern(&PatternConfig::default());
        assert_eq!(p.fields().len(), 43);
        assert_eq!(p.pairs().len(), 512);
        assert_eq!(p, build_pattern(&PatternConfig::default()));
        // Distinct pairs.
        let mut seen = std::collections::HashSet::new();
        for &pair in p.pairs() {
            assert!(seen.insert(pair));
        }
        // Coarse-to-fine ordering of comparison pairs.
        let sum = |(a, b): (u16, u16)| {
            p.fields()[a as usize].radius + p.fields()[b as usize].radius
        };
        for w in p.pairs().windows(2) {
            assert!(sum(w[0]) >= sum(w[1]));
        }
    }

    #[test]
    fn ring_radii_strictly_increase() {
        let cfg = PatternConfig::default();
        for w in cfg.ring_radii.windows(2) {
            assert!(w[0] < w[1]);
        }
        for w in cfg.field_radii.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn describe_constant_image_all_zero_bits() {
        let gray = GrayFrame::from_fn(64, 64, |_, _| 99.0);
        let pattern = build_pattern(&PatternConfig::default());
        let kps = [Keypoint { x: 32.0, y: 32.0, score: 1.0 }];
        let descs = describe(&gray, &kps, &pattern);
        assert_eq!(descs.len(), 1);
        assert!(descs[0].words().iter().all(|&w| w == 0));
    }

    #[test]
    fn describe_offset_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = GrayFrame::from_fn(80, 80, |_, _| rng.random_range(0.0..200.0));
        let lifted = GrayFrame::from_fn(80, 80, |x, y| base.get(x, y) + 30.0);
        let pattern = build_pattern(&PatternConfig::default());
        let kps = [
            Keypoint { x: 40.0, y: 40.0, score: 1.0 },
            Keypoint { x: 30.0, y: 45.0, score: 1.0 },
        ];
        assert_eq!(describe(&base, &kps, &pattern), {
            let mut d = describe(&lifted, &kps, &pattern);
            // Keypoints embedded in descriptors compare equal; scores are
            // caller-provided here.
            for desc in &mut d {
                desc.keypoint.score = 1.0;
            }
            d
        });
    }

    #[test]
    fn describe_drops_border_keypoints() {
        let gray = GrayFrame::from_fn(64, 64, |x, _| (x * 4 % 256) as f64);
        let pattern = build_pattern(&PatternConfig::default());
        let kps = [
            Keypoint { x: 5.0, y: 32.0, score: 1.0 },  // outermost field exits
            Keypoint { x: 32.0, y: 32.0, score: 1.0 }, // fits
        ];
        let descs = describe(&gray, &kps, &pattern);
        assert_eq!(descs.len(), 1);
        assert_eq!(descs[0].keypoint.x, 32.0);
    }

    #[test]
    fn describe_matches_direct_per_pair_evaluation() {
        let gray = GrayFrame::from_fn(96, 96, |x, y| ((x * 2 + (y % 5)) % 256) as f64);
        let pattern = build_pattern(&PatternConfig::default());
        let kp = Keypoint { x: 48.0, y: 47.0, score: 1.0 };
        let descs = describe(&gray, &[kp], &pattern);
        assert_eq!(descs.len(), 1);
        // Direct evaluation: brute-force box means per field, no integral
        // image involved.
        let brute_mean = |cx: f64, cy: f64, r: f64| {
            let x0 = (cx - r).ceil().max(0.0) as u32;
            let x1 = (cx + r).floor().min(95.0) as u32;
            let y0 = (cy - r).ceil().max(0.0) as u32;
            let y1 = (cy + r).floor().min(95.0) as u32;
            let mut sum = 0.0;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    sum += gray.get(x, y);
                }
            }
            sum / ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64
        };
        for (j, &(a, b)) in pattern.pairs().iter().enumerate() {
            let fa = pattern.fields()[a as usize];
            let fb = pattern.fields()[b as usize];
            let expected = brute_mean(kp.x + fa.dx, kp.y + fa.dy, fa.radius)
                > brute_mean(kp.x + fb.dx, kp.y + fb.dy, fb.radius);
            assert_eq!(descs[0].bit(j), expected, "bit {j}");
        }
    }

    #[test]
    fn identical_lists_match_identity() {
        let gray = random_gray(9, 96, 96);
        let pattern = build_pattern(&PatternConfig::default());
        let kps = detect_fast(&gray, &FastConfig::default()).unwrap();
        let descs = describe(&gray, &kps, &pattern);
        assert!(descs.len() > 3);
        let matches = match_descriptors(&descs, &descs, 128);
        assert_eq!(matches.len(), descs.len());
        for m in matches {
            assert_eq!(m.index_fixed, m.index_moving);
            assert_eq!(m.distance, 0);
        }
    }

    #[test]
    fn complement_never_matches() {
        let kp = Keypoint { x: 0.0, y: 0.0, score: 0.0 };
        let d = BinaryDescriptor::from_bits([0xDEAD_BEEF_0123_4567; 8], kp);
        let c = d.complement();
        assert_eq!(d.hamming(&c), 512);
        assert!(match_descriptors(&[d], &[c], 128).is_empty());
    }

    #[test]
    fn seven_flipped_bits_distance_seven() {
        let kp = Keypoint { x: 0.0, y: 0.0, score: 0.0 };
        let original = BinaryDescriptor::from_bits([0u64; 8], kp);
        let mut bits = [0u64; 8];
        for j in [3usize, 64, 130, 200, 311, 415, 511] {
            bits[j / 64] |= 1 << (j % 64);
        }
        let flipped = BinaryDescriptor::from_bits(bits, kp);
        assert_eq!(original.hamming(&flipped), 7);
        let m = match_descriptors(&[original], &[flipped], 128);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].distance, 7);
    }

    #[test]
    fn matcher_agrees_with_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let kp = Keypoint { x: 0.0, y: 0.0, score: 0.0 };
        let mut random_desc = || {
            let mut bits = [0u64; 8];
            for w in &mut bits {
                *w = rng.random();
            }
            BinaryDescriptor::from_bits(bits, kp)
        };
        let fixed: Vec<_> = (0..30).map(|_| random_desc()).collect();
        let moving: Vec<_> = (0..25).map(|_| random_desc()).collect();
        let got = match_descriptors(&fixed, &moving, 512);
        // Exhaustive mutual-nearest check.
        let mut expected = Vec::new();
        for i in 0..fixed.len() {
            let (mut bj, mut bd) = (0, u32::MAX);
            for (j, m) in moving.iter().enumerate() {
                let d = fixed[i].hamming(m);
                if d < bd {
                    (bj, bd) = (j, d);
                }
            }
            let mutual = (0..fixed.len())
                .map(|i2| moving[bj].hamming(&fixed[i2]))
                .enumerate()
                .min_by_key(|&(i2, d)| (d, i2))
                .unwrap()
                .0
                == i;
            if mutual {
                expected.push(Match { index_fixed: i, index_moving: bj, distance: bd });
            }
        }
        assert_eq!(got, expected);
        // Partial injection.
        let mut seen_f = std::collections::HashSet::new();
        let mut seen_m = std::collections::HashSet::new();
        for m in &got {
            assert!(seen_f.insert(m.index_fixed));
            assert!(seen_m.insert(m.index_moving));
        }
    }

    #[test]
    fn descriptor_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.mdbd");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let descs: Vec<_> = (0..17)
            .map(|i| {
                let mut bits = [0u64; 8];
                for w in &mut bits {
                    *w = rng.random();
                }
                BinaryDescriptor::from_bits(
                    bits,
                    Keypoint { x: i as f64, y: (i * 2) as f64, score: 0.5 },
                )
            })
            .collect();
        write_descriptors(&path, &descs).unwrap();
        let back = read_descriptors(&path).unwrap();
        assert_eq!(back, descs);
        let header = std::fs::read(&path).unwrap();
        assert_eq!(&header[..4], b"MDBD");
        assert!(read_descriptors(&dir.path().join("missing.mdbd")).is_err());
    }

    proptest! {
        #[test]
        fn hamming_metric_properties(a in proptest::array::uniform8(any::<u64>()),
                                     b in proptest::array::uniform8(any::<u64>()),
                                     c in proptest::array::uniform8(any::<u64>())) {
            let kp = Keypoint { x: 0.0, y: 0.0, score: 0.0 };
            let da = BinaryDescriptor::from_bits(a, kp);
            let db = BinaryDescriptor::from_bits(b, kp);
            let dc = BinaryDescriptor::from_bits(c, kp);
            prop_assert_eq!(da.hamming(&da), 0);
            prop_assert_eq!(da.hamming(&db), db.hamming(&da));
            prop_assert!(da.hamming(&db) <= 512);
            prop_assert!(da.hamming(&dc) <= da.hamming(&db) + db.hamming(&dc));
        }
    }
}
