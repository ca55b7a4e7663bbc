//! Deterministic block-statistics feature extractor. Stands in for a
//! pretrained CNN backbone: images are resized to 224x224, converted to
//! grayscale and summarized by per-block mean and standard deviation over
//! a 14x14 grid of 16-pixel blocks, every value scaled to [0, 1].

use crate::imaging::{resize_bilinear, to_grayscale, Frame};

const INPUT_SIDE: u32 = 224;
const BLOCK: u32 = 16;
const GRID: u32 = INPUT_SIDE / BLOCK;

/// Output dimensionality: 14 * 14 blocks * (mean, std).
pub const FEATURE_DIM: usize = (GRID * GRID * 2) as usize;

/// Extracts the block-statistics feature vector. Blocks are visited in
/// row-major order; each contributes `[mean, std]` scaled by 1/255.
pub fn extract_features(image: &Frame) -> Vec<f64> {
    let resized;
    let image = if image.width() == INPUT_SIDE && image.height() == INPUT_SIDE {
        image
    } else {
        resized = resize_bilinear(image, INPUT_SIDE, INPUT_SIDE);
        &resized
    };
    let gray = to_grayscale(image);
    let mut out = Vec::with_capacity(FEATURE_DIM);
    let n = (BLOCK * BLOCK) as f64;
    for by in 0..GRID {
        for bx in 0..GRID {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for y in by * BLOCK..(by + 1) * BLOCK {
                for x in bx * BLOCK..(bx + 1) * BLOCK {
                    let v = gray.get(x, y);
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            out.push(mean / 255.0);
            out.push(var.sqrt() / 255.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_means_equal_stds_zero() {
        let f = Frame::filled(224, 224, 1, 120.0);
        let v = extract_features(&f);
        assert_eq!(v.len(), FEATURE_DIM);
        for pair in v.chunks_exact(2) {
            assert!((pair[0] - 120.0 / 255.0).abs() < 1e-12);
            assert_eq!(pair[1], 0.0);
        }
    }

    #[test]
    fn checkerboard_of_block_tiles() {
        let f = Frame::from_fn(224, 224, 1, |x, y, _| {
            if (x / BLOCK + y / BLOCK) % 2 == 0 {
                200.0
            } else {
                40.0
            }
        });
        let v = extract_features(&f);
        for (b, pair) in v.chunks_exact(2).enumerate() {
            let (bx, by) = (b as u32 % GRID, b as u32 / GRID);
            let expected = if (bx + by) % 2 == 0 { 200.0 } else { 40.0 };
            assert!((pair[0] - expected / 255.0).abs() < 1e-12, "block {b}");
            assert_eq!(pair[1], 0.0, "block {b} std");
        }
    }

    #[test]
    fn any_size_input_yields_fixed_dim() {
        for (w, h) in [(100, 80), (224, 224), (640, 480)] {
            let f = Frame::from_fn(w, h, 3, |x, y, c| ((x + y + c as u32) % 255) as f64);
            assert_eq!(extract_features(&f).len(), FEATURE_DIM);
        }
    }

    #[test]
    fn block_stats_match_direct_oracle() {
        let f = Frame::from_fn(224, 224, 1, |x, y, _| ((x * 13 + y * 29) % 251) as f64);
        let v = extract_features(&f);
        // Direct per-block statistics for a few probe blocks.
        for (bx, by) in [(0u32, 0u32), (7, 3), (13, 13)] {
            let mut samples = Vec::new();
            for y in by * BLOCK..(by + 1) * BLOCK {
                for x in bx * BLOCK..(bx + 1) * BLOCK {
                    samples.push(f.get(x, y, 0));
                }
            }
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let var =
                samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / samples.len() as f64;
            let idx = ((by * GRID + bx) * 2) as usize;
            assert!((v[idx] - mean / 255.0).abs() < 1e-9);
            assert!((v[idx + 1] - var.sqrt() / 255.0).abs() < 1e-9);
        }
    }
}
