//! Built-in synthetic corpus generator: textured backgrounds under
//! scripted global rigid motion, with the two classes distinguished by an
//! injected temporal signature. Live videos carry a local patch whose
//! position oscillates periodically against the background; attack videos
//! carry the same patch held still.

use crate::config::RunConfig;
use crate::manifest::{Label, Manifest, Split, VideoEntry};
use anyhow::{bail, Context, Result};
use mdpad_core::derive_seed;
use mdpad_core::imaging::{io as frame_io, Frame};
use std::path::{Path, PathBuf};

/// Deterministic infinite texture: compact smooth bumps on a jittered
/// lattice over a low-frequency background. Evaluable at any real
/// coordinate, so scripted motion renders without border artifacts.
fn texture(seed: u64, x: f64, y: f64) -> f64 {
    let cell = 11.0;
    let mut v = 118.0 + 20.0 * ((0.067 * x).sin() + (0.049 * y).cos());
    let (cx0, cy0) = ((x / cell).floor() as i64, (y / cell).floor() as i64);
    for cy in cy0 - 1..=cy0 + 1 {
        for cx in cx0 - 1..=cx0 + 1 {
            let h = derive_seed(seed, ((cx as u64) << 32) ^ (cy as u64 & 0xFFFF_FFFF));
            let px = cx as f64 * cell + (h & 0xF) as f64 / 15.0 * cell;
            let py = cy as f64 * cell + ((h >> 4) & 0xF) as f64 / 15.0 * cell;
            let amp = if (h >> 8) & 1 == 0 { 90.0 } else { -90.0 };
            let r2 = (x - px).powi(2) + (y - py).powi(2);
            let support = 16.0;
            if r2 < support {
                let t = 1.0 - r2 / support;
                v += amp * t * t;
            }
        }
    }
    v
}

/// Compact bright patch with a smooth falloff, the "subject" of a video.
fn patch(dx: f64, dy: f64, radius: f64) -> f64 {
    let r2 = (dx * dx + dy * dy) / (radius * radius);
    if r2 >= 1.0 {
        0.0
    } else {
        let t = 1.0 - r2;
        70.0 * t * t
    }
}

struct VideoScript {
    texture_seed: u64,
    /// Global translation per frame.
    drift: (f64, f64),
    /// Global rotation per frame, radians.
    rotation: f64,
    /// Patch center in texture coordinates.
    patch_center: (f64, f64),
    patch_radius: f64,
    /// Peak local displacement of the live patch.
    motion_amplitude: f64,
    /// Frames per oscillation period.
    period: f64,
    live: bool,
}

impl VideoScript {
    fn new(cfg: &RunConfig, index: usize, live: bool) -> Self {
        let s = derive_seed(cfg.seed, 0xC0 | (index as u64) << 8);
        let angle = (s % 360) as f64 / 360.0 * std::f64::consts::TAU;
        let mid = cfg.corpus_size as f64 / 2.0;
        let jitter = |k: u64, span: f64| {
            (derive_seed(s, k) % 1000) as f64 / 1000.0 * span - span / 2.0
        };
        VideoScript {
            texture_seed: derive_seed(s, 1),
            drift: (cfg.corpus_drift * angle.cos(), cfg.corpus_drift * angle.sin()),
            rotation: cfg.corpus_rotation_deg.to_radians(),
            patch_center: (mid + jitter(2, mid * 0.5), mid + jitter(3, mid * 0.5)),
            patch_radius: cfg.corpus_size as f64 / 6.0,
            motion_amplitude: cfg.corpus_motion_amplitude,
            period: 2.0 * cfg.segment_len as f64,
            live,
        }
    }

    /// Renders frame `i`: the texture sampled under the accumulated
    /// global motion, plus the (possibly oscillating) patch.
    fn render(&self, cfg: &RunConfig, i: usize) -> Frame {
        let t = i as f64;
        let angle = self.rotation * t;
        let (sin, cos) = angle.sin_cos();
        let mid = cfg.corpus_size as f64 / 2.0;
        let (dx, dy) = (self.drift.0 * t, self.drift.1 * t);
        let phase = if self.live {
            self.motion_amplitude * (std::f64::consts::TAU * t / self.period).sin()
        } else {
            0.0
        };
        Frame::from_fn(cfg.corpus_size, cfg.corpus_size, 1, |x, y, _| {
            // Global motion: rotate about the frame center, then drift.
            let (rx, ry) = (x as f64 - mid, y as f64 - mid);
            let tx = mid + cos * rx - sin * ry + dx;
            let ty = mid + sin * rx + cos * ry + dy;
            let base = texture(self.texture_seed, tx, ty);
            // The patch lives in texture coordinates (it moves with the
            // scene); its local oscillation shifts it horizontally.
            let p = patch(
                tx - self.patch_center.0 - phase,
                ty - self.patch_center.1,
                self.patch_radius,
            );
            (base + p).round().clamp(0.0, 255.0)
        })
        .with_index(i)
    }
}

/// Generates the corpus under `dir`: `videos/<id>/frame_%06d.png` plus
/// `manifest.tsv`. Splits cycle train/train/train/val/test per subject so
/// both classes land in every split.
pub fn generate_corpus(dir: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    if cfg.corpus_videos < 10 {
        bail!("corpus.videos = {} is too small (need at least 10)", cfg.corpus_videos);
    }
    if cfg.corpus_frames == 0 {
        bail!("corpus.frames must be positive");
    }
    let videos_dir = dir.join("videos");
    std::fs::create_dir_all(&videos_dir)
        .with_context(|| format!("creating {}", videos_dir.display()))?;

    let mut entries = Vec::with_capacity(cfg.corpus_videos);
    for i in 0..cfg.corpus_videos {
        let live = i % 2 == 0;
        let label = if live { Label::Live } else { Label::Attack };
        let split = match (i / 2) % 5 {
            0 | 1 | 2 => Split::Train,
            3 => Split::Val,
            _ => Split::Test,
        };
        let id = format!("{}{:03}", if live { "live" } else { "attack" }, i);
        let video_dir = videos_dir.join(&id);
        std::fs::create_dir_all(&video_dir)?;

        let script = VideoScript::new(cfg, i, live);
        for f in 0..cfg.corpus_frames {
            let frame = script.render(cfg, f);
            let path = video_dir.join(frame_io::frame_file_name(f, "png"));
            frame_io::write_png(&path, &frame)
                .with_context(|| format!("writing {}", path.display()))?;
        }

        entries.push(VideoEntry {
            path: PathBuf::from("videos").join(&id),
            id,
            label,
            subject: format!("s{:03}", i / 2),
            domain: ["alpha", "beta", "gamma"][(i / 2) % 3].to_string(),
            split,
        });
    }

    let manifest = Manifest { videos: entries };
    let manifest_path = dir.join("manifest.tsv");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> RunConfig {
        RunConfig {
            corpus_videos: 10,
            corpus_frames: 6,
            corpus_size: 48,
            segment_len: 3,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn generates_manifest_and_frames() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let manifest_path = generate_corpus(dir.path(), &cfg).unwrap();
        let manifest = Manifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.videos.len(), 10);
        manifest.validate_paths(dir.path()).unwrap();
        // Both classes in every split.
        for split in [Split::Train, Split::Val, Split::Test] {
            let members = manifest.split(split);
            assert!(
                members.iter().any(|v| v.label == Label::Live)
                    && members.iter().any(|v| v.label == Label::Attack),
                "split {split} missing a class"
            );
        }
        let first = Manifest::resolved_path(&manifest.videos[0], dir.path());
        let frames = frame_io::read_video_dir(&first).unwrap();
        assert_eq!(frames.len(), 6);
        assert_eq!(frames[0].width(), 48);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        generate_corpus(a.path(), &cfg).unwrap();
        generate_corpus(b.path(), &cfg).unwrap();
        let read = |dir: &Path| {
            let mut all = Vec::new();
            let mut paths: Vec<_> = walk_png(dir);
            paths.sort();
            for p in paths {
                all.push((p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()));
            }
            all
        };
        assert_eq!(read(a.path()), read(b.path()));
    }

    fn walk_png(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                out.extend(walk_png(&path));
            } else if path.extension().is_some_and(|e| e == "png") {
                out.push(path);
            }
        }
        out
    }

    #[test]
    fn live_and_attack_differ_temporally() {
        let cfg = RunConfig {
            corpus_size: 64,
            segment_len: 4,
            corpus_drift: 0.0,
            ..tiny_config()
        };
        let live = VideoScript::new(&cfg, 0, true);
        let still = VideoScript::new(&cfg, 0, false);
        // The attack script renders the same frame forever (no drift, no
        // oscillation); the live one moves its patch.
        let s0 = still.render(&cfg, 0);
        let s5 = still.render(&cfg, 5);
        assert_eq!(s0.data(), s5.data());
        let l0 = live.render(&cfg, 0);
        let l2 = live.render(&cfg, 2);
        assert_ne!(l0.data(), l2.data());
    }
}
