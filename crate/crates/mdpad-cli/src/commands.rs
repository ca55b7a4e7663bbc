//! Pipeline commands behind the CLI subcommands. Every command is
//! deterministic in its non-timing outputs given (manifest, config,
//! seed); video-level work runs concurrently up to the configured job
//! count, with all writes going to distinct paths.

use crate::config::RunConfig;
use crate::corpus;
use crate::manifest::{Label, Manifest, Split, VideoEntry};
use crate::svg;
use anyhow::{bail, Context, Result};
use mdpad_core::distill::{
    generate_synthetic_sets, segment_video, DistilledVideo, StageTimings, SubsetLabel,
};
use mdpad_core::ensemble::{
    build_meta_dataset, extract_features, make_stacking_plan, predict_meta, read_feature_file,
    read_model, train_final_bases, train_meta, write_feature_file, write_model, write_scores,
    FeatureSequence, MetaDataset, TrainedStack,
};
use mdpad_core::imaging::io as frame_io;
use mdpad_core::metrics::{auc, eer, far, frr, hter, roc, ScoreSet};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

/// Subset labels produced by the configured alphas, original first.
pub fn subset_labels(cfg: &RunConfig) -> Vec<SubsetLabel> {
    let mut labels = vec![SubsetLabel::Original];
    labels.extend((1..=cfg.alphas.len()).map(SubsetLabel::Synt));
    labels
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building worker pool")
}

pub fn cmd_gen_corpus(out: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    let manifest_path = corpus::generate_corpus(out, cfg)?;
    log::info!("corpus written under {}", out.display());
    Ok(manifest_path)
}

fn export_distilled(out: &Path, distilled: &DistilledVideo) -> Result<()> {
    let video_dir = out.join(&distilled.video_id);
    let original_dir = video_dir.join(SubsetLabel::Original.to_string());
    std::fs::create_dir_all(&original_dir)?;
    for (k, sti) in distilled.spatiotemporal.iter().enumerate() {
        let path = original_dir.join(format!("seg_{k:04}.png"));
        frame_io::write_png(&path, &sti.image)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    for synth in &distilled.synthetic {
        let subset_dir = video_dir.join(synth.subset.to_string());
        std::fs::create_dir_all(&subset_dir)?;
        let path = subset_dir.join(format!("seg_{:04}.png", synth.segment_index));
        frame_io::write_png(&path, &synth.image)
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let mut report = String::new();
    for (k, sti) in distilled.spatiotemporal.iter().enumerate() {
        for d in &sti.diagnostics {
            report.push_str(&format!(
                "segment={k} frame={} matches={} inliers={} fallback={}\n",
                d.frame_index, d.matches, d.inliers, d.fallback
            ));
        }
    }
    std::fs::write(video_dir.join("distill_report.txt"), report)?;
    Ok(())
}

/// Distills every manifest video: segmentation, spatiotemporal encoding,
/// alpha blending at every configured alpha, PNG export and a per-video
/// report.
pub fn cmd_distill(manifest_path: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.validate_paths(base)?;
    std::fs::create_dir_all(out)?;
    let pipeline = cfg.pipeline();

    thread_pool(cfg.jobs)?.install(|| {
        manifest.videos.par_iter().try_for_each(|video| -> Result<()> {
            let frames = frame_io::read_video_dir(&Manifest::resolved_path(video, base))
                .with_context(|| format!("loading video `{}`", video.id))?;
            let distilled = generate_synthetic_sets(frames, &video.id, &pipeline)
                .with_context(|| format!("distilling video `{}`", video.id))?;
            export_distilled(out, &distilled)
                .with_context(|| format!("exporting video `{}`", video.id))?;
            log::info!("distilled {}", video.id);
            Ok(())
        })
    })?;
    Ok(())
}

fn subset_image_paths(out: &Path, video_id: &str, subset: SubsetLabel) -> Result<Vec<PathBuf>> {
    let dir = out.join(video_id).join(subset.to_string());
    if !dir.is_dir() {
        bail!("no distilled images for video `{video_id}` subset `{subset}` (run distill first)");
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seg_") && n.ends_with(".png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no segment images under {}", dir.display());
    }
    Ok(paths)
}

/// Extracts block-statistics features for every (video, subset) and dumps
/// them as feature files next to the distilled images.
pub fn cmd_features(manifest_path: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let labels = subset_labels(cfg);
    thread_pool(cfg.jobs)?.install(|| {
        manifest.videos.par_iter().try_for_each(|video| -> Result<()> {
            for &subset in &labels {
                let steps: Vec<Vec<f64>> = subset_image_paths(out, &video.id, subset)?
                    .iter()
                    .map(|p| frame_io::read_png(p).map(|f| extract_features(&f)))
                    .collect::<Result<_, _>>()?;
                let path = out.join(&video.id).join(format!("{subset}.mdfv"));
                write_feature_file(&path, &steps)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            log::info!("features extracted for {}", video.id);
            Ok(())
        })
    })?;
    Ok(())
}

/// Loads one video's feature sequence for a subset: from its feature file
/// when present, otherwise recomputed from the distilled images.
fn load_sequence(
    out: &Path,
    video: &VideoEntry,
    subset: SubsetLabel,
) -> Result<FeatureSequence> {
    let mdfv = out.join(&video.id).join(format!("{subset}.mdfv"));
    let steps: Vec<Vec<f64>> = if mdfv.is_file() {
        read_feature_file(&mdfv)?
    } else {
        subset_image_paths(out, &video.id, subset)?
            .iter()
            .map(|p| frame_io::read_png(p).map(|f| extract_features(&f)))
            .collect::<Result<_, _>>()?
    };
    FeatureSequence::new(video.id.clone(), video.label.as_u8(), subset, steps)
        .with_context(|| format!("features of video `{}` subset {subset}", video.id))
}

fn load_split_sequences(
    out: &Path,
    videos: &[&VideoEntry],
    subsets: &[SubsetLabel],
) -> Result<Vec<FeatureSequence>> {
    let mut sequences = Vec::with_capacity(videos.len() * subsets.len());
    for video in videos {
        for &subset in subsets {
            sequences.push(load_sequence(out, video, subset)?);
        }
    }
    Ok(sequences)
}

fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

fn base_model_path(dir: &Path, index: usize, kind: mdpad_core::ensemble::CellKind) -> PathBuf {
    dir.join(format!("base_{index}_{kind}.mdmw"))
}

fn dump_meta_dataset(path: &Path, meta: &MetaDataset) -> Result<()> {
    let mut text = String::from("# video\tlabel\tstep\tbase_probabilities\n");
    for e in &meta.entries {
        for (t, step) in e.steps.iter().enumerate() {
            let probs: Vec<String> = step.iter().map(|p| format!("{p}")).collect();
            text.push_str(&format!(
                "{}\t{}\t{t}\t{}\n",
                e.video_id,
                e.label,
                probs.join(",")
            ));
        }
    }
    text.push_str("# provenance: video\tbase\tkind\tsubset\tvideo_fold\ttraining_folds\n");
    for e in &meta.entries {
        for p in &e.provenance {
            let folds: Vec<String> = p.training_folds.iter().map(|f| f.to_string()).collect();
            text.push_str(&format!(
                "#p\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.video_id,
                p.base_index,
                p.kind,
                p.subset,
                p.video_fold,
                folds.join(",")
            ));
        }
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Executes the stacking plan on the training split, audits leakage,
/// trains the meta-model, refits the final base models and persists
/// everything under `out/models/`.
pub fn cmd_train(manifest_path: &Path, cfg: &RunConfig, out: &Path, resume: bool) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let train_videos = manifest.split(Split::Train);
    if train_videos.is_empty() {
        bail!("manifest has no train-split videos");
    }
    let lives = train_videos.iter().filter(|v| v.label == Label::Live).count();
    if lives == 0 || lives == train_videos.len() {
        bail!(
            "train split needs both classes: {lives} live of {} videos",
            train_videos.len()
        );
    }

    let stack_cfg = cfg.stacking();
    let dir = models_dir(out);
    std::fs::create_dir_all(&dir)?;
    let meta_path = dir.join("meta.mdmw");
    let base_paths: Vec<PathBuf> = stack_cfg
        .bases
        .iter()
        .enumerate()
        .map(|(i, b)| base_model_path(&dir, i, b.kind))
        .collect();
    if resume && meta_path.is_file() && base_paths.iter().all(|p| p.is_file()) {
        log::info!("models already present under {}; skipping training", dir.display());
        return Ok(());
    }

    let subsets: Vec<SubsetLabel> = stack_cfg.bases.iter().map(|b| b.subset).collect();
    let sequences = load_split_sequences(out, &train_videos, &subsets)?;
    let ids: Vec<(String, u8)> =
        train_videos.iter().map(|v| (v.id.clone(), v.label.as_u8())).collect();
    let pairing: Vec<_> = stack_cfg.bases.iter().map(|b| (b.kind, b.subset)).collect();
    let plan = make_stacking_plan(&ids, stack_cfg.k, &pairing, stack_cfg.seed)?;

    log::info!("building out-of-fold meta dataset (k = {})", stack_cfg.k);
    let meta_ds = build_meta_dataset(&plan, &sequences, &stack_cfg)?;
    dump_meta_dataset(&dir.join("meta_dataset.tsv"), &meta_ds)?;

    log::info!("training meta-model");
    let meta_report = train_meta(&meta_ds, &stack_cfg)?;

    log::info!("refitting final base models");
    let finals = train_final_bases(&sequences, &stack_cfg)?;
    for ((path, (_, _, params)), base) in
        base_paths.iter().zip(&finals).zip(&stack_cfg.bases)
    {
        write_model(path, params)
            .with_context(|| format!("writing {} model {}", base.kind, path.display()))?;
    }
    write_model(&meta_path, &meta_report.params)?;

    // Training log: meta validation trace plus the out-of-fold accuracy of
    // the stacked model.
    let correct = meta_ds
        .entries
        .iter()
        .filter(|e| {
            let p = mdpad_core::ensemble::rnn_forward(&meta_report.params, &e.steps)
                .expect("meta dims")[1];
            (p >= 0.5) == (e.label == 1)
        })
        .count();
    let mut log_text = String::new();
    log_text.push_str(&format!("train_videos={}\n", train_videos.len()));
    log_text.push_str(&format!("stacking_k={}\n", stack_cfg.k));
    log_text.push_str("leakage_audit=pass\n");
    log_text.push_str(&format!(
        "meta_oof_accuracy={}\n",
        correct as f64 / meta_ds.entries.len() as f64
    ));
    log_text.push_str(&format!("meta_best_val_loss={}\n", meta_report.best_val_loss));
    log_text.push_str(&format!("meta_iterations={}\n", meta_report.iterations));
    log_text.push_str(&format!("meta_stopped_early={}\n", meta_report.stopped_early));
    for c in &meta_report.checks {
        log_text.push_str(&format!(
            "meta_check iteration={} train_loss={} val_loss={}\n",
            c.iteration, c.train_loss, c.val_loss
        ));
    }
    std::fs::write(dir.join("training_log.txt"), log_text)?;
    Ok(())
}

fn load_stack(cfg: &RunConfig, out: &Path) -> Result<TrainedStack> {
    let dir = models_dir(out);
    let stack_cfg = cfg.stacking();
    let mut bases = Vec::with_capacity(stack_cfg.bases.len());
    for (i, base) in stack_cfg.bases.iter().enumerate() {
        let path = base_model_path(&dir, i, base.kind);
        if !path.is_file() {
            bail!("missing model file {} (run train first)", path.display());
        }
        bases.push((base.kind, base.subset, read_model(&path)?));
    }
    let meta_path = dir.join("meta.mdmw");
    if !meta_path.is_file() {
        bail!("missing meta-model file {} (run train first)", meta_path.display());
    }
    Ok(TrainedStack { bases, meta: read_model(&meta_path)?, meta_flat: cfg.meta_flat })
}

fn score_split(
    stack: &TrainedStack,
    out: &Path,
    videos: &[&VideoEntry],
) -> Result<Vec<(String, u8, f64)>> {
    let mut rows = Vec::with_capacity(videos.len());
    for video in videos {
        let mut by_subset = BTreeMap::new();
        for (_, subset, _) in &stack.bases {
            by_subset.insert(*subset, load_sequence(out, video, *subset)?);
        }
        let score = predict_meta(stack, &by_subset)
            .with_context(|| format!("scoring video `{}`", video.id))?;
        rows.push((video.id.clone(), video.label.as_u8(), score));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutputs {
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub hter: f64,
    pub far: f64,
    pub frr: f64,
}

/// The threshold-transfer protocol: EER threshold from the validation
/// scores, HTER (with its FAR/FRR split) and AUC on the test scores.
pub fn evaluate_scores(val: &ScoreSet, test: &ScoreSet) -> Result<EvalOutputs> {
    let (eer_rate, tau) = eer(val)?;
    let test_curve = roc(test)?;
    Ok(EvalOutputs {
        auc: auc(&test_curve),
        eer: eer_rate,
        eer_threshold: tau,
        hter: hter(test, tau),
        far: far(test, tau),
        frr: frr(test, tau),
    })
}

pub fn format_metrics_report(m: &EvalOutputs) -> String {
    format!(
        "auc={}\neer={}\neer_threshold={}\nhter={}\nfar={}\nfrr={}\n",
        m.auc, m.eer, m.eer_threshold, m.hter, m.far, m.frr
    )
}

/// Scores validation and test videos with the persisted stack, computes
/// the EER threshold on validation, HTER/AUC on test, and emits score
/// files, a metrics report, the ROC CSV and a self-contained SVG figure.
pub fn cmd_eval(manifest_path: &Path, cfg: &RunConfig, out: &Path) -> Result<EvalOutputs> {
    let manifest = Manifest::load(manifest_path)?;
    let stack = load_stack(cfg, out)?;
    let val_videos = manifest.split(Split::Val);
    let test_videos = manifest.split(Split::Test);
    if val_videos.is_empty() || test_videos.is_empty() {
        bail!(
            "need nonempty val and test splits (val: {}, test: {})",
            val_videos.len(),
            test_videos.len()
        );
    }

    let eval_dir = out.join("eval");
    std::fs::create_dir_all(&eval_dir)?;
    let val_rows = score_split(&stack, out, &val_videos)?;
    let test_rows = score_split(&stack, out, &test_videos)?;
    write_scores(&eval_dir.join("val_scores.csv"), &val_rows)?;
    write_scores(&eval_dir.join("test_scores.csv"), &test_rows)?;

    let to_set = |rows: &[(String, u8, f64)]| {
        ScoreSet::new(rows.iter().map(|&(_, l, s)| (s, l)).collect())
    };
    let val_set = to_set(&val_rows)?;
    let test_set = to_set(&test_rows)?;
    let metrics = evaluate_scores(&val_set, &test_set)?;

    std::fs::write(eval_dir.join("metrics.txt"), format_metrics_report(&metrics))?;
    let curve = roc(&test_set)?;
    curve.write_csv(&eval_dir.join("roc.csv"))?;
    std::fs::write(
        eval_dir.join("roc.svg"),
        svg::roc_svg(&curve, metrics.auc, "Test-set ROC"),
    )?;
    log::info!(
        "eval: auc={:.4} eer={:.4} hter={:.4}",
        metrics.auc,
        metrics.eer,
        metrics.hter
    );
    Ok(metrics)
}

fn fnv64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

fn median_ms(mut samples: Vec<Duration>) -> f64 {
    samples.sort();
    let n = samples.len();
    let mid = if n % 2 == 1 {
        samples[n / 2].as_secs_f64()
    } else {
        (samples[n / 2 - 1].as_secs_f64() + samples[n / 2].as_secs_f64()) / 2.0
    };
    mid * 1e3
}

/// Benchmarks the distillation stages on the first segment of the first
/// manifest video: per-stage wall clock (detect, describe, match, msac,
/// warp, blend) plus end-to-end, repeated and reported as medians. The
/// non-timing lines (geometry, counts, output checksum) are deterministic.
pub fn cmd_bench(manifest_path: &Path, cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let Some(video) = manifest.videos.first() else {
        bail!("manifest has no videos");
    };
    let frames = frame_io::read_video_dir(&Manifest::resolved_path(video, base))?;
    let pipeline = cfg.pipeline();
    let segment = segment_video(frames, &video.id, pipeline.segment_len)?
        .into_iter()
        .next()
        .expect("at least one segment");

    let repeats = cfg.bench_repeats.max(1);
    let mut per_stage: BTreeMap<&'static str, Vec<Duration>> = BTreeMap::new();
    let mut stage_sums = Vec::with_capacity(repeats);
    let mut end_to_end = Vec::with_capacity(repeats);
    let mut checksum = 0u64;
    for _ in 0..repeats {
        let mut timings = StageTimings::default();
        let wall = Instant::now();
        let sti = mdpad_core::distill::distill_segment_timed(&segment, &pipeline, &mut timings);
        let still = &segment.frames[0];
        let mut blends = Vec::new();
        for &alpha in &pipeline.alphas {
            let t0 = Instant::now();
            blends.push(mdpad_core::distill::alpha_blend(&sti.image, still, alpha)?);
            timings.blend += t0.elapsed();
        }
        end_to_end.push(wall.elapsed());
        stage_sums.push(timings.total());
        for (name, duration) in timings.stage_list() {
            per_stage.entry(name).or_default().push(duration);
        }
        checksum = fnv64(
            sti.image
                .data()
                .iter()
                .chain(blends.iter().flat_map(|b| b.data()))
                .flat_map(|v| v.to_le_bytes()),
        );
    }

    // Per-run stage sums are each bounded by that run's end-to-end time,
    // so the medians preserve the ordering.
    let stage_sum = median_ms(stage_sums);
    let end_ms = median_ms(end_to_end);
    let mut report = String::new();
    report.push_str(&format!("video={}\n", video.id));
    report.push_str(&format!("segment_len={}\n", segment.len()));
    report.push_str(&format!(
        "width={} height={}\n",
        segment.frames[0].width(),
        segment.frames[0].height()
    ));
    report.push_str(&format!("repeats={repeats}\n"));
    report.push_str("stages=detect,describe,match,msac,warp,blend\n");
    for (name, samples) in &per_stage {
        report.push_str(&format!("stage.{name}.median_ms={:.3}\n", median_ms(samples.clone())));
    }
    report.push_str(&format!("stage_sum.median_ms={stage_sum:.3}\n"));
    report.push_str(&format!("end_to_end.median_ms={end_ms:.3}\n"));
    report.push_str(&format!("distill.checksum={checksum:016x}\n"));

    let bench_dir = out.join("bench");
    std::fs::create_dir_all(&bench_dir)?;
    let path = bench_dir.join("report.txt");
    std::fs::write(&path, report)?;
    log::info!("bench: end-to-end median {end_ms:.1} ms");
    Ok(path)
}
