//! K-fold out-of-fold stacking: fold assignment by video, per-fold base
//! model training, meta-feature assembly with provenance, a leakage audit,
//! and the GRU meta-model that combines base predictions.

use super::rnn::{rnn_forward, rnn_step_probs, CellKind, RnnParams};
use super::train::{train_rnn, TrainConfig, TrainReport};
use super::{EnsembleError, FeatureSequence};
use crate::distill::SubsetLabel;
use crate::seed::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct BaseModelConfig {
    pub kind: CellKind,
    pub subset: SubsetLabel,
    pub hidden: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct StackingConfig {
    /// Fold count; must exceed the number of base models.
    pub k: usize,
    pub bases: Vec<BaseModelConfig>,
    pub meta_hidden: usize,
    pub meta_train: TrainConfig,
    /// Collapse meta sequences to a single step of video-level
    /// probabilities instead of per-segment sequences.
    pub meta_flat: bool,
    /// Fraction of training videos held out (per class) for early
    /// stopping.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for StackingConfig {
    fn default() -> Self {
        // Base model units per the reference architectures; the meta
        // learning rate is 1e-3 (see train defaults) because 1.0 diverges
        // with Adam on cross entropy.
        let base = |kind, subset, hidden| BaseModelConfig {
            kind,
            subset,
            hidden,
            train: TrainConfig::default(),
        };
        Self {
            k: 5,
            bases: vec![
                base(CellKind::Lstm, SubsetLabel::Synt(1), 500),
                base(CellKind::BiLstm, SubsetLabel::Synt(2), 20),
                base(CellKind::Gru, SubsetLabel::Synt(3), 20),
            ],
            meta_hidden: 100,
            meta_train: TrainConfig { learning_rate: 1e-3, ..Default::default() },
            meta_flat: false,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Fold assignments (by video, never by segment) and the per-base-model
/// training-fold edits realizing the k-1 / k-2 / k-3 scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct StackingPlan {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
    pub pairing: Vec<(CellKind, SubsetLabel)>,
    /// `train_folds[base][held_out_fold]` = folds that base model trains
    /// on when predicting the held-out fold.
    pub train_folds: Vec<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl StackingPlan {
    pub fn videos_in_fold(&self, fold: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|&(_, &f)| f == fold)
            .map(|(v, _)| v.as_str())
            .collect()
    }
}

/// Shuffles videos with the seed and assigns folds round-robin (within
/// each class, so every fold sees both classes), then fixes the training
/// folds per base model: base `b` drops `b` random extra folds, so bases
/// train on k-1, k-2, k-3 folds respectively.
pub fn make_stacking_plan(
    videos: &[(String, u8)],
    k: usize,
    pairing: &[(CellKind, SubsetLabel)],
    seed: u64,
) -> Result<StackingPlan, EnsembleError> {
    if videos.is_empty() {
        return Err(EnsembleError::InvalidStacking("no videos".into()));
    }
    if pairing.is_empty() {
        return Err(EnsembleError::InvalidStacking("no base models".into()));
    }
    if k <= pairing.len() {
        return Err(EnsembleError::InvalidStacking(format!(
            "k = {k} must exceed the number of base models ({})",
            pairing.len()
        )));
    }
    if videos.len() < k {
        return Err(EnsembleError::InvalidStacking(format!(
            "{} videos cannot fill {k} folds",
            videos.len()
        )));
    }
    let mut sorted: Vec<(String, u8)> = videos.to_vec();
    sorted.sort();
    sorted.dedup_by(|a, b| a.0 == b.0);
    if sorted.len() != videos.len() {
        return Err(EnsembleError::InvalidStacking("duplicate video ids".into()));
    }

    if let Some((id, label)) = sorted.iter().find(|(_, l)| *l > 1) {
        return Err(EnsembleError::InvalidStacking(format!(
            "video {id} has label {label}, expected 0 or 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut fold_of = BTreeMap::new();
    let mut counter = 0usize;
    for class in [0u8, 1u8] {
        let mut members: Vec<&(String, u8)> =
            sorted.iter().filter(|(_, l)| *l == class).collect();
        members.shuffle(&mut rng);
        for (id, _) in members {
            fold_of.insert(id.clone(), counter % k);
            counter += 1;
        }
    }

    let mut train_folds = Vec::with_capacity(pairing.len());
    for b in 0..pairing.len() {
        let mut per_fold = Vec::with_capacity(k);
        for f in 0..k {
            let mut candidates: Vec<usize> = (0..k).filter(|&x| x != f).collect();
            let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                0x1000 + (((b as u64) << 8) | f as u64),
            ));
            candidates.shuffle(&mut drop_rng);
            let mut kept: Vec<usize> = candidates.split_off(b);
            kept.sort_unstable();
            per_fold.push(kept);
        }
        train_folds.push(per_fold);
    }

    Ok(StackingPlan { k, fold_of, pairing: pairing.to_vec(), train_folds, seed })
}

/// Where one meta-feature column came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub base_index: usize,
    pub kind: CellKind,
    pub subset: SubsetLabel,
    pub video_fold: usize,
    pub training_folds: Vec<usize>,
    pub training_videos: Vec<String>,
}

/// One video's out-of-fold meta-features.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaEntry {
    pub video_id: String,
    pub label: u8,
    /// Per segment: one live-class probability per base model.
    pub steps: Vec<Vec<f64>>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, Default)]
pub struct MetaDataset {
    pub entries: Vec<MetaEntry>,
}

/// Verifies the no-leakage invariant from recorded provenance: no
/// meta-feature was produced by a model whose training folds (or training
/// video lists) contained that video.
pub fn audit_leakage(meta: &MetaDataset, plan: &StackingPlan) -> Result<(), EnsembleError> {
    for entry in &meta.entries {
        let fold = *plan.fold_of.get(&entry.video_id).ok_or_else(|| {
            EnsembleError::Leakage(format!("video {} missing from plan", entry.video_id))
        })?;
        for prov in &entry.provenance {
            if prov.video_fold != fold {
                return Err(EnsembleError::Leakage(format!(
                    "video {} recorded fold {} but plan says {fold}",
                    entry.video_id, prov.video_fold
                )));
            }
            if prov.training_folds.contains(&fold) {
                return Err(EnsembleError::Leakage(format!(
                    "video {} (fold {fold}) inside training folds {:?} of base {}",
                    entry.video_id, prov.training_folds, prov.base_index
                )));
            }
            if prov.training_videos.iter().any(|v| v == &entry.video_id) {
                return Err(EnsembleError::Leakage(format!(
                    "video {} appears in the training videos of base {}",
                    entry.video_id, prov.base_index
                )));
            }
        }
    }
    Ok(())
}

type SequenceIndex<'a> = BTreeMap<(&'a str, SubsetLabel), &'a FeatureSequence>;

fn index_sequences<'a>(
    sequences: &'a [FeatureSequence],
) -> Result<(SequenceIndex<'a>, BTreeMap<&'a str, u8>), EnsembleError> {
    let mut index = BTreeMap::new();
    let mut labels: BTreeMap<&str, u8> = BTreeMap::new();
    for seq in sequences {
        index.insert((seq.video_id.as_str(), seq.subset), seq);
        if let Some(&prev) = labels.get(seq.video_id.as_str()) {
            if prev != seq.label {
                return Err(EnsembleError::InvalidStacking(format!(
                    "video {} has conflicting labels",
                    seq.video_id
                )));
            }
        }
        labels.insert(&seq.video_id, seq.label);
    }
    Ok((index, labels))
}

/// Splits sequences into (train, val) with a stratified seeded holdout; at
/// least one video per class goes to validation, and training keeps both
/// classes.
fn stratified_split(
    mut pool: Vec<FeatureSequence>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<FeatureSequence>, Vec<FeatureSequence>), EnsembleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    pool.shuffle(&mut rng);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1u8] {
        let members: Vec<FeatureSequence> =
            pool.iter().filter(|s| s.label == class).cloned().collect();
        if members.len() < 2 {
            return Err(EnsembleError::InvalidStacking(format!(
                "class {class} has {} video(s); need at least 2 for a holdout",
                members.len()
            )));
        }
        let n_val = ((members.len() as f64 * fraction).ceil() as usize)
            .clamp(1, members.len() - 1);
        let (v, t) = members.split_at(n_val);
        val.extend_from_slice(v);
        train.extend_from_slice(t);
    }
    Ok((train, val))
}

fn live_probs(
    params: &RnnParams,
    seq: &FeatureSequence,
    flat: bool,
) -> Result<Vec<f64>, EnsembleError> {
    if flat {
        Ok(vec![rnn_forward(params, &seq.steps)?[1]])
    } else {
        Ok(rnn_step_probs(params, &seq.steps)?.iter().map(|p| p[1]).collect())
    }
}

/// Trains each base model once per fold on that fold's training folds and
/// predicts the held-out videos, assembling per-video meta-sequences. The
/// leakage audit runs before returning; a violation is a hard failure.
pub fn build_meta_dataset(
    plan: &StackingPlan,
    sequences: &[FeatureSequence],
    config: &StackingConfig,
) -> Result<MetaDataset, EnsembleError> {
    if plan.pairing.len() != config.bases.len() {
        return Err(EnsembleError::InvalidStacking(
            "plan pairing and config bases disagree".into(),
        ));
    }
    let (index, labels) = index_sequences(sequences)?;

    // meta_steps[video] -> per base: per segment live probability.
    let mut per_video: BTreeMap<&str, Vec<Option<Vec<f64>>>> = plan
        .fold_of
        .keys()
        .map(|v| (v.as_str(), vec![None; config.bases.len()]))
        .collect();
    let mut provenance: BTreeMap<&str, Vec<Provenance>> =
        plan.fold_of.keys().map(|v| (v.as_str(), Vec::new())).collect();

    for (b, base) in config.bases.iter().enumerate() {
        for fold in 0..plan.k {
            let training_folds = &plan.train_folds[b][fold];
            let mut training_videos: Vec<String> = plan
                .fold_of
                .iter()
                .filter(|(_, f)| training_folds.contains(f))
                .map(|(v, _)| v.clone())
                .collect();
            training_videos.sort();

            let pool: Vec<FeatureSequence> = training_videos
                .iter()
                .map(|v| {
                    index.get(&(v.as_str(), base.subset)).copied().cloned().ok_or_else(|| {
                        EnsembleError::MissingSequence {
                            video_id: v.clone(),
                            subset: base.subset,
                        }
                    })
                })
                .collect::<Result<_, _>>()?;
            let split_seed = derive_seed(plan.seed, 0x2000 + ((b as u64) << 8 | fold as u64));
            let (train, val) = stratified_split(pool, config.holdout_fraction, split_seed)?;
            let train_seed = derive_seed(plan.seed, 0x3000 + ((b as u64) << 8 | fold as u64));
            let report = train_rnn(
                &train,
                &val,
                base.kind,
                base.hidden,
                &TrainConfig { seed: train_seed, ..base.train.clone() },
            )?;

            for video in plan.videos_in_fold(fold) {
                let seq = index.get(&(video, base.subset)).copied().ok_or_else(|| {
                    EnsembleError::MissingSequence {
                        video_id: video.to_string(),
                        subset: base.subset,
                    }
                })?;
                let probs = live_probs(&report.params, seq, config.meta_flat)?;
                per_video.get_mut(video).expect("known video")[b] = Some(probs);
                provenance.get_mut(video).expect("known video").push(Provenance {
                    base_index: b,
                    kind: base.kind,
                    subset: base.subset,
                    video_fold: fold,
                    training_folds: training_folds.clone(),
                    training_videos: training_videos.clone(),
                });
            }
        }
    }

    let mut entries = Vec::with_capacity(per_video.len());
    for (video, base_probs) in per_video {
        let columns: Vec<Vec<f64>> = base_probs
            .into_iter()
            .enumerate()
            .map(|(b, p)| {
                p.ok_or_else(|| {
                    EnsembleError::InvalidStacking(format!(
                        "no out-of-fold prediction for video {video}, base {b}"
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        let t_len = columns[0].len();
        if columns.iter().any(|c| c.len() != t_len) {
            return Err(EnsembleError::InvalidStacking(format!(
                "base models disagree on step count for video {video}"
            )));
        }
        let steps: Vec<Vec<f64>> =
            (0..t_len).map(|t| columns.iter().map(|c| c[t]).collect()).collect();
        entries.push(MetaEntry {
            video_id: video.to_string(),
            label: labels[video],
            steps,
            provenance: provenance.remove(video).unwrap_or_default(),
        });
    }

    let meta = MetaDataset { entries };
    audit_leakage(&meta, plan)?;
    Ok(meta)
}

fn meta_sequences(meta: &MetaDataset) -> Result<Vec<FeatureSequence>, EnsembleError> {
    meta.entries
        .iter()
        .map(|e| {
            FeatureSequence::new(e.video_id.clone(), e.label, SubsetLabel::Original, e.steps.clone())
        })
        .collect()
}

/// Trains the GRU meta-model on the out-of-fold meta-features.
pub fn train_meta(
    meta: &MetaDataset,
    config: &StackingConfig,
) -> Result<TrainReport, EnsembleError> {
    let sequences = meta_sequences(meta)?;
    let split_seed = derive_seed(config.seed, 0x4000);
    let (train, val) = stratified_split(sequences, config.holdout_fraction, split_seed)?;
    train_rnn(
        &train,
        &val,
        CellKind::Gru,
        config.meta_hidden,
        &TrainConfig { seed: derive_seed(config.seed, 0x4001), ..config.meta_train.clone() },
    )
}

/// A deployable stack: final base models (refit on the full training
/// split) plus the meta-model.
#[derive(Debug, Clone)]
pub struct TrainedStack {
    pub bases: Vec<(CellKind, SubsetLabel, RnnParams)>,
    pub meta: RnnParams,
    pub meta_flat: bool,
}

/// Refits each base model on every training video (with a stratified
/// early-stop holdout) for test-time prediction.
pub fn train_final_bases(
    sequences: &[FeatureSequence],
    config: &StackingConfig,
) -> Result<Vec<(CellKind, SubsetLabel, RnnParams)>, EnsembleError> {
    let (index, labels) = index_sequences(sequences)?;
    let mut out = Vec::with_capacity(config.bases.len());
    for (b, base) in config.bases.iter().enumerate() {
        let pool: Vec<FeatureSequence> = labels
            .keys()
            .map(|v| {
                index.get(&(*v, base.subset)).copied().cloned().ok_or_else(|| {
                    EnsembleError::MissingSequence { video_id: v.to_string(), subset: base.subset }
                })
            })
            .collect::<Result<_, _>>()?;
        let split_seed = derive_seed(config.seed, 0x5000 + b as u64);
        let (train, val) = stratified_split(pool, config.holdout_fraction, split_seed)?;
        let report = train_rnn(
            &train,
            &val,
            base.kind,
            base.hidden,
            &TrainConfig {
                seed: derive_seed(config.seed, 0x5100 + b as u64),
                ..base.train.clone()
            },
        )?;
        out.push((base.kind, base.subset, report.params));
    }
    Ok(out)
}

/// Full-stack prediction for one video given its per-subset feature
/// sequences: base models produce per-segment live probabilities on their
/// paired subsets, the meta-model combines them into the final score.
pub fn predict_meta(
    stack: &TrainedStack,
    subset_sequences: &BTreeMap<SubsetLabel, FeatureSequence>,
) -> Result<f64, EnsembleError> {
    let mut columns = Vec::with_capacity(stack.bases.len());
    for (kind, subset, params) in &stack.bases {
        let seq = subset_sequences.get(subset).ok_or_else(|| EnsembleError::MissingSequence {
            video_id: subset_sequences
                .values()
                .next()
                .map(|s| s.video_id.clone())
                .unwrap_or_default(),
            subset: *subset,
        })?;
        debug_assert_eq!(params.kind(), *kind);
        columns.push(live_probs(params, seq, stack.meta_flat)?);
    }
    let t_len = columns[0].len();
    if columns.iter().any(|c| c.len() != t_len) {
        return Err(EnsembleError::InvalidStacking(
            "base models disagree on step count".into(),
        ));
    }
    let steps: Vec<Vec<f64>> =
        (0..t_len).map(|t| columns.iter().map(|c| c[t]).collect()).collect();
    Ok(rnn_forward(&stack.meta, &steps)?[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn quick_train(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.02,
            batch_size: 16,
            val_check_period: 10,
            patience: 4,
            max_iters: 150,
            seed,
            ..Default::default()
        }
    }

    fn small_stack_config(seed: u64) -> StackingConfig {
        let base = |kind, subset| BaseModelConfig {
            kind,
            subset,
            hidden: 4,
            train: quick_train(seed),
        };
        StackingConfig {
            k: 4,
            bases: vec![
                base(CellKind::Lstm, SubsetLabel::Synt(1)),
                base(CellKind::BiLstm, SubsetLabel::Synt(2)),
                base(CellKind::Gru, SubsetLabel::Synt(3)),
            ],
            meta_hidden: 6,
            meta_train: quick_train(seed + 1),
            meta_flat: false,
            holdout_fraction: 0.2,
            seed,
        }
    }

    /// Separable corpus with one sequence per (video, subset).
    fn subset_corpus(n_videos: usize, seed: u64) -> Vec<FeatureSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..n_videos {
            let label = (i % 2) as u8;
            let offset = if label == 1 { 0.4 } else { -0.4 };
            for subset in [SubsetLabel::Synt(1), SubsetLabel::Synt(2), SubsetLabel::Synt(3)] {
                let steps: Vec<Vec<f64>> = (0..3)
                    .map(|_| (0..4).map(|_| offset + rng.random_range(-0.3..0.3)).collect())
                    .collect();
                out.push(
                    FeatureSequence::new(format!("vid{i:03}"), label, subset, steps).unwrap(),
                );
            }
        }
        out
    }

    fn plan_for(n: usize, k: usize, seed: u64) -> StackingPlan {
        let videos: Vec<(String, u8)> =
            (0..n).map(|i| (format!("vid{i:03}"), (i % 2) as u8)).collect();
        let pairing = vec![
            (CellKind::Lstm, SubsetLabel::Synt(1)),
            (CellKind::BiLstm, SubsetLabel::Synt(2)),
            (CellKind::Gru, SubsetLabel::Synt(3)),
        ];
        make_stacking_plan(&videos, k, &pairing, seed).unwrap()
    }

    #[test]
    fn folds_partition_evenly() {
        let plan = plan_for(100, 5, 1);
        for f in 0..5 {
            assert_eq!(plan.videos_in_fold(f).len(), 20);
        }
        let total: usize = (0..5).map(|f| plan.videos_in_fold(f).len()).sum();
        assert_eq!(total, 100);
    }

    #[test]
    fn plan_is_deterministic() {
        assert_eq!(plan_for(40, 5, 9), plan_for(40, 5, 9));
        assert_ne!(plan_for(40, 5, 9).fold_of, plan_for(40, 5, 10).fold_of);
    }

    #[test]
    fn training_fold_counts_follow_scheme() {
        let plan = plan_for(50, 5, 3);
        for (b, per_fold) in plan.train_folds.iter().enumerate() {
            for (f, folds) in per_fold.iter().enumerate() {
                assert_eq!(folds.len(), 5 - 1 - b, "base {b} fold {f}");
                assert!(!folds.contains(&f));
                for w in folds.windows(2) {
                    assert!(w[0] < w[1]);
                }
            }
        }
    }

    #[test]
    fn plan_validation_errors() {
        let videos: Vec<(String, u8)> =
            (0..10).map(|i| (format!("v{i}"), (i % 2) as u8)).collect();
        let pairing = vec![(CellKind::Lstm, SubsetLabel::Synt(1))];
        assert!(make_stacking_plan(&[], 4, &pairing, 0).is_err());
        assert!(make_stacking_plan(&videos, 1, &pairing, 0).is_err());
        assert!(make_stacking_plan(&videos, 12, &pairing, 0).is_err());
        let dup = vec![
            ("a".to_string(), 0),
            ("a".to_string(), 1),
            ("b".to_string(), 0),
            ("c".to_string(), 1),
        ];
        assert!(make_stacking_plan(&dup, 2, &pairing, 0).is_err());
    }

    #[test]
    fn folds_are_class_stratified() {
        let plan = plan_for(30, 5, 17);
        for f in 0..5 {
            let members = plan.videos_in_fold(f);
            // Even ids are attack, odd are live in plan_for.
            let lives = members
                .iter()
                .filter(|v| v[3..].parse::<usize>().unwrap() % 2 == 1)
                .count();
            assert!(lives >= 1 && lives <= members.len() - 1, "fold {f} has {lives} lives");
        }
    }

    #[test]
    fn meta_dataset_structure_and_audit() {
        let sequences = subset_corpus(32, 5);
        let config = small_stack_config(11);
        let videos: Vec<(String, u8)> =
            (0..32).map(|i| (format!("vid{i:03}"), (i % 2) as u8)).collect();
        let pairing: Vec<(CellKind, SubsetLabel)> =
            config.bases.iter().map(|b| (b.kind, b.subset)).collect();
        let plan = make_stacking_plan(&videos, config.k, &pairing, config.seed).unwrap();
        let meta = build_meta_dataset(&plan, &sequences, &config).unwrap();

        // Exactly one entry per video, dim = number of base models, one
        // out-of-fold provenance record per base.
        assert_eq!(meta.entries.len(), 32);
        for e in &meta.entries {
            assert_eq!(e.steps.len(), 3);
            for s in &e.steps {
                assert_eq!(s.len(), 3);
                assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
            }
            assert_eq!(e.provenance.len(), 3);
        }
        audit_leakage(&meta, &plan).unwrap();

        // Tampering with provenance must trip the audit.
        let mut corrupted = meta.clone();
        let fold = plan.fold_of[&corrupted.entries[0].video_id];
        corrupted.entries[0].provenance[0].training_folds.push(fold);
        assert!(matches!(
            audit_leakage(&corrupted, &plan),
            Err(EnsembleError::Leakage(_))
        ));
        let mut corrupted = meta.clone();
        let own = corrupted.entries[0].video_id.clone();
        corrupted.entries[0].provenance[1].training_videos.push(own);
        assert!(audit_leakage(&corrupted, &plan).is_err());
    }

    #[test]
    fn untrained_meta_scores_half() {
        let stack = TrainedStack {
            bases: vec![(
                CellKind::Gru,
                SubsetLabel::Synt(1),
                RnnParams::zeros(CellKind::Gru, 4, 3),
            )],
            meta: RnnParams::zeros(CellKind::Gru, 1, 5),
            meta_flat: false,
        };
        let seq = FeatureSequence::new(
            "v",
            1,
            SubsetLabel::Synt(1),
            vec![vec![0.2, -0.1, 0.4, 0.9]; 3],
        )
        .unwrap();
        let mut map = BTreeMap::new();
        map.insert(SubsetLabel::Synt(1), seq);
        assert_eq!(predict_meta(&stack, &map).unwrap(), 0.5);
    }

    /// Base probabilities for the constructed-complementarity experiments.
    fn constructed_meta(
        n: usize,
        seed: u64,
        build: impl Fn(u8, bool, &mut ChaCha8Rng) -> [f64; 3],
    ) -> MetaDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let pop_a = (i / 2) % 2 == 0;
                let probs = build(label, pop_a, &mut rng);
                MetaEntry {
                    video_id: format!("m{i:04}"),
                    label,
                    steps: vec![probs.to_vec(); 3],
                    provenance: Vec::new(),
                }
            })
            .collect();
        MetaDataset { entries }
    }

    fn meta_accuracy(params: &RnnParams, meta: &MetaDataset) -> f64 {
        let correct = meta
            .entries
            .iter()
            .filter(|e| {
                let p = rnn_forward(params, &e.steps).unwrap()[1];
                (p >= 0.5) == (e.label == 1)
            })
            .count();
        correct as f64 / meta.entries.len() as f64
    }

    fn base_accuracy(meta: &MetaDataset, base: usize) -> f64 {
        let correct = meta
            .entries
            .iter()
            .filter(|e| (e.steps[0][base] >= 0.5) == (e.label == 1))
            .count();
        correct as f64 / meta.entries.len() as f64
    }

    #[test]
    fn redundant_bases_meta_matches_base_accuracy() {
        // All bases emit the same confident-but-imperfect probability.
        let build = |label: u8, _: bool, rng: &mut ChaCha8Rng| {
            let correct = rng.random_range(0.0..1.0) < 0.85;
            let target = if (label == 1) == correct { 0.9 } else { 0.1 };
            [target; 3]
        };
        let train = constructed_meta(300, 1, build);
        let test = constructed_meta(200, 2, build);
        let config = StackingConfig {
            meta_hidden: 4,
            meta_train: quick_train(3),
            seed: 3,
            ..small_stack_config(3)
        };
        let report = train_meta(&train, &config).unwrap();
        let meta_acc = meta_accuracy(&report.params, &test);
        let base_acc = base_accuracy(&test, 0);
        assert!(
            (meta_acc - base_acc).abs() <= 0.01 + 1e-9,
            "meta {meta_acc} vs base {base_acc}"
        );
    }

    #[test]
    fn complementary_bases_meta_beats_each() {
        // Base 0 is confident and correct on subpopulation A, clueless on
        // B; base 1 mirrors on B; base 2 is uninformative.
        let build = |label: u8, pop_a: bool, _: &mut ChaCha8Rng| {
            let confident = if label == 1 { 0.92 } else { 0.08 };
            [
                if pop_a { confident } else { 0.47 },
                if pop_a { 0.47 } else { confident },
                0.5,
            ]
        };
        let train = constructed_meta(400, 7, build);
        let test = constructed_meta(240, 8, build);
        let config = StackingConfig {
            meta_hidden: 6,
            meta_train: TrainConfig {
                learning_rate: 0.05,
                batch_size: 32,
                val_check_period: 20,
                patience: 6,
                max_iters: 600,
                seed: 9,
                ..Default::default()
            },
            seed: 9,
            ..small_stack_config(9)
        };
        let report = train_meta(&train, &config).unwrap();
        let meta_acc = meta_accuracy(&report.params, &test);
        for b in 0..3 {
            let acc = base_accuracy(&test, b);
            assert!(meta_acc > acc, "meta {meta_acc} vs base {b} at {acc}");
        }
        assert!(meta_acc >= 0.9, "meta accuracy only {meta_acc}");
    }
}
