//! Biometric evaluation: ROC curves, AUC, EER on validation scores, and
//! HTER at a transferred threshold.
//!
//! The decision rule is fixed globally: a sample is accepted as live iff
//! its score is greater than or equal to the threshold.

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("score set is empty")]
    Empty,
    #[error("score set needs both classes (lives: {lives}, attacks: {attacks})")]
    OneClass { lives: usize, attacks: usize },
    #[error("non-finite score encountered")]
    NonFiniteScore,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Attack label (negative class).
pub const ATTACK: u8 = 0;
/// Live label (positive class).
pub const LIVE: u8 = 1;

/// Scored samples with binary labels: 1 = live, 0 = attack.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    entries: Vec<(f64, u8)>,
}

impl ScoreSet {
    pub fn new(entries: Vec<(f64, u8)>) -> Result<Self, MetricsError> {
        if entries.is_empty() {
            return Err(MetricsError::Empty);
        }
        if entries.iter().any(|(s, _)| !s.is_finite()) {
            return Err(MetricsError::NonFiniteScore);
        }
        debug_assert!(entries.iter().all(|&(_, l)| l == ATTACK || l == LIVE));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(f64, u8)] {
        &self.entries
    }

    pub fn lives(&self) -> usize {
        self.entries.iter().filter(|&&(_, l)| l == LIVE).count()
    }

    pub fn attacks(&self) -> usize {
        self.entries.len() - self.lives()
    }

    fn require_both_classes(&self) -> Result<(), MetricsError> {
        let lives = self.lives();
        let attacks = self.attacks();
        if lives == 0 || attacks == 0 {
            return Err(MetricsError::OneClass { lives, attacks });
        }
        Ok(())
    }
}

/// False acceptance rate: attacks accepted as live at `threshold`.
pub fn far(scores: &ScoreSet, threshold: f64) -> f64 {
    let attacks = scores.attacks();
    if attacks == 0 {
        return 0.0;
    }
    let accepted =
        scores.entries.iter().filter(|&&(s, l)| l == ATTACK && s >= threshold).count();
    accepted as f64 / attacks as f64
}

/// False rejection rate: lives rejected at `threshold`.
pub fn frr(scores: &ScoreSet, threshold: f64) -> f64 {
    let lives = scores.lives();
    if lives == 0 {
        return 0.0;
    }
    let rejected = scores.entries.iter().filter(|&&(s, l)| l == LIVE && s < threshold).count();
    rejected as f64 / lives as f64
}

/// One operating point of a ROC sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Exact ROC sweep over every distinct score plus sentinels at plus and
/// minus infinity, ordered by increasing threshold. FPR and TPR are both
/// non-increasing along the sweep; the endpoints (1,1) and (0,0) come from
/// the sentinels.
#[derive(Debug, Clone)]
pub struct RocCurve {
    points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    /// Writes `threshold,fpr,tpr` CSV rows with a header line.
    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        std::fs::write(path, out).map_err(|e| MetricsError::Io { path: path.into(), source: e })
    }
}

pub fn roc(scores: &ScoreSet) -> Result<RocCurve, MetricsError> {
    scores.require_both_classes()?;
    let mut thresholds: Vec<f64> = scores.entries.iter().map(|&(s, _)| s).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 });
    for t in thresholds {
        points.push(RocPoint { threshold: t, fpr: far(scores, t), tpr: 1.0 - frr(scores, t) });
    }
    points.push(RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 });
    Ok(RocCurve { points })
}

/// Trapezoidal area under the ROC curve over FPR; with the `>=` sweep this
/// equals the tie-corrected probability that a random live outscores a
/// random attack.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
    }
    area
}

/// Equal error rate: the operating point where FAR meets FRR, linearly
/// interpolated between adjacent sweep thresholds. Returns the rate and
/// the threshold; when the crossing sits exactly on a sweep point, the
/// lowest such threshold is returned.
pub fn eer(scores: &ScoreSet) -> Result<(f64, f64), MetricsError> {
    scores.require_both_classes()?;
    let mut thresholds: Vec<f64> = scores.entries.iter().map(|&(s, _)| s).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    // diff = FAR - FRR is non-increasing in the threshold: +1 at the lowest
    // score, and it ends negative or at zero.
    let mut prev: Option<(f64, f64, f64)> = None; // (threshold, far, frr)
    for &t in &thresholds {
        let (fa, fr) = (far(scores, t), frr(scores, t));
        if fa <= fr {
            if fa == fr {
                return Ok((fa, t));
            }
            let Some((pt, pfa, pfr)) = prev else {
                return Ok(((fa + fr) / 2.0, t));
            };
            // Interpolate between the previous point (diff > 0) and this
            // one (diff < 0).
            let d0 = pfa - pfr;
            let d1 = fa - fr;
            let lambda = d0 / (d0 - d1);
            let tau = pt + lambda * (t - pt);
            let rate = pfa + lambda * (fa - pfa);
            return Ok((rate, tau));
        }
        prev = Some((t, fa, fr));
    }
    // FAR stayed above FRR across all finite thresholds; the crossing sits
    // past the top score where both settle at FAR = 0, FRR = 1. Interpolate
    // against that limit at the top threshold.
    let (pt, pfa, pfr) = prev.expect("nonempty sweep");
    let d0 = pfa - pfr;
    let d1: f64 = -1.0;
    let lambda = d0 / (d0 - d1);
    Ok((pfa + lambda * (0.0 - pfa), pt))
}

/// Half total error rate at a threshold carried over from a validation
/// set: `(FAR + FRR) / 2`.
pub fn hter(scores: &ScoreSet, threshold: f64) -> f64 {
    (far(scores, threshold) + frr(scores, threshold)) / 2.0
}
