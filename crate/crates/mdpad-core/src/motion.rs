//! Rigid 2D transform algebra, closed-form estimation from point
//! correspondences and MSAC-robust estimation from noisy matches.
//!
//! A rigid (Euclidean) transform is a rotation plus a translation; it
//! preserves lengths and angles. Fitting uses rotation-only Procrustes, so
//! reflections are excluded: consecutive video frames cannot reflect.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("rigid estimation needs at least 2 correspondences, got {0}")]
    NotEnoughPairs(usize),
    #[error("rigid estimation is degenerate: zero centered scatter")]
    DegenerateScatter,
}

/// A 2D point.
pub type Point = (f64, f64);

/// A rotation + translation in homogeneous form.
///
/// Conceptually the 3x3 matrix
///
/// ```text
/// [ cos t  -sin t  tx ]
/// [ sin t   cos t  ty ]
/// [   0       0     1 ]
/// ```
///
/// Stored as `(cos, sin, tx, ty)` with the rotation column kept unit-norm,
/// which preserves the orthonormality invariant under long composition
/// chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    cos: f64,
    sin: f64,
    tx: f64,
    ty: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { cos: 1.0, sin: 0.0, tx: 0.0, ty: 0.0 }
    }

    /// Rotation by `angle` radians about the origin followed by a
    /// translation of `(tx, ty)`.
    pub fn from_angle_translation(angle: f64, tx: f64, ty: f64) -> Self {
        Self { cos: angle.cos(), sin: angle.sin(), tx, ty }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { cos: 1.0, sin: 0.0, tx, ty }
    }

    /// Rotation about an arbitrary center point.
    pub fn rotation_about(angle: f64, center: Point) -> Self {
        let r = Self::from_angle_translation(angle, 0.0, 0.0);
        let (rcx, rcy) = r.apply(center);
        Self { tx: center.0 - rcx, ty: center.1 - rcy, ..r }
    }

    fn from_parts(cos: f64, sin: f64, tx: f64, ty: f64) -> Self {
        // Renormalize so det stays +1 to machine precision.
        let n = cos.hypot(sin);
        Self { cos: cos / n, sin: sin / n, tx, ty }
    }

    pub fn angle(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    pub fn translation_part(&self) -> Point {
        (self.tx, self.ty)
    }

    /// Row-major homogeneous 3x3 matrix.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.cos, -self.sin, self.tx],
            [self.sin, self.cos, self.ty],
            [0.0, 0.0, 1.0],
        ]
    }

    /// Applies the transform to a point: `(a', b', 1) = M (a, b, 1)`.
    pub fn apply(&self, p: Point) -> Point {
        (
            self.cos * p.0 - self.sin * p.1 + self.tx,
            self.sin * p.0 + self.cos * p.1 + self.ty,
        )
    }

    /// `compose(t1, t2)` applies `t2` first, then `t1`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::from_parts(
            self.cos * other.cos - self.sin * other.sin,
            self.sin * other.cos + self.cos * other.sin,
            self.cos * other.tx - self.sin * other.ty + self.tx,
            self.sin * other.tx + self.cos * other.ty + self.ty,
        )
    }

    pub fn invert(&self) -> RigidTransform {
        RigidTransform {
            cos: self.cos,
            sin: -self.sin,
            tx: -(self.cos * self.tx + self.sin * self.ty),
            ty: self.sin * self.tx - self.cos * self.ty,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.sin == 0.0 && self.cos == 1.0 && self.tx == 0.0 && self.ty == 0.0
    }
}

/// Least-squares rigid fit (2D orthogonal Procrustes without scaling or
/// reflection) mapping `moving` points onto `fixed` points.
///
/// The angle comes from the atan2 of the centered cross/dot sums; the
/// translation maps the moving centroid onto the fixed centroid under that
/// rotation.
pub fn estimate_rigid(pairs: &[(Point, Point)]) -> Result<RigidTransform, MotionError> {
    if pairs.len() < 2 {
        return Err(MotionError::NotEnoughPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let (mut cfx, mut cfy, mut cmx, mut cmy) = (0.0, 0.0, 0.0, 0.0);
    for ((fx, fy), (mx, my)) in pairs {
        cfx += fx;
        cfy += fy;
        cmx += mx;
        cmy += my;
    }
    cfx /= n;
    cfy /= n;
    cmx /= n;
    cmy /= n;

    let mut dot = 0.0;
    let mut cross = 0.0;
    for ((fx, fy), (mx, my)) in pairs {
        let (fx, fy) = (fx - cfx, fy - cfy);
        let (mx, my) = (mx - cmx, my - cmy);
        dot += mx * fx + my * fy;
        cross += mx * fy - my * fx;
    }
    if dot == 0.0 && cross == 0.0 {
        return Err(MotionError::DegenerateScatter);
    }
    let angle = cross.atan2(dot);
    let r = RigidTransform::from_angle_translation(angle, 0.0, 0.0);
    let (rx, ry) = r.apply((cmx, cmy));
    Ok(RigidTransform { tx: cfx - rx, ty: cfy - ry, ..r })
}

/// A correspondence given to MSAC: fixed-image point and moving-image point.
pub type Correspondence = (Point, Point);

#[derive(Debug, Clone, Copy)]
pub struct MsacParams {
    /// Inlier reprojection threshold in pixels at native resolution.
    pub threshold_px: f64,
    /// Probability that at least one sampled pair is outlier-free.
    pub confidence: f64,
    pub max_iters: usize,
    /// Below this many inliers the result falls back to identity.
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for MsacParams {
    fn default() -> Self {
        Self { threshold_px: 2.0, confidence: 0.99, max_iters: 2000, min_inliers: 6, seed: 0 }
    }
}

/// Outcome of a robust rigid estimation.
#[derive(Debug, Clone)]
pub struct MsacResult {
    pub transform: RigidTransform,
    /// One flag per input correspondence, for the returned transform.
    pub inlier_mask: Vec<bool>,
    /// Truncated quadratic objective: sum of `min(r_i^2, T^2)` over all
    /// correspondences, for the returned transform.
    pub cost: f64,
    pub iterations_used: usize,
    /// True when the input was degenerate and identity was returned.
    pub fallback: bool,
}

fn score_model(
    t: &RigidTransform,
    matches: &[Correspondence],
    threshold_sq: f64,
) -> (f64, Vec<bool>, usize) {
    let mut cost = 0.0;
    let mut mask = vec![false; matches.len()];
    let mut inliers = 0;
    for (i, (fixed, moving)) in matches.iter().enumerate() {
        let (px, py) = t.apply(*moving);
        let r2 = (px - fixed.0).powi(2) + (py - fixed.1).powi(2);
        if r2 <= threshold_sq {
            mask[i] = true;
            inliers += 1;
            cost += r2;
        } else {
            cost += threshold_sq;
        }
    }
    (cost, mask, inliers)
}

fn fallback_result(matches: &[Correspondence], threshold_sq: f64, iterations: usize) -> MsacResult {
    let identity = RigidTransform::identity();
    let (cost, mask, _) = score_model(&identity, matches, threshold_sq);
    MsacResult {
        transform: identity,
        inlier_mask: mask,
        cost,
        iterations_used: iterations,
        fallback: true,
    }
}

/// MSAC hypothesize-and-verify over 2-point samples.
///
/// Samples two correspondences per iteration with a seeded RNG, fits a
/// rigid transform, and scores it with the truncated quadratic cost.
/// Terminates adaptively once `log(1-confidence) / log(1-w^2)` iterations
/// have run for the current inlier ratio `w`, then refits on the best
/// inlier set. The refit is only adopted if it does not worsen the cost,
/// so the returned cost never exceeds that of any sampled candidate.
///
/// Degenerate inputs (fewer than 2 matches, or fewer than
/// `params.min_inliers` inliers at the end) return identity with
/// `fallback = true` instead of an error.
pub fn estimate_msac(matches: &[Correspondence], params: &MsacParams) -> MsacResult {
    let t2 = params.threshold_px * params.threshold_px;
    if matches.len() < 2 {
        return fallback_result(matches, t2, 0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = matches.len();
    let mut best: Option<(f64, RigidTransform, Vec<bool>, usize)> = None;
    let mut required = params.max_iters;
    let mut iterations = 0;

    while iterations < required.min(params.max_iters) {
        iterations += 1;
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let sample = [matches[a], matches[b]];
        let Ok(model) = estimate_rigid(&sample) else {
            continue;
        };
        let (cost, mask, inliers) = score_model(&model, matches, t2);
        if best.as_ref().is_none_or(|(c, ..)| cost < *c) {
            best = Some((cost, model, mask, inliers));
            // Adaptive iteration bound for the new inlier ratio.
            let w = inliers as f64 / n as f64;
            if w > 0.0 {
                let p_bad = 1.0 - w * w;
                required = if p_bad <= f64::EPSILON {
                    iterations
                } else {
                    let need = (1.0 - params.confidence).ln() / p_bad.ln();
                    need.ceil().min(params.max_iters as f64) as usize
                };
            }
        }
    }

    let Some((best_cost, best_model, best_mask, _)) = best else {
        return fallback_result(matches, t2, iterations);
    };

    // Refit on the best inlier set; keep the sampled model if the refit
    // does not improve the truncated cost.
    let inlier_pairs: Vec<Correspondence> = matches
        .iter()
        .zip(&best_mask)
        .filter(|(_, &keep)| keep)
        .map(|(m, _)| *m)
        .collect();
    let (cost, transform, mask, inliers) = match estimate_rigid(&inlier_pairs) {
        Ok(refit) => {
            let (refit_cost, refit_mask, refit_inliers) = score_model(&refit, matches, t2);
            if refit_cost <= best_cost {
                (refit_cost, refit, refit_mask, refit_inliers)
            } else {
                let inliers = best_mask.iter().filter(|&&b| b).count();
                (best_cost, best_model, best_mask, inliers)
            }
        }
        Err(_) => {
            let inliers = best_mask.iter().filter(|&&b| b).count();
            (best_cost, best_model, best_mask, inliers)
        }
    };

    if inliers < params.min_inliers {
        return fallback_result(matches, t2, iterations);
    }
    MsacResult { transform, inlier_mask: mask, cost, iterations_used: iterations, fallback: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn apply_identity() {
        let p = RigidTransform::identity().apply((5.0, 7.0));
        assert_eq!(p, (5.0, 7.0));
    }

    #[test]
    fn apply_quarter_turn() {
        let t = RigidTransform::from_angle_translation(FRAC_PI_2, 0.0, 0.0);
        let (x, y) = t.apply((1.0, 0.0));
        assert_close(x, 0.0, 1e-15);
        assert_close(y, 1.0, 1e-15);
    }

    #[test]
    fn apply_pure_translation() {
        let t = RigidTransform::translation(3.0, 4.0);
        assert_eq!(t.apply((1.0, 1.0)), (4.0, 5.0));
    }

    #[test]
    fn compose_identity_is_noop() {
        let t = RigidTransform::from_angle_translation(0.3, 1.0, -2.0);
        let c = RigidTransform::identity().compose(&t);
        assert_close(c.angle(), t.angle(), 1e-15);
        assert_eq!(c.translation_part(), t.translation_part());
    }

    #[test]
    fn compose_translations_add() {
        let a = RigidTransform::translation(1.0, 2.0);
        let b = RigidTransform::translation(3.0, 4.0);
        let c = a.compose(&b);
        assert_eq!(c.translation_part(), (4.0, 6.0));
        assert_eq!(c.angle(), 0.0);
    }

    #[test]
    fn compose_rotations_add_angles() {
        let a = RigidTransform::from_angle_translation(30f64.to_radians(), 0.0, 0.0);
        let b = RigidTransform::from_angle_translation(60f64.to_radians(), 0.0, 0.0);
        let c = a.compose(&b);
        assert_close(c.angle(), 90f64.to_radians(), 1e-12);
    }

    #[test]
    fn invert_round_trip() {
        let t = RigidTransform::from_angle_translation(0.7, 3.0, -1.5);
        let id = t.compose(&t.invert());
        assert_close(id.angle(), 0.0, 1e-9);
        assert_close(id.tx, 0.0, 1e-9);
        assert_close(id.ty, 0.0, 1e-9);
    }

    #[test]
    fn matrix_last_row_exact() {
        let t = RigidTransform::from_angle_translation(1.0, 2.0, 3.0);
        assert_eq!(t.matrix()[2], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn estimate_identity_pairs() {
        let pairs: Vec<_> = [(0.0, 0.0), (1.0, 5.0), (-2.0, 3.0)]
            .iter()
            .map(|&p| (p, p))
            .collect();
        let t = estimate_rigid(&pairs).unwrap();
        assert_close(t.angle(), 0.0, 1e-12);
        assert_close(t.tx, 0.0, 1e-12);
        assert_close(t.ty, 0.0, 1e-12);
    }

    #[test]
    fn estimate_pure_shift() {
        let pairs = vec![((4.0, -1.0), (1.0, 1.0)), ((8.0, 0.0), (5.0, 2.0))];
        let t = estimate_rigid(&pairs).unwrap();
        assert_close(t.angle(), 0.0, 1e-12);
        assert_close(t.tx, 3.0, 1e-12);
        assert_close(t.ty, -2.0, 1e-12);
    }

    #[test]
    fn estimate_quarter_rotation() {
        let moving = [(1.0, 0.0), (0.0, 1.0), (2.0, 3.0)];
        let pairs: Vec<_> = moving.iter().map(|&(x, y)| ((-y, x), (x, y))).collect();
        let t = estimate_rigid(&pairs).unwrap();
        assert_close(t.angle(), FRAC_PI_2, 1e-12);
        assert!(t.tx.hypot(t.ty) < 1e-12);
    }

    #[test]
    fn estimate_rejects_degenerate_inputs() {
        assert!(matches!(
            estimate_rigid(&[((1.0, 1.0), (0.0, 0.0))]),
            Err(MotionError::NotEnoughPairs(1))
        ));
        let coincident = vec![((1.0, 1.0), (2.0, 2.0)); 3];
        assert!(matches!(estimate_rigid(&coincident), Err(MotionError::DegenerateScatter)));
    }

    #[test]
    fn estimate_recovers_arbitrary_transform_exactly() {
        let t = RigidTransform::from_angle_translation(-0.4, 12.5, -3.25);
        let moving = [(0.0, 0.0), (10.0, 2.0), (-4.0, 7.0), (3.0, 3.0)];
        let pairs: Vec<_> = moving.iter().map(|&p| (t.apply(p), p)).collect();
        let est = estimate_rigid(&pairs).unwrap();
        assert_close(est.angle(), t.angle(), 1e-9);
        assert_close(est.tx, t.tx, 1e-9);
        assert_close(est.ty, t.ty, 1e-9);
    }

    #[test]
    fn length_preservation() {
        let t = RigidTransform::from_angle_translation(2.1, -4.0, 9.0);
        let (p, q) = ((1.5, -2.0), (7.0, 3.0));
        let (tp, tq) = (t.apply(p), t.apply(q));
        let d0 = (p.0 - q.0).hypot(p.1 - q.1);
        let d1 = (tp.0 - tq.0).hypot(tp.1 - tq.1);
        assert_close(d0, d1, 1e-9);
    }

    #[test]
    fn msac_noiseless_translation() {
        let t = RigidTransform::translation(5.0, 0.0);
        let matches: Vec<Correspondence> = (0..50)
            .map(|i| {
                let p = (i as f64 * 1.7, (i % 7) as f64 * 2.3);
                (t.apply(p), p)
            })
            .collect();
        let res = estimate_msac(&matches, &MsacParams::default());
        assert!(!res.fallback);
        assert_close(res.transform.angle(), 0.0, 1e-9);
        assert_close(res.transform.tx, 5.0, 1e-9);
        assert_close(res.transform.ty, 0.0, 1e-9);
        assert!(res.cost < 1e-9);
        assert!(res.inlier_mask.iter().all(|&m| m));
    }

    #[test]
    fn msac_single_match_falls_back() {
        let res = estimate_msac(&[((0.0, 0.0), (1.0, 1.0))], &MsacParams::default());
        assert!(res.fallback);
        assert!(res.transform.is_identity());
    }

    #[test]
    fn msac_deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let t = RigidTransform::from_angle_translation(0.02, 3.0, 1.0);
        let matches: Vec<Correspondence> = (0..80)
            .map(|_| {
                let p = (rng.random_range(0.0..200.0), rng.random_range(0.0..200.0));
                if rng.random_bool(0.3) {
                    ((rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)), p)
                } else {
                    let (fx, fy) = t.apply(p);
                    ((fx + rng.random_range(-0.2..0.2), fy + rng.random_range(-0.2..0.2)), p)
                }
            })
            .collect();
        let params = MsacParams { seed: 7, ..Default::default() };
        let a = estimate_msac(&matches, &params);
        let b = estimate_msac(&matches, &params);
        assert_eq!(a.transform, b.transform);
        assert_eq!(a.inlier_mask, b.inlier_mask);
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        assert_eq!(a.iterations_used, b.iterations_used);
    }

    #[test]
    fn msac_cost_bounded_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let matches: Vec<Correspondence> = (0..40)
            .map(|_| {
                (
                    (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
                    (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
                )
            })
            .collect();
        let params = MsacParams { seed: 1, ..Default::default() };
        let res = estimate_msac(&matches, &params);
        let t2 = params.threshold_px * params.threshold_px;
        assert!(res.cost <= matches.len() as f64 * t2 + 1e-12);
        let (recost, remask, _) = score_model(&res.transform, &matches, t2);
        assert_eq!(res.cost.to_bits(), recost.to_bits());
        assert_eq!(res.inlier_mask, remask);
    }

    #[test]
    fn msac_recovers_under_outliers() {
        let truth = RigidTransform::from_angle_translation(2f64.to_radians(), 3.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut matches = Vec::new();
        for _ in 0..70 {
            let p = (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0));
            let (fx, fy) = truth.apply(p);
            let mut noise = || {
                // Box-Muller for sigma = 0.3 px.
                let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                0.3 * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            };
            let (nx, ny) = (noise(), noise());
            matches.push(((fx + nx, fy + ny), p));
        }
        for _ in 0..30 {
            matches.push((
                (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0)),
                (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0)),
            ));
        }
        let res = estimate_msac(&matches, &MsacParams { seed: 5, ..Default::default() });
        assert!(!res.fallback);
        assert!((res.transform.angle() - truth.angle()).abs() < 0.3f64.to_radians());
        assert!((res.transform.tx - truth.tx).abs() < 0.3);
        assert!((res.transform.ty - truth.ty).abs() < 0.3);
        let flagged = res.inlier_mask[..70].iter().filter(|&&m| m).count();
        assert!(flagged >= 65, "only {flagged} of 70 true inliers flagged");
    }
}
