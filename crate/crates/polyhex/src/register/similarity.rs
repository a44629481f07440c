//! Similarity transforms and coarse ICP alignment.
//!
//! The closed-form fit is the cross-covariance SVD estimator: given paired
//! points it recovers the least-squares scale, rotation, and translation,
//! with a reflection guard that flips the smallest singular direction
//! whenever the unconstrained optimum would be an improper rotation. ICP
//! alternates nearest-neighbor matching against the target cloud with a
//! fresh closed-form fit on the matched pairs.

use nalgebra::{Matrix3, Vector3};

use super::RegisterError;
use crate::spatial::UniformGrid;

/// Tolerance for the rotation invariants (orthonormality, unit determinant).
const ROTATION_TOL: f64 = 1e-9;

/// Scale, rotation, translation: `p -> scale * R * p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl SimilarityTransform {
    /// Validates that `rotation` is orthonormal with determinant +1
    /// (both within 1e-9) and that the scale is finite and positive.
    pub fn new(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, RegisterError> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(RegisterError::BadArgument(format!(
                "scale must be finite and positive, got {scale}"
            )));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if ortho > ROTATION_TOL {
            return Err(RegisterError::BadArgument(format!(
                "rotation is not orthonormal (deviation {ortho:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(RegisterError::BadArgument(format!(
                "rotation determinant is {det}, want +1"
            )));
        }
        Ok(SimilarityTransform { scale, rotation, translation })
    }

    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Applies the transform to one point.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        (self.scale * (self.rotation * Vector3::from(p)) + self.translation).into()
    }

    /// Applies the transform to every point of a cloud.
    pub fn apply_all(&self, pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
        pts.iter().map(|&p| self.apply(p)).collect()
    }

    /// The inverse transform; exact because scale is positive.
    pub fn inverse(&self) -> Self {
        let inv_scale = 1.0 / self.scale;
        let rot_t = self.rotation.transpose();
        SimilarityTransform {
            scale: inv_scale,
            rotation: rot_t,
            translation: -inv_scale * (rot_t * self.translation),
        }
    }

    /// Composition `self * other`: applies `other` first, then `self`.
    pub fn after(&self, other: &Self) -> Self {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }
}

/// Closed-form similarity fit between paired points: finds `(s, R, t)`
/// minimizing `sum_i |dst_i - (s R src_i + t)|^2`.
///
/// With `with_scale = false` the scale is pinned to 1 (strict rigid fit).
/// The reflection guard flips the sign of the smallest singular direction
/// whenever the cross-covariance SVD would otherwise produce `det R = -1`,
/// so the result is always a proper rotation.
pub fn similarity_from_correspondences(
    src: &[[f64; 3]],
    dst: &[[f64; 3]],
    with_scale: bool,
) -> Result<SimilarityTransform, RegisterError> {
    if src.is_empty() || src.len() != dst.len() {
        return Err(RegisterError::BadArgument(format!(
            "need equal nonempty point lists, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let mu_src = centroid(src);
    let mu_dst = centroid(dst);
    let mut cross = Matrix3::zeros();
    let mut var_src = 0.0;
    for (p, q) in src.iter().zip(dst) {
        let x = Vector3::from(*p) - mu_src;
        let y = Vector3::from(*q) - mu_dst;
        cross += y * x.transpose();
        var_src += x.norm_squared();
    }
    cross /= n;
    var_src /= n;
    if var_src <= 1e-24 * (1.0 + mu_src.norm_squared()) {
        return Err(RegisterError::RankDeficient(
            "all source points are identical".into(),
        ));
    }
    let svd = cross.svd(true, true);
    let u = svd.u.ok_or_else(|| RegisterError::Numeric("SVD failed to produce U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| RegisterError::Numeric("SVD failed to produce V".into()))?;
    let d = svd.singular_values;
    // Singular values are sorted descending, so index 2 is the smallest
    // direction; flipping it is the minimal-cost way back to det +1.
    let flip = if u.determinant() * v_t.determinant() < 0.0 { -1.0 } else { 1.0 };
    let mut s_mat = Matrix3::identity();
    s_mat[(2, 2)] = flip;
    let rotation = u * s_mat * v_t;
    let scale = if with_scale {
        let s = (d[0] + d[1] + flip * d[2]) / var_src;
        if !s.is_finite() || s <= 0.0 {
            return Err(RegisterError::RankDeficient(format!(
                "correspondence supports no positive scale (got {s})"
            )));
        }
        s
    } else {
        1.0
    };
    let translation = mu_dst - scale * (rotation * mu_src);
    SimilarityTransform::new(scale, rotation, translation)
}

/// Coarse similarity alignment of `src` onto `dst` by ICP.
///
/// The initial estimate shifts centroids onto each other and matches RMS
/// radii with an identity rotation. Each round then matches every source
/// point to its nearest target (Euclidean, current transform applied) and
/// refits the similarity on those pairs from scratch, so the returned
/// transform is always a single closed-form fit. With `icp_iters = 0` the
/// initial estimate is returned as-is.
pub fn rigid_align(
    src: &[[f64; 3]],
    dst: &[[f64; 3]],
    icp_iters: usize,
) -> Result<SimilarityTransform, RegisterError> {
    if src.is_empty() || dst.is_empty() {
        return Err(RegisterError::BadArgument(format!(
            "both clouds must be nonempty, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let mu_src = centroid(src);
    let mu_dst = centroid(dst);
    let rms_src = rms_radius(src, mu_src);
    let rms_dst = rms_radius(dst, mu_dst);
    if rms_src <= 1e-24 * (1.0 + mu_src.norm_squared()) {
        return Err(RegisterError::RankDeficient(
            "all source points are identical".into(),
        ));
    }
    let scale0 = if rms_dst > 0.0 { rms_dst / rms_src } else { 1.0 };
    let mut transform = SimilarityTransform::new(
        scale0,
        Matrix3::identity(),
        mu_dst - scale0 * mu_src,
    )?;
    let grid = UniformGrid::build_auto(dst)?;
    for _ in 0..icp_iters {
        let matched: Vec<[f64; 3]> = src
            .iter()
            .map(|&p| {
                let q = transform.apply(p);
                let (j, _) = grid.nearest_l2(q, None).expect("dst is nonempty");
                dst[j]
            })
            .collect();
        transform = similarity_from_correspondences(src, &matched, true)?;
    }
    Ok(transform)
}

fn centroid(pts: &[[f64; 3]]) -> Vector3<f64> {
    let mut sum = Vector3::zeros();
    for p in pts {
        sum += Vector3::from(*p);
    }
    sum / pts.len() as f64
}

fn rms_radius(pts: &[[f64; 3]], mu: Vector3<f64>) -> f64 {
    let ms: f64 = pts
        .iter()
        .map(|p| (Vector3::from(*p) - mu).norm_squared())
        .sum::<f64>()
        / pts.len() as f64;
    ms.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect()
    }

    fn example_transform() -> SimilarityTransform {
        // Rotation kept moderate (about 12 degrees total) so centroid-
        // initialized ICP stays in the true optimum's basin; large
        // rotations need a global initializer, which is out of scope.
        let rot = nalgebra::Rotation3::from_euler_angles(0.12, -0.15, 0.1);
        SimilarityTransform::new(1.7, *rot.matrix(), Vector3::new(0.3, -1.2, 2.0)).unwrap()
    }

    fn transforms_close(a: &SimilarityTransform, b: &SimilarityTransform, tol: f64) -> bool {
        (a.scale() - b.scale()).abs() <= tol
            && (a.rotation() - b.rotation()).norm() <= tol
            && (a.translation() - b.translation()).norm() <= tol
    }

    #[test]
    fn rotation_invariants_enforced() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 2.0;
        assert!(matches!(
            SimilarityTransform::new(1.0, m, Vector3::zeros()),
            Err(RegisterError::BadArgument(_))
        ));
        // Orthonormal but improper: a reflection is rejected.
        let mut refl = Matrix3::identity();
        refl[(2, 2)] = -1.0;
        assert!(matches!(
            SimilarityTransform::new(1.0, refl, Vector3::zeros()),
            Err(RegisterError::BadArgument(_))
        ));
        assert!(SimilarityTransform::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn inverse_and_composition_round_trip() {
        let t = example_transform();
        let inv = t.inverse();
        let composed = inv.after(&t);
        for &p in &random_cloud(16, 3) {
            let q = composed.apply(p);
            for a in 0..3 {
                assert!((q[a] - p[a]).abs() < 1e-12);
            }
        }
        assert!(transforms_close(&composed, &SimilarityTransform::identity(), 1e-12));
    }

    #[test]
    fn fit_recovers_known_similarity_exactly() {
        let src = random_cloud(64, 5);
        let t = example_transform();
        let dst = t.apply_all(&src);
        let fit = similarity_from_correspondences(&src, &dst, true).unwrap();
        assert!(transforms_close(&fit, &t, 1e-9));
        // Post-fit residual is numerically zero.
        for (p, q) in src.iter().zip(&dst) {
            let r = fit.apply(*p);
            let err = (Vector3::from(r) - Vector3::from(*q)).norm();
            assert!(err < 1e-9);
        }
    }

    #[test]
    fn fixed_scale_fit_pins_scale_to_one() {
        let src = random_cloud(32, 7);
        let rot = nalgebra::Rotation3::from_euler_angles(0.1, 0.2, -0.3);
        let t = SimilarityTransform::new(1.0, *rot.matrix(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let dst = t.apply_all(&src);
        let fit = similarity_from_correspondences(&src, &dst, false).unwrap();
        assert_eq!(fit.scale(), 1.0);
        assert!(transforms_close(&fit, &t, 1e-9));
    }

    #[test]
    fn reflection_guard_keeps_determinant_positive() {
        // Mirrored correspondences: the unconstrained optimum is a
        // reflection, so the guard must kick in.
        let src = random_cloud(48, 9);
        let dst: Vec<[f64; 3]> = src.iter().map(|p| [-p[0], p[1], p[2]]).collect();
        let fit = similarity_from_correspondences(&src, &dst, true).unwrap();
        let det = fit.rotation().determinant();
        assert!((det - 1.0).abs() < 1e-9);
        let ortho = (fit.rotation().transpose() * fit.rotation() - Matrix3::identity()).norm();
        assert!(ortho < 1e-9);
    }

    #[test]
    fn identical_source_points_are_rank_deficient() {
        let src = vec![[1.0, 2.0, 3.0]; 10];
        let dst = random_cloud(10, 11);
        assert!(matches!(
            similarity_from_correspondences(&src, &dst, true),
            Err(RegisterError::RankDeficient(_))
        ));
        assert!(matches!(
            rigid_align(&src, &dst, 3),
            Err(RegisterError::RankDeficient(_))
        ));
    }

    #[test]
    fn align_identical_clouds_gives_identity() {
        let src = random_cloud(128, 13);
        let t = rigid_align(&src, &src, 3).unwrap();
        assert!(transforms_close(&t, &SimilarityTransform::identity(), 1e-9));
    }

    #[test]
    fn icp_recovers_moderate_similarity() {
        let src = random_cloud(256, 17);
        let truth = example_transform();
        let dst = truth.apply_all(&src);
        let fit = rigid_align(&src, &dst, 20).unwrap();
        assert!(
            transforms_close(&fit, &truth, 1e-6),
            "scale {} vs {}, rot diff {:.3e}, trans diff {:.3e}",
            fit.scale(),
            truth.scale(),
            (fit.rotation() - truth.rotation()).norm(),
            (fit.translation() - truth.translation()).norm()
        );
        let mut sq = 0.0;
        for (p, q) in src.iter().zip(&dst) {
            let r = fit.apply(*p);
            sq += (Vector3::from(r) - Vector3::from(*q)).norm_squared();
        }
        let rmse = (sq / src.len() as f64).sqrt();
        assert!(rmse < 1e-6, "post-alignment RMSE {rmse}");
    }

    #[test]
    fn alignment_is_left_invariant_under_target_motion() {
        // Aligning to a moved target, then undoing the motion, matches
        // aligning to the original target (noiseless case).
        let src = random_cloud(96, 19);
        let truth = example_transform();
        let dst = truth.apply_all(&src);
        let a = rigid_align(&src, &dst, 10).unwrap();
        let rot = nalgebra::Rotation3::from_euler_angles(-0.2, 0.15, 0.1);
        let extra =
            SimilarityTransform::new(0.8, *rot.matrix(), Vector3::new(-1.0, 0.4, 0.9)).unwrap();
        let moved = extra.apply_all(&dst);
        let b = rigid_align(&src, &moved, 10).unwrap();
        let undone = extra.inverse().after(&b);
        assert!(transforms_close(&undone, &a, 1e-6));
    }

    #[test]
    fn zero_iterations_returns_centroid_scale_estimate() {
        let src = random_cloud(64, 23);
        // Pure scale + shift: the initial estimate is already exact.
        let truth = SimilarityTransform::new(
            2.5,
            Matrix3::identity(),
            Vector3::new(4.0, -1.0, 0.5),
        )
        .unwrap();
        let dst = truth.apply_all(&src);
        let est = rigid_align(&src, &dst, 0).unwrap();
        assert!(transforms_close(&est, &truth, 1e-9));
    }

    #[test]
    fn empty_clouds_rejected() {
        let pts = random_cloud(4, 29);
        assert!(matches!(
            rigid_align(&[], &pts, 1),
            Err(RegisterError::BadArgument(_))
        ));
        assert!(matches!(
            rigid_align(&pts, &[], 1),
            Err(RegisterError::BadArgument(_))
        ));
        assert!(matches!(
            similarity_from_correspondences(&pts, &pts[..2], true),
            Err(RegisterError::BadArgument(_))
        ));
    }
}
