//! Axis labeling of polycube points.
//!
//! Every point gets the axis direction most aligned with its normal. The
//! generated normals are usually trustworthy; for clouds where they are
//! not, [`estimate_normals`] refits them from positions by local plane
//! fitting and can feed the same labeling.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::PolycubeError;
use crate::geomio::PolycubeCloud;
use crate::spatial::UniformGrid;

/// Neighborhood size for normal re-estimation.
pub const ESTIMATE_NORMALS_K: usize = 12;

/// The six axis directions a polycube face can take.
///
/// The declaration order is the tie-break order everywhere: a normal
/// equally aligned with two directions gets the earlier one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AxisLabel {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl AxisLabel {
    /// All labels in tie-break order.
    pub const ALL: [AxisLabel; 6] = [
        AxisLabel::PosX,
        AxisLabel::NegX,
        AxisLabel::PosY,
        AxisLabel::NegY,
        AxisLabel::PosZ,
        AxisLabel::NegZ,
    ];

    /// The coordinate axis this label lives on: 0, 1, or 2.
    pub fn axis(self) -> usize {
        match self {
            AxisLabel::PosX | AxisLabel::NegX => 0,
            AxisLabel::PosY | AxisLabel::NegY => 1,
            AxisLabel::PosZ | AxisLabel::NegZ => 2,
        }
    }

    /// True for the +X, +Y, +Z half.
    pub fn is_positive(self) -> bool {
        matches!(self, AxisLabel::PosX | AxisLabel::PosY | AxisLabel::PosZ)
    }

    /// Unit direction vector of the label.
    pub fn direction(self) -> [f64; 3] {
        let mut d = [0.0; 3];
        d[self.axis()] = if self.is_positive() { 1.0 } else { -1.0 };
        d
    }

    /// Axis letter for messages: 'x', 'y', or 'z'.
    pub fn axis_char(self) -> char {
        [b'x', b'y', b'z'][self.axis()] as char
    }
}

impl std::fmt::Display for AxisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sign = if self.is_positive() { '+' } else { '-' };
        let axis = [b'X', b'Y', b'Z'][self.axis()] as char;
        write!(f, "{sign}{axis}")
    }
}

/// Labels one normal: the direction maximizing `dot(n, direction)`.
///
/// Scaling the normal does not change the answer, so any nonzero vector
/// works. Ties resolve to the earliest label in [`AxisLabel::ALL`].
pub fn label_normal(n: [f64; 3]) -> Result<AxisLabel, PolycubeError> {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !(len > 1e-12) {
        return Err(PolycubeError::ZeroNormal { index: 0, len });
    }
    let mut best = AxisLabel::PosX;
    let mut best_dot = f64::NEG_INFINITY;
    for label in AxisLabel::ALL {
        let d = label.direction();
        let dot = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
        if dot > best_dot {
            best_dot = dot;
            best = label;
        }
    }
    Ok(best)
}

/// Labels every point of a cloud from its stored normal.
pub fn label_points(cloud: &PolycubeCloud) -> Result<Vec<AxisLabel>, PolycubeError> {
    cloud
        .normals()
        .iter()
        .enumerate()
        .map(|(index, &n)| {
            label_normal(n).map_err(|e| match e {
                PolycubeError::ZeroNormal { len, .. } => PolycubeError::ZeroNormal { index, len },
                other => other,
            })
        })
        .collect()
}

/// Re-estimates outward normals from positions by local plane fitting.
///
/// Each point's `k` nearest neighbors (plus the point itself) feed a
/// covariance whose smallest eigenvector is the plane normal; the sign is
/// chosen to point away from the cloud centroid. This is a fallback for
/// clouds with unreliable normals: it assumes a roughly star-shaped solid
/// and degrades near edges and corners where neighborhoods bend.
pub fn estimate_normals(
    points: &[[f64; 3]],
    k: usize,
) -> Result<Vec<[f64; 3]>, PolycubeError> {
    if points.len() < 2 {
        return Err(PolycubeError::BadArgument(format!(
            "normal estimation needs at least 2 points, got {}",
            points.len()
        )));
    }
    if k == 0 {
        return Err(PolycubeError::BadArgument("neighborhood size k must be positive".into()));
    }
    let grid = UniformGrid::build_auto(points)?;
    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += Vector3::from(*p);
    }
    centroid /= points.len() as f64;

    let mut normals = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        let hood = grid.knearest_l2(p, k.min(points.len() - 1), Some(i));
        let mut mean = Vector3::from(p);
        for &(j, _) in &hood {
            mean += Vector3::from(points[j]);
        }
        mean /= (hood.len() + 1) as f64;
        let mut cov = Matrix3::zeros();
        let d = Vector3::from(p) - mean;
        cov += d * d.transpose();
        for &(j, _) in &hood {
            let d = Vector3::from(points[j]) - mean;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let mut min_idx = 0;
        for a in 1..3 {
            if eig.eigenvalues[a] < eig.eigenvalues[min_idx] {
                min_idx = a;
            }
        }
        let mut n = eig.eigenvectors.column(min_idx).into_owned();
        let norm = n.norm();
        if !(norm > 1e-12) {
            return Err(PolycubeError::ZeroNormal { index: i, len: norm });
        }
        n /= norm;
        if n.dot(&(Vector3::from(p) - centroid)) < 0.0 {
            n = -n;
        }
        normals.push([n[0], n[1], n[2]]);
    }
    Ok(normals)
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::polycube::testshapes::{boundary_cloud, box_union, Box3};

    #[test]
    fn cardinal_normals_get_their_axis() {
        assert_eq!(label_normal([0.0, 0.0, 1.0]).unwrap(), AxisLabel::PosZ);
        assert_eq!(label_normal([0.0, -1.0, 0.0]).unwrap(), AxisLabel::NegY);
        assert_eq!(label_normal([-3.0, 0.0, 0.0]).unwrap(), AxisLabel::NegX);
    }

    #[test]
    fn ties_resolve_in_declaration_order() {
        let s = 1.0 / 2.0f64.sqrt();
        assert_eq!(label_normal([s, s, 0.0]).unwrap(), AxisLabel::PosX);
        assert_eq!(label_normal([0.0, s, s]).unwrap(), AxisLabel::PosY);
        assert_eq!(label_normal([-s, 0.0, s]).unwrap(), AxisLabel::NegX);
    }

    #[test]
    fn zero_normal_is_an_error() {
        assert!(matches!(
            label_normal([0.0, 0.0, 0.0]),
            Err(PolycubeError::ZeroNormal { .. })
        ));
        assert!(matches!(
            label_normal([1e-13, 0.0, 0.0]),
            Err(PolycubeError::ZeroNormal { .. })
        ));
    }

    #[test]
    fn cube_cloud_splits_into_six_equal_groups() {
        // A 2x2x2 cube has 4 boundary squares per face direction.
        let occ = box_union(&[Box3 { origin: [0, 0, 0], size: [2, 2, 2] }]);
        let cloud = boundary_cloud(&occ);
        let labels = label_points(&cloud).unwrap();
        for want in AxisLabel::ALL {
            let count = labels.iter().filter(|&&l| l == want).count();
            assert_eq!(count, 4, "label {want}");
        }
    }

    /// The 24 proper rotations that permute the coordinate axes.
    fn axis_rotations() -> Vec<[[i64; 3]; 3]> {
        let mut out = Vec::new();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for perm in perms {
            for bits in 0..8u32 {
                let mut m = [[0i64; 3]; 3];
                for r in 0..3 {
                    m[r][perm[r]] = if bits & (1 << r) != 0 { -1 } else { 1 };
                }
                // det = sign of permutation times product of signs
                let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
                if det == 1 {
                    out.push(m);
                }
            }
        }
        assert_eq!(out.len(), 24);
        out
    }

    fn rotate(m: &[[i64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r] += m[r][c] as f64 * v[c];
            }
        }
        out
    }

    #[test]
    fn labels_permute_under_exact_axis_rotations() {
        // Tie-free normals only: the tie rule is order-based, not
        // rotation-equivariant, and ties have measure zero.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rotations = axis_rotations();
        for _ in 0..64 {
            let n = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let Ok(label) = label_normal(n) else { continue };
            for m in &rotations {
                let rotated_label = label_normal(rotate(m, n)).unwrap();
                let expected = label_normal(rotate(m, label.direction())).unwrap();
                assert_eq!(rotated_label, expected);
            }
        }
    }

    #[test]
    fn estimated_normals_label_a_cube_correctly() {
        // 5x5 points per face of a side-4 cube, exact plane coordinates.
        let occ = box_union(&[Box3 { origin: [0, 0, 0], size: [4, 4, 4] }]);
        let cloud = boundary_cloud(&occ);
        let true_labels = label_points(&cloud).unwrap();
        let est = estimate_normals(cloud.points(), ESTIMATE_NORMALS_K).unwrap();
        let mut correct = 0;
        for (i, (&n, &want)) in est.iter().zip(&true_labels).enumerate() {
            if label_normal(n).unwrap() == want {
                correct += 1;
            } else {
                // Mislabeling is only tolerable near edges, where the
                // neighborhood bends around the cube.
                let p = cloud.points()[i];
                let u = (want.axis() + 1) % 3;
                let v = (want.axis() + 2) % 3;
                let edge_dist = [p[u], 4.0 - p[u], p[v], 4.0 - p[v]]
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                assert!(edge_dist <= 1.0, "interior point {i} mislabeled");
            }
        }
        assert!(
            correct as f64 >= 0.8 * est.len() as f64,
            "only {correct}/{} labels correct",
            est.len()
        );
    }

    #[test]
    fn estimate_normals_validates_inputs() {
        assert!(matches!(
            estimate_normals(&[[0.0; 3]], 12),
            Err(PolycubeError::BadArgument(_))
        ));
        assert!(matches!(
            estimate_normals(&[[0.0; 3], [1.0, 0.0, 0.0]], 0),
            Err(PolycubeError::BadArgument(_))
        ));
    }
}
