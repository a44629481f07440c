//! Nearest-neighbor discretization of a registration into anchors.
//!
//! After CPD, every deformed polycube point sits near the input surface.
//! The correspondence map pins each one to its nearest surface sample and
//! records that sample's `(face_id, barycentric)` provenance, giving an
//! exact, indexable handle back onto the original triangle mesh. The map
//! serializes to an ASCII table, one line per polycube point.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::RegisterError;
use crate::geomio::{ConditionCloud, PolycubeCloud};
use crate::spatial::UniformGrid;

/// Where one polycube point lands on the original surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    /// Index of the nearest sample in the condition cloud.
    pub ori_index: usize,
    /// That sample's source triangle.
    pub face_id: usize,
    /// That sample's barycentric coordinates on the triangle.
    pub bary: [f64; 3],
    /// Euclidean distance from the deformed point to the sample.
    pub residual: f64,
}

/// One anchor per polycube point, in cloud order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    anchors: Vec<Anchor>,
}

impl CorrespondenceMap {
    pub fn new(anchors: Vec<Anchor>) -> Self {
        CorrespondenceMap { anchors }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }
}

/// Maps every deformed polycube point to its nearest condition sample.
///
/// `deformed` must be the CPD output for `poly`, already in the condition
/// cloud's frame. Equidistant samples resolve to the lower index.
pub fn build_correspondence(
    poly: &PolycubeCloud,
    deformed: &[[f64; 3]],
    ori: &ConditionCloud,
) -> Result<CorrespondenceMap, RegisterError> {
    if ori.is_empty() {
        return Err(RegisterError::BadArgument(
            "condition cloud is empty; nothing to anchor to".into(),
        ));
    }
    if poly.len() != deformed.len() {
        return Err(RegisterError::BadArgument(format!(
            "{} polycube points but {} deformed points",
            poly.len(),
            deformed.len()
        )));
    }
    let grid = UniformGrid::build_auto(ori.points())?;
    let anchors = deformed
        .iter()
        .map(|&p| {
            let (j, d) = grid.nearest_l2(p, None).expect("condition cloud is nonempty");
            Anchor {
                ori_index: j,
                face_id: ori.face_id()[j],
                bary: ori.bary()[j],
                residual: d,
            }
        })
        .collect();
    Ok(CorrespondenceMap { anchors })
}

/// Writes the map as an ASCII table.
///
/// Header `corr <count>`, then one line per polycube point:
/// `ori_index face_id b0 b1 b2 residual`. Floats use the shortest
/// representation that round-trips exactly.
pub fn save_correspondence(map: &CorrespondenceMap, path: &Path) -> Result<(), RegisterError> {
    let mut out = String::new();
    writeln!(out, "corr {}", map.len()).expect("string write");
    for a in &map.anchors {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            a.ori_index, a.face_id, a.bary[0], a.bary[1], a.bary[2], a.residual
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a map written by [`save_correspondence`].
pub fn load_correspondence(path: &Path) -> Result<CorrespondenceMap, RegisterError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| RegisterError::Parse { line: 1, msg: "empty file".into() })?;
    let count: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["corr", n] => n.parse().map_err(|_| RegisterError::Parse {
            line: 1,
            msg: format!("bad count {n:?}"),
        })?,
        _ => {
            return Err(RegisterError::Parse {
                line: 1,
                msg: format!("expected `corr <count>`, got {header:?}"),
            })
        }
    };
    let mut anchors = Vec::with_capacity(count);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(RegisterError::Parse {
                line: line_no,
                msg: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|_| RegisterError::Parse {
                line: line_no,
                msg: format!("bad index {s:?}"),
            })
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| RegisterError::Parse {
                    line: line_no,
                    msg: format!("bad number {s:?}"),
                })
        };
        let anchor = Anchor {
            ori_index: parse_usize(fields[0])?,
            face_id: parse_usize(fields[1])?,
            bary: [parse_f64(fields[2])?, parse_f64(fields[3])?, parse_f64(fields[4])?],
            residual: parse_f64(fields[5])?,
        };
        if anchor.residual < 0.0 {
            return Err(RegisterError::Parse {
                line: line_no,
                msg: format!("negative residual {}", anchor.residual),
            });
        }
        anchors.push(anchor);
    }
    if anchors.len() != count {
        return Err(RegisterError::Parse {
            line: 1,
            msg: format!("header says {count} rows, file has {}", anchors.len()),
        });
    }
    Ok(CorrespondenceMap { anchors })
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                [
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                ]
            })
            .collect()
    }

    fn condition_cloud(points: Vec<[f64; 3]>) -> ConditionCloud {
        let n = points.len();
        let face_id: Vec<usize> = (0..n).map(|i| i % 7).collect();
        let bary = vec![[0.5, 0.25, 0.25]; n];
        ConditionCloud::new(points, face_id, bary).unwrap()
    }

    fn poly_cloud(points: Vec<[f64; 3]>) -> PolycubeCloud {
        let n = points.len();
        PolycubeCloud::new(points, vec![[1.0, 0.0, 0.0]; n]).unwrap()
    }

    #[test]
    fn exact_overlap_maps_each_point_to_itself() {
        let pts = random_points(32, 3);
        let ori = condition_cloud(pts.clone());
        let poly = poly_cloud(pts.clone());
        let map = build_correspondence(&poly, &pts, &ori).unwrap();
        assert_eq!(map.len(), 32);
        for (i, a) in map.anchors().iter().enumerate() {
            assert_eq!(a.ori_index, i);
            assert_eq!(a.residual, 0.0);
            assert_eq!(a.face_id, ori.face_id()[i]);
            assert_eq!(a.bary, ori.bary()[i]);
        }
    }

    #[test]
    fn equidistant_samples_resolve_to_lower_index() {
        let ori = condition_cloud(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let poly = poly_cloud(vec![[0.0, 0.0, 0.0]]);
        let map = build_correspondence(&poly, &[[0.0, 0.0, 0.0]], &ori).unwrap();
        assert_eq!(map.anchors()[0].ori_index, 0);
        assert_eq!(map.anchors()[0].residual, 1.0);
    }

    #[test]
    fn matches_brute_force_nearest_neighbor() {
        let ori_pts = random_points(256, 5);
        let ori = condition_cloud(ori_pts.clone());
        let query = random_points(100, 6);
        let poly = poly_cloud(query.clone());
        let map = build_correspondence(&poly, &query, &ori).unwrap();
        for (q, a) in query.iter().zip(map.anchors()) {
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, p) in ori_pts.iter().enumerate() {
                let dx = q[0] - p[0];
                let dy = q[1] - p[1];
                let dz = q[2] - p[2];
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                if d < best.1 || (d == best.1 && j < best.0) {
                    best = (j, d);
                }
            }
            assert_eq!(a.ori_index, best.0);
            assert_eq!(a.residual, best.1);
        }
    }

    #[test]
    fn empty_condition_cloud_rejected() {
        let ori = ConditionCloud::new(vec![], vec![], vec![]).unwrap();
        let poly = poly_cloud(vec![[0.0; 3]]);
        assert!(matches!(
            build_correspondence(&poly, &[[0.0; 3]], &ori),
            Err(RegisterError::BadArgument(_))
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        let ori = condition_cloud(random_points(4, 7));
        let poly = poly_cloud(random_points(3, 8));
        assert!(matches!(
            build_correspondence(&poly, &[[0.0; 3]], &ori),
            Err(RegisterError::BadArgument(_))
        ));
    }

    #[test]
    fn save_load_round_trips_exactly() {
        let ori = condition_cloud(random_points(64, 9));
        let query = random_points(40, 10);
        let poly = poly_cloud(query.clone());
        let map = build_correspondence(&poly, &query, &ori).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.corr");
        save_correspondence(&map, &path).unwrap();
        let loaded = load_correspondence(&path).unwrap();
        assert_eq!(loaded, map);
    }

    #[test]
    fn malformed_tables_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.corr");
        for (body, what) in [
            ("", "empty"),
            ("corr x\n", "bad count"),
            ("nope 1\n0 0 0.3 0.3 0.4 0.0\n", "bad header"),
            ("corr 1\n0 0 0.3 0.3 0.4\n", "missing field"),
            ("corr 2\n0 0 0.3 0.3 0.4 0.0\n", "count mismatch"),
            ("corr 1\n0 0 0.3 0.3 0.4 -1.0\n", "negative residual"),
            ("corr 1\n0 0 0.3 nan 0.4 1.0\n", "non-finite bary"),
        ] {
            std::fs::write(&path, body).unwrap();
            assert!(
                matches!(load_correspondence(&path), Err(RegisterError::Parse { .. })),
                "case {what} should fail"
            );
        }
    }
}
