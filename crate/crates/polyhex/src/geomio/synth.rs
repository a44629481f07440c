//! Synthetic paired shapes: an integer-grid box union (the polycube ground
//! truth) and its warped, rotated surface mesh (the CAD-like input).
//!
//! The warp is a trigonometric displacement with off-diagonal Jacobian
//! entries bounded below 1, so it is bijective and cannot fold the surface;
//! the rotation hides the axis alignment the pipeline has to recover.

use std::collections::{HashMap, HashSet};

use nalgebra::Rotation3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::PolycubeCloud;
use super::mesh::TriMesh;
use super::GeomError;

/// Upper bound on amplitude * 2 pi * frequency, the warp's maximum slope.
pub const MAX_WARP_SLOPE: f64 = 0.9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSpec {
    pub origin: [i64; 3],
    pub size: [i64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarpSpec {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: [f64; 3],
}

/// JSON-loadable description of one synthetic shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub warp: Option<WarpSpec>,
    /// Euler angles in radians, applied as Rz(yaw) Ry(pitch) Rx(roll).
    #[serde(default)]
    pub rotation: Option<[f64; 3]>,
    /// Ground-truth cloud size.
    #[serde(default = "default_count")]
    pub count: usize,
    /// Mesh faces per unit edge; higher values follow the warp closer.
    #[serde(default = "default_subdivisions")]
    pub subdivisions: usize,
}

fn default_count() -> usize {
    2048
}

fn default_subdivisions() -> usize {
    1
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<(), GeomError> {
        if self.boxes.is_empty() {
            return Err(GeomError::BadSpec("no boxes".into()));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if b.size.iter().any(|&s| s < 1) {
                return Err(GeomError::BadSpec(format!(
                    "box {i} has non-positive size {:?}",
                    b.size
                )));
            }
        }
        if self.count == 0 {
            return Err(GeomError::BadSpec("count must be >= 1".into()));
        }
        if self.subdivisions == 0 {
            return Err(GeomError::BadSpec("subdivisions must be >= 1".into()));
        }
        if let Some(w) = &self.warp {
            if !(w.amplitude >= 0.0 && w.frequency >= 0.0) {
                return Err(GeomError::BadSpec("warp needs non-negative amplitude and frequency".into()));
            }
            let slope = w.amplitude * std::f64::consts::TAU * w.frequency;
            if slope > MAX_WARP_SLOPE {
                return Err(GeomError::BadSpec(format!(
                    "warp slope {slope:.3} exceeds {MAX_WARP_SLOPE}; the displacement must stay bijective"
                )));
            }
        }
        if let Some(r) = &self.rotation {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(GeomError::BadSpec("non-finite rotation".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GeomError> {
        let spec: ShapeSpec =
            serde_json::from_str(text).map_err(|e| GeomError::BadSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// One boundary unit square of the voxel union: lowest corner, face axis,
/// outward sign.
#[derive(Debug, Clone, Copy)]
struct BoundarySquare {
    corner: [i64; 3],
    axis: usize,
    positive: bool,
}

impl BoundarySquare {
    /// In-plane axes ordered so that u cross v is the outward normal.
    fn frame(&self) -> (usize, usize) {
        let u = (self.axis + 1) % 3;
        let v = (self.axis + 2) % 3;
        if self.positive {
            (u, v)
        } else {
            (v, u)
        }
    }

    fn normal(&self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis] = if self.positive { 1.0 } else { -1.0 };
        n
    }

    /// Point at in-square coordinates `(a, b)` in `[0,1]^2`.
    fn point(&self, a: f64, b: f64) -> [f64; 3] {
        let (u, v) = self.frame();
        let mut p = [
            self.corner[0] as f64,
            self.corner[1] as f64,
            self.corner[2] as f64,
        ];
        if self.positive {
            p[self.axis] += 1.0;
        }
        p[u] += a;
        p[v] += b;
        p
    }
}

fn voxel_set(spec: &ShapeSpec) -> HashSet<[i64; 3]> {
    let mut set = HashSet::new();
    for b in &spec.boxes {
        for x in b.origin[0]..b.origin[0] + b.size[0] {
            for y in b.origin[1]..b.origin[1] + b.size[1] {
                for z in b.origin[2]..b.origin[2] + b.size[2] {
                    set.insert([x, y, z]);
                }
            }
        }
    }
    set
}

fn boundary_squares(voxels: &HashSet<[i64; 3]>) -> Vec<BoundarySquare> {
    let mut squares = Vec::new();
    let mut sorted: Vec<&[i64; 3]> = voxels.iter().collect();
    sorted.sort();
    for v in sorted {
        for axis in 0..3 {
            for (positive, step) in [(true, 1i64), (false, -1i64)] {
                let mut nb = *v;
                nb[axis] += step;
                if !voxels.contains(&nb) {
                    squares.push(BoundarySquare {
                        corner: *v,
                        axis,
                        positive,
                    });
                }
            }
        }
    }
    squares
}

fn apply_warp(p: [f64; 3], w: &WarpSpec) -> [f64; 3] {
    let f = std::f64::consts::TAU * w.frequency;
    [
        p[0] + w.amplitude * (f * p[1] + w.phase[0]).sin(),
        p[1] + w.amplitude * (f * p[2] + w.phase[1]).sin(),
        p[2] + w.amplitude * (f * p[0] + w.phase[2]).sin(),
    ]
}

/// Builds the paired sample: the warped+rotated surface mesh of the box
/// union, and a uniform sample of the *unwarped* union surface with outward
/// normals (the generation target).
pub fn synth_pair(spec: &ShapeSpec, seed: u64) -> Result<(TriMesh, PolycubeCloud), GeomError> {
    spec.validate()?;
    let voxels = voxel_set(spec);
    let squares = boundary_squares(&voxels);
    debug_assert!(!squares.is_empty());

    // Mesh: subdivide each square s x s, dedupe shared vertices by their
    // exact grid fraction, then displace.
    let s = spec.subdivisions;
    let mut key_to_index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for sq in &squares {
        let mut corner_index = |ia: usize, ib: usize| -> usize {
            let p = sq.point(ia as f64 / s as f64, ib as f64 / s as f64);
            // All coordinates are multiples of 1/s; scale to integers.
            let key = [
                (p[0] * s as f64).round() as i64,
                (p[1] * s as f64).round() as i64,
                (p[2] * s as f64).round() as i64,
            ];
            *key_to_index.entry(key).or_insert_with(|| {
                vertices.push(p);
                vertices.len() - 1
            })
        };
        for ia in 0..s {
            for ib in 0..s {
                let c00 = corner_index(ia, ib);
                let c10 = corner_index(ia + 1, ib);
                let c11 = corner_index(ia + 1, ib + 1);
                let c01 = corner_index(ia, ib + 1);
                faces.push([c00, c10, c11]);
                faces.push([c00, c11, c01]);
            }
        }
    }

    let rot = spec
        .rotation
        .map(|r| Rotation3::from_euler_angles(r[0], r[1], r[2]));
    for v in &mut vertices {
        let mut p = *v;
        if let Some(w) = &spec.warp {
            p = apply_warp(p, w);
        }
        if let Some(r) = &rot {
            let q = r * nalgebra::Point3::new(p[0], p[1], p[2]);
            p = [q.x, q.y, q.z];
        }
        *v = p;
    }
    let mesh = TriMesh::new(vertices, faces)?;

    // Ground truth: every boundary square has unit area, so a uniform square
    // pick plus a uniform in-square offset is area-uniform.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(spec.count);
    let mut normals = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let sq = &squares[rng.random_range(0..squares.len())];
        let a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0);
        points.push(sq.point(a, b));
        normals.push(sq.normal());
    }
    Ok((mesh, PolycubeCloud::new(points, normals)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box_spec() -> ShapeSpec {
        ShapeSpec {
            boxes: vec![BoxSpec {
                origin: [0, 0, 0],
                size: [1, 1, 1],
            }],
            warp: None,
            rotation: None,
            count: 256,
            subdivisions: 1,
        }
    }

    /// V - E + F over the triangle complex; 2 for a sphere-like surface, 0
    /// for a torus-like one.
    fn euler_characteristic(mesh: &TriMesh) -> i64 {
        let mut edges = HashSet::new();
        for f in mesh.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        mesh.vertices().len() as i64 - edges.len() as i64 + mesh.faces().len() as i64
    }

    #[test]
    fn unit_box_identity_is_exactly_cubical() {
        let (mesh, cloud) = synth_pair(&unit_box_spec(), 5).unwrap();
        assert_eq!(mesh.vertices().len(), 8);
        assert_eq!(mesh.faces().len(), 12);
        assert_eq!(euler_characteristic(&mesh), 2);
        for (p, n) in cloud.points().iter().zip(cloud.normals()) {
            // Normal is a signed axis.
            let axis = n.iter().position(|&v| v.abs() == 1.0).unwrap();
            assert!(n.iter().map(|v| v.abs()).sum::<f64>() == 1.0);
            // The face coordinate is exactly 0 or 1; the others lie inside.
            assert!(p[axis] == 0.0 || p[axis] == 1.0);
            for k in 0..3 {
                if k != axis {
                    assert!((0.0..=1.0).contains(&p[k]));
                }
            }
        }
    }

    #[test]
    fn two_box_bar_is_genus_zero() {
        let spec = ShapeSpec {
            boxes: vec![
                BoxSpec {
                    origin: [0, 0, 0],
                    size: [1, 1, 1],
                },
                BoxSpec {
                    origin: [1, 0, 0],
                    size: [1, 1, 1],
                },
            ],
            ..unit_box_spec()
        };
        let (mesh, _) = synth_pair(&spec, 1).unwrap();
        // 2x1x1 bar: 10 boundary squares, 20 triangles.
        assert_eq!(mesh.faces().len(), 20);
        assert_eq!(euler_characteristic(&mesh), 2);
    }

    #[test]
    fn box_ring_is_genus_one() {
        // 3x3x1 plate minus the center voxel.
        let mut boxes = Vec::new();
        for x in 0..3 {
            for y in 0..3 {
                if (x, y) != (1, 1) {
                    boxes.push(BoxSpec {
                        origin: [x, y, 0],
                        size: [1, 1, 1],
                    });
                }
            }
        }
        let spec = ShapeSpec {
            boxes,
            ..unit_box_spec()
        };
        let (mesh, _) = synth_pair(&spec, 1).unwrap();
        assert_eq!(euler_characteristic(&mesh), 0);
    }

    #[test]
    fn warp_and_rotation_move_the_mesh_but_not_the_target() {
        let warped = ShapeSpec {
            warp: Some(WarpSpec {
                amplitude: 0.05,
                frequency: 1.0,
                phase: [0.0, 1.0, 2.0],
            }),
            rotation: Some([0.3, -0.2, 0.15]),
            subdivisions: 2,
            ..unit_box_spec()
        };
        let (mesh_w, cloud_w) = synth_pair(&warped, 9).unwrap();
        let (mesh_i, cloud_i) = synth_pair(&unit_box_spec(), 9).unwrap();
        assert_eq!(cloud_w.points(), cloud_i.points());
        assert_eq!(cloud_w.normals(), cloud_i.normals());
        assert_eq!(mesh_w.faces().len(), 4 * mesh_i.faces().len());
        let (lo, hi) = mesh_w.bbox();
        let (lo_i, hi_i) = mesh_i.bbox();
        assert!(lo != lo_i || hi != hi_i);
    }

    #[test]
    fn overstrong_warp_rejected() {
        let spec = ShapeSpec {
            warp: Some(WarpSpec {
                amplitude: 1.0,
                frequency: 1.0,
                phase: [0.0; 3],
            }),
            ..unit_box_spec()
        };
        assert!(matches!(spec.validate(), Err(GeomError::BadSpec(_))));
    }

    #[test]
    fn degenerate_specs_rejected() {
        let spec = ShapeSpec {
            boxes: vec![],
            ..unit_box_spec()
        };
        assert!(matches!(spec.validate(), Err(GeomError::BadSpec(_))));
        let spec = ShapeSpec {
            boxes: vec![BoxSpec {
                origin: [0, 0, 0],
                size: [1, 0, 1],
            }],
            ..unit_box_spec()
        };
        assert!(matches!(spec.validate(), Err(GeomError::BadSpec(_))));
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let text = r#"{"boxes": [{"origin": [0, 0, 0], "size": [2, 1, 1]}]}"#;
        let spec = ShapeSpec::from_json(text).unwrap();
        assert_eq!(spec.count, 2048);
        assert_eq!(spec.subdivisions, 1);
        assert!(spec.warp.is_none());
        let back = ShapeSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back.boxes[0].size, [2, 1, 1]);
    }

    #[test]
    fn same_seed_same_pair() {
        let spec = ShapeSpec {
            warp: Some(WarpSpec {
                amplitude: 0.03,
                frequency: 2.0,
                phase: [0.5, 0.0, 0.0],
            }),
            ..unit_box_spec()
        };
        let (m1, c1) = synth_pair(&spec, 77).unwrap();
        let (m2, c2) = synth_pair(&spec, 77).unwrap();
        assert_eq!(m1.vertices(), m2.vertices());
        assert_eq!(c1.points(), c2.points());
        let (_, c3) = synth_pair(&spec, 78).unwrap();
        assert_ne!(c1.points(), c3.points());
    }
}
