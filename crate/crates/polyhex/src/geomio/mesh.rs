//! Triangle meshes and the OBJ subset used to move them around.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::GeomError;

/// Relative area below which a face counts as degenerate.
const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with derived per-face areas and unit normals.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    areas: Vec<f64>,
    normals: Vec<[f64; 3]>,
    non_manifold: bool,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl TriMesh {
    /// Validates indices, rejects faces whose area is degenerate relative to
    /// the mesh extent, and derives areas and normals.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= vertices.len() {
                    return Err(GeomError::BadMesh(format!(
                        "face {fi} references vertex {v} but mesh has {}",
                        vertices.len()
                    )));
                }
            }
        }

        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let scale = (0..3).map(|k| hi[k] - lo[k]).fold(0.0_f64, f64::max);
        if !scale.is_finite() || scale <= 0.0 {
            return Err(GeomError::BadMesh("mesh has no spatial extent".into()));
        }

        let mut areas = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            let c = cross(
                sub(vertices[f[1]], vertices[f[0]]),
                sub(vertices[f[2]], vertices[f[0]]),
            );
            let area = 0.5 * norm(c);
            if area / (scale * scale) <= DEGENERATE_AREA {
                return Err(GeomError::BadMesh(format!("face {fi} is degenerate")));
            }
            areas.push(area);
            normals.push([c[0] / (2.0 * area), c[1] / (2.0 * area), c[2] / (2.0 * area)]);
        }

        // An edge on more than two faces makes the surface non-manifold;
        // tolerated, but flagged so callers can warn.
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        let non_manifold = edge_count.values().any(|&c| c > 2);

        Ok(TriMesh {
            vertices,
            faces,
            areas,
            normals,
            non_manifold,
        })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Unit face normals, right-hand rule over the vertex order.
    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn non_manifold(&self) -> bool {
        self.non_manifold
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Point at barycentric weights `bary` on face `face_id`.
    pub fn point_on_face(&self, face_id: usize, bary: [f64; 3]) -> [f64; 3] {
        let f = self.faces[face_id];
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = bary[0] * self.vertices[f[0]][k]
                + bary[1] * self.vertices[f[1]][k]
                + bary[2] * self.vertices[f[2]][k];
        }
        p
    }

    /// Closest point on the surface to `p`, as
    /// `(face_id, bary, point, distance)`. Exhaustive over faces; exact
    /// ties go to the lower face id. Barycentric output is clamped
    /// non-negative and renormalized, so it is always a valid convex
    /// combination.
    pub fn closest_point(&self, p: [f64; 3]) -> (usize, [f64; 3], [f64; 3], f64) {
        let mut best: Option<(usize, [f64; 3], [f64; 3], f64)> = None;
        for (fi, f) in self.faces.iter().enumerate() {
            let (q, bary) = closest_point_on_triangle(
                p,
                self.vertices[f[0]],
                self.vertices[f[1]],
                self.vertices[f[2]],
            );
            let d2 = (0..3).map(|k| (p[k] - q[k]) * (p[k] - q[k])).sum::<f64>();
            if best.is_none_or(|b| d2 < b.3) {
                best = Some((fi, bary, q, d2));
            }
        }
        let (fi, mut bary, q, d2) = best.expect("mesh has at least one face");
        let mut sum = 0.0;
        for b in &mut bary {
            *b = b.max(0.0);
            sum += *b;
        }
        for b in &mut bary {
            *b /= sum;
        }
        (fi, bary, q, d2.sqrt())
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn lerp3(a: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]]
}

/// Closest point to `p` on triangle `(a, b, c)` with its barycentric
/// coordinates, by Voronoi-region classification.
fn closest_point_on_triangle(
    p: [f64; 3],
    a: [f64; 3],
    b: [f64; 3],
    c: [f64; 3],
) -> ([f64; 3], [f64; 3]) {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (lerp3(a, ab, v), [1.0 - v, v, 0.0]);
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (lerp3(a, ac, w), [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (lerp3(b, sub(c, b), w), [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let q = [
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ];
    (q, [1.0 - v - w, v, w])
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, GeomError> {
    tok.parse().map_err(|_| GeomError::Parse {
        line,
        msg: format!("bad number {tok:?}"),
    })
}

/// Reads the OBJ subset: `v x y z` and `f i j k ...` (1-based indices,
/// `i/t/n` forms accepted, polygons fan-triangulated). Other records are
/// skipped.
pub fn load_mesh(path: &Path) -> Result<TriMesh, GeomError> {
    let text = std::fs::read_to_string(path)?;
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let xyz: Vec<&str> = toks.collect();
                if xyz.len() < 3 {
                    return Err(GeomError::Parse {
                        line,
                        msg: "vertex needs 3 coordinates".into(),
                    });
                }
                vertices.push([
                    parse_f64(xyz[0], line)?,
                    parse_f64(xyz[1], line)?,
                    parse_f64(xyz[2], line)?,
                ]);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| GeomError::Parse {
                        line,
                        msg: format!("bad face index {tok:?}"),
                    })?;
                    if i < 1 {
                        return Err(GeomError::Parse {
                            line,
                            msg: format!("face index {i} (OBJ is 1-based)"),
                        });
                    }
                    idx.push((i - 1) as usize);
                }
                if idx.len() < 3 {
                    return Err(GeomError::Parse {
                        line,
                        msg: "face needs at least 3 vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

/// Writes the same OBJ subset. Coordinates use the shortest representation
/// that round-trips, so save/load is exact.
pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<(), GeomError> {
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v[0], v[1], v[2]).expect("string write");
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Axis-aligned unit cube at the origin: 8 vertices, 12 triangles, outward
/// normals. Shared by tests and the CLI demo path.
pub fn unit_cube() -> TriMesh {
    let vertices = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [1, 2, 6],
        [1, 6, 5],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh::new(vertices, faces).expect("unit cube is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_round_trips_exactly() {
        let mesh = unit_cube();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.obj");
        save_mesh(&mesh, &path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.vertices().len(), 8);
        assert_eq!(back.faces().len(), 12);
        for (a, b) in mesh.vertices().iter().zip(back.vertices()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
        assert_eq!(mesh.faces(), back.faces());
        assert!(!back.non_manifold());
    }

    #[test]
    fn quad_face_becomes_two_triangles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.obj");
        std::fs::write(
            &path,
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nf 1 2 3 4\nf 1 2 5\n",
        )
        .unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.faces().len(), 3);
        assert_eq!(mesh.faces()[0], [0, 1, 2]);
        assert_eq!(mesh.faces()[1], [0, 2, 3]);
    }

    #[test]
    fn zero_face_index_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.obj");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").unwrap();
        match load_mesh(&path) {
            Err(GeomError::Parse { line: 4, msg }) => assert!(msg.contains("1-based")),
            other => panic!("expected parse error at line 4, got {other:?}"),
        }
    }

    #[test]
    fn malformed_vertex_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.obj");
        std::fs::write(&path, "v 0 0 zero\n").unwrap();
        match load_mesh(&path) {
            Err(GeomError::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error at line 1, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_face_index_rejected() {
        let err = TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 3]],
        )
        .unwrap_err();
        assert!(matches!(err, GeomError::BadMesh(_)));
    }

    #[test]
    fn degenerate_face_rejected() {
        let err = TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, GeomError::BadMesh(_)));
    }

    #[test]
    fn non_manifold_edge_sets_flag() {
        // Three triangles share the edge (0, 1).
        let mesh = TriMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, -1.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
        )
        .unwrap();
        assert!(mesh.non_manifold());
    }

    #[test]
    fn areas_and_normals_are_unit_consistent() {
        let mesh = unit_cube();
        assert!((mesh.total_area() - 6.0).abs() < 1e-12);
        for (f, n) in mesh.faces().iter().zip(mesh.normals()) {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-12);
            // Outward: normal points away from the cube center.
            let c = [0.5, 0.5, 0.5];
            let p = mesh.vertices()[f[0]];
            let d: f64 = (0..3).map(|k| (p[k] - c[k]) * n[k]).sum();
            assert!(d > 0.0, "face normal {n:?} points inward");
        }
    }
}
