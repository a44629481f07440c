//! Legacy ASCII VTK export/import and boundary OBJ export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{quality, HexError, HexMesh};

/// VTK cell type id for a hexahedron; its corner order is the crate-wide
/// convention, so cells are written verbatim.
const VTK_HEXAHEDRON: u8 = 12;

/// Writes the mesh as a legacy ASCII VTK unstructured grid with the
/// per-cell scaled Jacobian attached as `CELL_DATA`. The title line
/// records the grid unit so a round trip preserves it.
pub fn export_vtk(hm: &HexMesh, path: &Path) -> Result<(), HexError> {
    let mut text = String::new();
    text.push_str("# vtk DataFile Version 3.0\n");
    writeln!(text, "hex mesh h={}", hm.h()).expect("string write");
    text.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(text, "POINTS {} double", hm.vertex_count()).expect("string write");
    for v in hm.vertices() {
        writeln!(text, "{} {} {}", v[0], v[1], v[2]).expect("string write");
    }
    let c = hm.cell_count();
    writeln!(text, "CELLS {c} {}", c * 9).expect("string write");
    for cell in hm.cells() {
        write!(text, "8").expect("string write");
        for v in cell {
            write!(text, " {v}").expect("string write");
        }
        text.push('\n');
    }
    writeln!(text, "CELL_TYPES {c}").expect("string write");
    for _ in 0..c {
        writeln!(text, "{VTK_HEXAHEDRON}").expect("string write");
    }
    if c > 0 {
        let report = quality(hm);
        writeln!(text, "CELL_DATA {c}").expect("string write");
        text.push_str("SCALARS scaled_jacobian double 1\nLOOKUP_TABLE default\n");
        for j in report.per_cell {
            writeln!(text, "{j}").expect("string write");
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Whitespace tokens paired with their 1-based line numbers.
struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    at: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            for tok in line.split_whitespace() {
                items.push((i + 1, tok));
            }
        }
        Tokens { items, at: 0 }
    }

    fn line(&self) -> usize {
        self.items
            .get(self.at.min(self.items.len().saturating_sub(1)))
            .map_or(1, |t| t.0)
    }

    fn next(&mut self, what: &str) -> Result<&'a str, HexError> {
        let (_, tok) = *self.items.get(self.at).ok_or_else(|| HexError::Parse {
            line: self.line(),
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        self.at += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: &str) -> Result<(), HexError> {
        let line = self.line();
        let tok = self.next(want)?;
        if tok != want {
            return Err(HexError::Parse {
                line,
                msg: format!("expected `{want}`, got `{tok}`"),
            });
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, HexError> {
        let line = self.line();
        let tok = self.next(what)?;
        tok.parse().map_err(|_| HexError::Parse {
            line,
            msg: format!("bad {what}: `{tok}`"),
        })
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.at).map(|t| t.1)
    }
}

/// Reads a file written by [`export_vtk`]: vertices, cells, and the
/// scaled-Jacobian cell data if present. The grid unit comes from the
/// title line, defaulting to 1 for files written by other tools.
pub fn load_vtk(path: &Path) -> Result<(HexMesh, Option<Vec<f64>>), HexError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with("# vtk DataFile") {
        return Err(HexError::Parse {
            line: 1,
            msg: format!("not a VTK file: `{header}`"),
        });
    }
    let title = lines.next().unwrap_or("");
    let h = title
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("h="))
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(1.0);

    let body: String = lines.collect::<Vec<_>>().join("\n");
    let mut t = Tokens::new(&body);
    // Line numbers below are relative to the body (after the two header
    // lines); offset them for reporting.
    let fix = |e: HexError| match e {
        HexError::Parse { line, msg } => HexError::Parse { line: line + 2, msg },
        other => other,
    };
    let mut parse = || -> Result<(HexMesh, Option<Vec<f64>>), HexError> {
        t.expect("ASCII")?;
        t.expect("DATASET")?;
        t.expect("UNSTRUCTURED_GRID")?;
        t.expect("POINTS")?;
        let n: usize = t.number("point count")?;
        let _dtype = t.next("point scalar type")?;
        let mut vertices = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = [0.0f64; 3];
            for c in &mut v {
                *c = t.number("coordinate")?;
            }
            vertices.push(v);
        }
        t.expect("CELLS")?;
        let c: usize = t.number("cell count")?;
        let total: usize = t.number("cell list length")?;
        if total != c * 9 {
            return Err(HexError::Parse {
                line: t.line(),
                msg: format!("hexahedral CELLS must list {} numbers, got {total}", c * 9),
            });
        }
        let mut cells = Vec::with_capacity(c);
        for _ in 0..c {
            let count: usize = t.number("corner count")?;
            if count != 8 {
                return Err(HexError::Parse {
                    line: t.line(),
                    msg: format!("only 8-corner cells supported, got {count}"),
                });
            }
            let mut cell = [0usize; 8];
            for slot in &mut cell {
                *slot = t.number("corner index")?;
            }
            cells.push(cell);
        }
        t.expect("CELL_TYPES")?;
        let ct: usize = t.number("cell type count")?;
        if ct != c {
            return Err(HexError::Parse {
                line: t.line(),
                msg: format!("{ct} cell types for {c} cells"),
            });
        }
        for _ in 0..c {
            let ty: u8 = t.number("cell type")?;
            if ty != VTK_HEXAHEDRON {
                return Err(HexError::Parse {
                    line: t.line(),
                    msg: format!("unsupported cell type {ty}"),
                });
            }
        }
        let mut jacobians = None;
        if t.peek() == Some("CELL_DATA") {
            t.expect("CELL_DATA")?;
            let cd: usize = t.number("cell data count")?;
            t.expect("SCALARS")?;
            let _name = t.next("scalar name")?;
            let _dtype = t.next("scalar type")?;
            let _comps = t.next("component count")?;
            t.expect("LOOKUP_TABLE")?;
            let _table = t.next("lookup table name")?;
            let mut vals = Vec::with_capacity(cd);
            for _ in 0..cd {
                vals.push(t.number("cell scalar")?);
            }
            jacobians = Some(vals);
        }
        let hm = HexMesh::new(vertices, cells, h)?;
        Ok((hm, jacobians))
    };
    parse().map_err(fix)
}

/// Writes the boundary quad shell as a Wavefront OBJ with outward-facing
/// quads. Only boundary vertices are emitted, renumbered in first-use
/// order.
pub fn save_hex_boundary_obj(hm: &HexMesh, path: &Path) -> Result<(), HexError> {
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();
    for quad in hm.boundary_quads() {
        let mut q = [0usize; 4];
        for (slot, &v) in quad.iter().enumerate() {
            let next = order.len();
            let id = *remap.entry(v).or_insert_with(|| {
                order.push(v);
                next
            });
            q[slot] = id;
        }
        quads.push(q);
    }
    let mut text = String::new();
    for &v in &order {
        let p = hm.vertices()[v];
        writeln!(text, "v {} {} {}", p[0], p[1], p[2]).expect("string write");
    }
    for q in &quads {
        writeln!(text, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1)
            .expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::hexgen::{extract_hexes, pillow_boundary, smooth_interior};
    use crate::polycube::testshapes::{box_union, Box3};
    use crate::polycube::VoxelModel;

    fn sample_mesh() -> HexMesh {
        let vm = VoxelModel::new(
            0.5,
            box_union(&[
                Box3 { origin: [0, 0, 0], size: [2, 1, 1] },
                Box3 { origin: [0, 0, 1], size: [1, 1, 1] },
            ]),
        )
        .unwrap();
        extract_hexes(&vm, 2).unwrap()
    }

    #[test]
    fn one_hex_file_has_the_expected_records() {
        let vm = VoxelModel::new(
            1.0,
            box_union(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }]),
        )
        .unwrap();
        let hm = extract_hexes(&vm, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.vtk");
        export_vtk(&hm, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("POINTS 8 double"));
        assert!(text.contains("CELLS 1 9"));
        assert!(text.contains("CELL_TYPES 1"));
        assert!(text.contains("SCALARS scaled_jacobian double 1"));
        // The single axis-aligned cell scores exactly 1.
        assert!(text.trim_end().ends_with('1'));
    }

    #[test]
    fn vtk_round_trips_through_own_reader() {
        let hm = sample_mesh();
        let smoothed = smooth_interior(&pillow_boundary(&hm, 0.2).unwrap(), 5, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.vtk");
        export_vtk(&smoothed, &path).unwrap();
        let (back, jac) = load_vtk(&path).unwrap();
        assert_eq!(back.cells(), smoothed.cells());
        assert_eq!(back.h(), smoothed.h());
        assert_eq!(back.vertex_count(), smoothed.vertex_count());
        for (a, b) in back.vertices().iter().zip(smoothed.vertices()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-6);
            }
        }
        let want = quality(&smoothed).per_cell;
        assert_eq!(jac.unwrap(), want);
    }

    #[test]
    fn empty_mesh_exports_a_valid_file() {
        let hm = HexMesh::new(vec![], vec![], 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.vtk");
        export_vtk(&hm, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 0 double"));
        assert!(text.contains("CELLS 0 0"));
        let (back, jac) = load_vtk(&path).unwrap();
        assert_eq!(back.vertex_count(), 0);
        assert_eq!(back.cell_count(), 0);
        assert!(jac.is_none());
    }

    #[test]
    fn loader_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("", "empty file"),
            ("junk\n", "missing magic"),
            (
                "# vtk DataFile Version 3.0\nt\nASCII\nDATASET POLYDATA\n",
                "wrong dataset",
            ),
            (
                "# vtk DataFile Version 3.0\nt\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 1 double\n0 0\n",
                "truncated points",
            ),
            (
                "# vtk DataFile Version 3.0\nt\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 0 double\nCELLS 1 9\n4 0 1 2 3\n",
                "non-hex cell",
            ),
        ];
        for (text, what) in cases {
            let path = dir.path().join("bad.vtk");
            std::fs::write(&path, text).unwrap();
            assert!(load_vtk(&path).is_err(), "{what} should fail");
        }
    }

    #[test]
    fn boundary_obj_covers_the_shell() {
        let hm = sample_mesh();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shell.obj");
        save_hex_boundary_obj(&hm, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let verts = text.lines().filter(|l| l.starts_with("v ")).count();
        let faces = text.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(verts, hm.boundary_vertex_count());
        assert_eq!(faces, hm.boundary_quads().len());
    }
}
