//! Hexahedral mesh extraction and finishing.
//!
//! The voxel model is split into a structured all-hex mesh (`extract_hexes`),
//! whose boundary vertices are pulled back onto the input surface through
//! the registration anchors (`anchor_boundary`). Interior vertices then
//! relax by damped Laplacian smoothing with the boundary held fixed
//! (`smooth_interior`); an optional single pillowing layer inserts one hex
//! sheet under every boundary quad to give the surface its own gradation
//! layer (`pillow_boundary`). Element quality is reported as the scaled
//! Jacobian (`quality`) and meshes travel as legacy ASCII VTK files.
//!
//! One corner convention is used everywhere, matching VTK cell type 12:
//! corners 0–3 are the bottom quad counter-clockwise viewed from the top
//! side, corners 4–7 the top quad aligned above them. This single ordering
//! avoids permutation bugs between construction, quality evaluation, and
//! export.

use thiserror::Error;

mod anchor;
mod extract;
mod quality;
mod smooth;
mod vtk;

pub use anchor::{anchor_boundary, AnchorConfig};
pub use extract::extract_hexes;
pub use quality::{quality, QualityReport};
pub use smooth::{pillow_boundary, smooth_interior};
pub use vtk::{export_vtk, load_vtk, save_hex_boundary_obj};

use crate::spatial::SpatialError;

#[derive(Debug, Error)]
pub enum HexError {
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("invalid hex mesh: {0}")]
    BadMesh(String),
    #[error("pillowing would invert {inverted} cell(s); layer rejected")]
    Pillow { inverted: usize },
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// The six quad faces of a hexahedron in local corner indices, oriented
/// outward (right-hand-rule normal leaves the cell).
pub(crate) const HEX_FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1], // bottom
    [4, 5, 6, 7], // top
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
];

/// The twelve edges of a hexahedron in local corner indices.
pub(crate) const HEX_EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// For each corner, the three edge-adjacent corners ordered so that the
/// unit edge vectors toward them form a right-handed frame on the
/// reference cube (determinant +1 at every corner of an axis-aligned
/// cell).
pub(crate) const CORNER_NEIGHBORS: [[usize; 3]; 8] = [
    [1, 3, 4],
    [2, 0, 5],
    [3, 1, 6],
    [0, 2, 7],
    [7, 5, 0],
    [4, 6, 1],
    [5, 7, 2],
    [6, 4, 3],
];

/// A boundary vertex's home on the input surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceAnchor {
    pub face_id: usize,
    pub bary: [f64; 3],
}

/// Structured hexahedral mesh.
///
/// Invariants enforced at construction: all cell indices valid and
/// distinct within a cell, and every quad face is shared by at most two
/// cells — faces on exactly one cell form the boundary, whose vertices
/// are flagged.
#[derive(Debug, Clone)]
pub struct HexMesh {
    vertices: Vec<[f64; 3]>,
    cells: Vec<[usize; 8]>,
    boundary: Vec<bool>,
    anchors: Vec<Option<SurfaceAnchor>>,
    /// Outward-oriented quads incident to exactly one cell.
    boundary_quads: Vec<[usize; 4]>,
    /// Voxel grid unit at extraction; pillowing thickness scales with it.
    h: f64,
}

impl HexMesh {
    /// Builds a mesh, derives the boundary, and checks the invariants.
    /// All anchors start unset.
    pub fn new(
        vertices: Vec<[f64; 3]>,
        cells: Vec<[usize; 8]>,
        h: f64,
    ) -> Result<Self, HexError> {
        if !h.is_finite() || h <= 0.0 {
            return Err(HexError::BadArgument(format!(
                "grid unit must be finite and positive, got {h}"
            )));
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(HexError::BadMesh(format!("vertex {i} is not finite")));
            }
        }
        for (ci, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= vertices.len() {
                    return Err(HexError::BadMesh(format!(
                        "cell {ci} references vertex {v} but mesh has {}",
                        vertices.len()
                    )));
                }
            }
            let mut sorted = *cell;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(HexError::BadMesh(format!(
                    "cell {ci} repeats a vertex"
                )));
            }
        }

        // Face incidence: key is the sorted corner set, value keeps the
        // first cell's outward orientation and the incidence count.
        let mut face_map: std::collections::HashMap<[usize; 4], ([usize; 4], u32)> =
            std::collections::HashMap::new();
        for (ci, cell) in cells.iter().enumerate() {
            for local in HEX_FACES {
                let quad = [cell[local[0]], cell[local[1]], cell[local[2]], cell[local[3]]];
                let mut key = quad;
                key.sort_unstable();
                let entry = face_map.entry(key).or_insert((quad, 0));
                entry.1 += 1;
                if entry.1 > 2 {
                    return Err(HexError::BadMesh(format!(
                        "quad {key:?} of cell {ci} is shared by more than two cells"
                    )));
                }
            }
        }
        let mut boundary = vec![false; vertices.len()];
        let mut boundary_quads: Vec<[usize; 4]> = face_map
            .values()
            .filter(|(_, count)| *count == 1)
            .map(|(quad, _)| *quad)
            .collect();
        boundary_quads.sort_unstable();
        for q in &boundary_quads {
            for &v in q {
                boundary[v] = true;
            }
        }
        let anchors = vec![None; vertices.len()];
        Ok(HexMesh { vertices, cells, boundary, anchors, boundary_quads, h })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 8]] {
        &self.cells
    }

    /// Per-vertex boundary flags.
    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertex_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    /// Per-vertex surface anchors; `None` for interior or unanchored
    /// boundary vertices.
    pub fn anchors(&self) -> &[Option<SurfaceAnchor>] {
        &self.anchors
    }

    /// Outward-oriented boundary quads, sorted for determinism.
    pub fn boundary_quads(&self) -> &[[usize; 4]] {
        &self.boundary_quads
    }

    /// Voxel grid unit the mesh was extracted at.
    pub fn h(&self) -> f64 {
        self.h
    }
}
