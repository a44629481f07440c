//! Voxel model recovery from snapped patches, plus file formats.
//!
//! Occupancy is recovered by parity along the x axis: each (y, z) column
//! collects the x-facing planes that cross it, which must alternate
//! entering (−x) and exiting (+x) faces; solid cells lie between the
//! pairs. Columns that violate the alternation make the surface
//! non-watertight and are reported together.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{PolycubeError, SnappedPatch};

/// An axis-aligned voxel solid on a uniform grid of spacing `h`.
///
/// Cell `[i, j, k]` spans `[i·h, (i+1)·h) × [j·h, (j+1)·h) × [k·h, (k+1)·h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelModel {
    h: f64,
    occupancy: BTreeSet<[i64; 3]>,
}

/// One exposed unit face of a voxel model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    /// The occupied cell the face belongs to.
    pub cell: [i64; 3],
    /// The axis the face is perpendicular to.
    pub axis: usize,
    /// Whether the face looks toward `+axis` (at plane `cell[axis] + 1`)
    /// or toward `−axis` (at plane `cell[axis]`).
    pub positive: bool,
}

impl BoundaryFace {
    /// The face's four lattice corners in outward counter-clockwise order.
    pub fn corners(&self) -> [[i64; 3]; 4] {
        let a = self.axis;
        let (u, v) = ((a + 1) % 3, (a + 2) % 3);
        let mut q = self.cell;
        if self.positive {
            q[a] += 1;
        }
        let corner = |du: i64, dv: i64| {
            let mut c = q;
            c[u] += du;
            c[v] += dv;
            c
        };
        if self.positive {
            [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)]
        } else {
            [corner(0, 0), corner(0, 1), corner(1, 1), corner(1, 0)]
        }
    }
}

impl VoxelModel {
    pub fn new(h: f64, occupancy: BTreeSet<[i64; 3]>) -> Result<Self, PolycubeError> {
        if !h.is_finite() || h <= 0.0 {
            return Err(PolycubeError::BadArgument(format!(
                "grid unit must be finite and positive, got {h}"
            )));
        }
        if occupancy.is_empty() {
            return Err(PolycubeError::BadArgument("empty voxel model".into()));
        }
        Ok(Self { h, occupancy })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn occupancy(&self) -> &BTreeSet<[i64; 3]> {
        &self.occupancy
    }

    pub fn contains(&self, cell: [i64; 3]) -> bool {
        self.occupancy.contains(&cell)
    }

    pub fn voxel_count(&self) -> usize {
        self.occupancy.len()
    }

    /// All exposed faces, in deterministic (cell, axis, side) order.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let mut out = Vec::new();
        for &cell in &self.occupancy {
            for axis in 0..3 {
                for positive in [false, true] {
                    let mut n = cell;
                    n[axis] += if positive { 1 } else { -1 };
                    if !self.occupancy.contains(&n) {
                        out.push(BoundaryFace { cell, axis, positive });
                    }
                }
            }
        }
        out
    }
}

/// Recovers the voxel occupancy implied by snapped boundary patches.
///
/// Only x-facing patches determine the solid: per (y, z) column the
/// crossing planes must alternate −x, +x, … with strictly increasing
/// offsets, and voxels fill the intervals between the pairs. Columns
/// breaking the pattern are gathered into a non-watertight error.
pub fn voxelize(patches: &[SnappedPatch], h: f64) -> Result<VoxelModel, PolycubeError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(PolycubeError::BadArgument(format!(
            "grid unit must be finite and positive, got {h}"
        )));
    }
    let mut columns: BTreeMap<[i64; 2], Vec<(i64, bool)>> = BTreeMap::new();
    let mut seen_x_patch = false;
    for p in patches {
        if p.label.axis() != 0 {
            continue;
        }
        seen_x_patch = true;
        for &cell in &p.cells {
            columns.entry(cell).or_default().push((p.offset, p.label.is_positive()));
        }
    }
    if !seen_x_patch {
        return Err(PolycubeError::BadArgument(
            "no x-facing patches: cannot recover occupancy by parity".into(),
        ));
    }

    let mut occupancy = BTreeSet::new();
    let mut bad: Vec<[i64; 2]> = Vec::new();
    for (&col, entries) in &mut columns {
        entries.sort_unstable();
        entries.dedup();
        let alternates = entries.len() % 2 == 0
            && entries.windows(2).all(|w| w[0].0 < w[1].0)
            && entries.iter().enumerate().all(|(i, e)| e.1 == (i % 2 == 1));
        if !alternates {
            bad.push(col);
            continue;
        }
        for pair in entries.chunks(2) {
            for x in pair[0].0..pair[1].0 {
                occupancy.insert([x, col[0], col[1]]);
            }
        }
    }
    if !bad.is_empty() {
        return Err(PolycubeError::NonWatertight { columns: bad });
    }
    VoxelModel::new(h, occupancy)
}

/// Writes a voxel model as a `voxels h=<h>` header followed by one
/// `i j k` cell per line in sorted order.
pub fn save_voxels(path: &Path, vm: &VoxelModel) -> Result<(), PolycubeError> {
    let mut text = format!("voxels h={}\n", vm.h);
    for c in &vm.occupancy {
        writeln!(text, "{} {} {}", c[0], c[1], c[2]).expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads the format written by [`save_voxels`].
pub fn load_voxels(path: &Path) -> Result<VoxelModel, PolycubeError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(PolycubeError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let h: f64 = header
        .strip_prefix("voxels h=")
        .ok_or_else(|| PolycubeError::Parse {
            line: 1,
            msg: format!("expected `voxels h=<h>` header, got `{header}`"),
        })?
        .parse()
        .map_err(|e| PolycubeError::Parse {
            line: 1,
            msg: format!("bad grid unit: {e}"),
        })?;
    let mut occupancy = BTreeSet::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(PolycubeError::Parse {
                line: line_no,
                msg: format!("expected 3 cell coordinates, got {}", fields.len()),
            });
        }
        let mut cell = [0i64; 3];
        for (k, f) in fields.iter().enumerate() {
            cell[k] = f.parse().map_err(|e| PolycubeError::Parse {
                line: line_no,
                msg: format!("bad cell coordinate `{f}`: {e}"),
            })?;
        }
        occupancy.insert(cell);
    }
    VoxelModel::new(h, occupancy)
}

/// Writes the boundary as a Wavefront OBJ of outward-oriented quads with
/// vertices at `h · corner`.
pub fn save_boundary_obj(path: &Path, vm: &VoxelModel) -> Result<(), PolycubeError> {
    let faces = vm.boundary_faces();
    let mut vert_ids: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    let mut verts: Vec<[i64; 3]> = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();
    for f in &faces {
        let mut quad = [0usize; 4];
        for (slot, corner) in f.corners().into_iter().enumerate() {
            let next = verts.len();
            let id = *vert_ids.entry(corner).or_insert_with(|| {
                verts.push(corner);
                next
            });
            quad[slot] = id;
        }
        quads.push(quad);
    }
    let mut text = String::new();
    for v in &verts {
        writeln!(
            text,
            "v {} {} {}",
            v[0] as f64 * vm.h,
            v[1] as f64 * vm.h,
            v[2] as f64 * vm.h
        )
        .expect("string write");
    }
    for q in &quads {
        writeln!(text, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1)
            .expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}
