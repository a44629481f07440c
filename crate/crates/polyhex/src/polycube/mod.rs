//! Explicit polycube structure recovery from a cleaned point cloud.
//!
//! The cloud arrives as near-axis-aligned points with outward unit
//! normals. Recovery proceeds in four steps:
//!
//! 1. label every point with the axis direction its normal is closest to;
//! 2. cluster each label group along its axis coordinate into planes, then
//!    split each plane into connected patches by footprint adjacency;
//! 3. snap plane offsets to an integer grid of unit `h`, rejecting
//!    collisions (two planes landing on one integer) and thin features
//!    (opposite faces landing on the same plane);
//! 4. voxelize the snapped patches by parity ray casting and derive the
//!    closed boundary surface.
//!
//! The result is an integer-grid solid suitable for hex mesh extraction,
//! plus a topology report (Euler characteristic, genus, corner census).

mod cluster;
mod label;
mod report;
mod voxel;

pub use cluster::{
    cluster_planes, default_gap, default_unit, snap_to_grid, PlanarPatch, SnappedPatch,
    GAP_FRACTION,
};
pub use label::{estimate_normals, label_normal, label_points, AxisLabel, ESTIMATE_NORMALS_K};
pub use report::{structure_report, StructureReport, SurfaceComponent};
pub use voxel::{
    load_voxels, save_boundary_obj, save_voxels, voxelize, BoundaryFace, VoxelModel,
};

use thiserror::Error;

use crate::spatial::SpatialError;

/// Errors from polycube structure recovery.
#[derive(Debug, Error)]
pub enum PolycubeError {
    /// A precondition on the inputs failed.
    #[error("{0}")]
    BadArgument(String),
    /// A normal too short to classify.
    #[error("point {index}: normal length {len:.3e} is too small to label")]
    ZeroNormal { index: usize, len: f64 },
    /// Two same-label planes snapped onto the same integer offset.
    #[error(
        "snap collision on axis {axis}: offsets {a} and {b} both snap to {snapped} \
         with overlapping footprints; grid unit {h} is too coarse"
    )]
    SnapCollision { axis: char, a: f64, b: f64, snapped: i64, h: f64 },
    /// Opposite faces collapsed onto one plane: a sub-unit feature.
    #[error(
        "thin feature on axis {axis} at plane {offset}: opposite labels overlap; \
         the feature is thinner than one grid unit"
    )]
    ThinFeature { axis: char, offset: i64 },
    /// Parity ray casting found open or inconsistent columns.
    #[error("boundary is not watertight: {} bad column(s), first at {:?}", columns.len(), columns.first())]
    NonWatertight { columns: Vec<[i64; 2]> },
    /// Voxel file I/O failed.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// Voxel file is malformed.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Neighbor queries rejected the cloud (non-finite coordinates).
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Shared integer-solid fixtures for tests across this module and hexgen.
#[cfg(test)]
pub(crate) mod testshapes {
    use std::collections::BTreeSet;

    use crate::geomio::PolycubeCloud;

    /// Axis-aligned integer box: `origin` inclusive, `size` in voxels.
    #[derive(Debug, Clone, Copy)]
    pub struct Box3 {
        pub origin: [i64; 3],
        pub size: [i64; 3],
    }

    /// Union of boxes as a voxel occupancy set.
    pub fn box_union(boxes: &[Box3]) -> BTreeSet<[i64; 3]> {
        let mut occ = BTreeSet::new();
        for b in boxes {
            for x in b.origin[0]..b.origin[0] + b.size[0] {
                for y in b.origin[1]..b.origin[1] + b.size[1] {
                    for z in b.origin[2]..b.origin[2] + b.size[2] {
                        occ.insert([x, y, z]);
                    }
                }
            }
        }
        occ
    }

    /// One point per exposed boundary square, at the square's center, with
    /// the outward axis normal. Covers every footprint cell exactly once.
    pub fn boundary_cloud(occ: &BTreeSet<[i64; 3]>) -> PolycubeCloud {
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for &c in occ {
            for axis in 0..3 {
                for (positive, step) in [(false, -1i64), (true, 1i64)] {
                    let mut n = c;
                    n[axis] += step;
                    if occ.contains(&n) {
                        continue;
                    }
                    let mut p = [c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5];
                    p[axis] = if positive { c[axis] as f64 + 1.0 } else { c[axis] as f64 };
                    let mut nv = [0.0; 3];
                    nv[axis] = if positive { 1.0 } else { -1.0 };
                    points.push(p);
                    normals.push(nv);
                }
            }
        }
        PolycubeCloud::new(points, normals).expect("axis normals are unit")
    }

    /// 3x3 ring of unit boxes with the center missing: a genus-1 solid.
    pub fn ring_occupancy() -> BTreeSet<[i64; 3]> {
        let mut occ = box_union(&[Box3 { origin: [0, 0, 0], size: [3, 3, 1] }]);
        occ.remove(&[1, 1, 0]);
        occ
    }
}
