//! Boundary pullback onto the input surface.

use super::{HexError, HexMesh, SurfaceAnchor};
use crate::geomio::{PolycubeCloud, TriMesh};
use crate::register::CorrespondenceMap;
use crate::spatial::UniformGrid;

/// How boundary vertices borrow anchors from the polycube cloud.
#[derive(Debug, Clone, Copy)]
pub struct AnchorConfig {
    /// Nearest polycube points averaged per boundary vertex.
    pub k: usize,
    /// Search reach in multiples of the grid unit; vertices with no
    /// polycube point this close stay unanchored.
    pub reach: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig { k: 4, reach: 3.0 }
    }
}

/// Pulls every boundary vertex onto the input surface.
///
/// Each boundary vertex finds its `k` nearest polycube points in the
/// polycube domain, averages their anchors' world positions (each anchor
/// is a `(face, bary)` spot on `mesh`), and projects the average to the
/// closest surface point, which becomes the vertex position and its
/// stored anchor. A vertex exactly on a polycube point reuses that
/// point's anchor directly. Vertices with no polycube point within
/// `reach · h` are left in place and returned as unanchored.
pub fn anchor_boundary(
    hm: &HexMesh,
    poly: &PolycubeCloud,
    corr: &CorrespondenceMap,
    mesh: &TriMesh,
    cfg: &AnchorConfig,
) -> Result<(HexMesh, Vec<usize>), HexError> {
    if cfg.k == 0 {
        return Err(HexError::BadArgument("anchor k must be >= 1".into()));
    }
    if !cfg.reach.is_finite() || cfg.reach <= 0.0 {
        return Err(HexError::BadArgument(format!(
            "anchor reach must be finite and positive, got {}",
            cfg.reach
        )));
    }
    if poly.is_empty() {
        return Err(HexError::BadArgument("polycube cloud is empty".into()));
    }
    if corr.len() != poly.len() {
        return Err(HexError::BadArgument(format!(
            "{} anchors for {} polycube points",
            corr.len(),
            poly.len()
        )));
    }
    for (i, a) in corr.anchors().iter().enumerate() {
        if a.face_id >= mesh.faces().len() {
            return Err(HexError::BadArgument(format!(
                "anchor {i} references face {} but the mesh has {}",
                a.face_id,
                mesh.faces().len()
            )));
        }
    }

    let grid = UniformGrid::build_auto(poly.points())?;
    let reach = cfg.reach * hm.h();
    let exact = 1e-9 * hm.h();
    let mut out = hm.clone();
    let mut unanchored = Vec::new();
    for v in 0..hm.vertex_count() {
        if !hm.is_boundary(v) {
            continue;
        }
        let p = hm.vertices()[v];
        let hits = grid.knearest_l2(p, cfg.k, None);
        if hits.is_empty() || hits[0].1 > reach {
            unanchored.push(v);
            continue;
        }
        if hits[0].1 < exact {
            let a = corr.anchors()[hits[0].0];
            out.vertices[v] = mesh.point_on_face(a.face_id, a.bary);
            out.anchors[v] = Some(SurfaceAnchor { face_id: a.face_id, bary: a.bary });
            continue;
        }
        let mut avg = [0.0f64; 3];
        let mut used = 0usize;
        for &(i, d) in &hits {
            if d > reach {
                break;
            }
            let a = corr.anchors()[i];
            let w = mesh.point_on_face(a.face_id, a.bary);
            for k in 0..3 {
                avg[k] += w[k];
            }
            used += 1;
        }
        for a in &mut avg {
            *a /= used as f64;
        }
        let (face_id, bary, q, _) = mesh.closest_point(avg);
        out.vertices[v] = q;
        out.anchors[v] = Some(SurfaceAnchor { face_id, bary });
    }
    Ok((out, unanchored))
}
