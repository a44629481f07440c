//! Interior smoothing and boundary pillowing.

use super::quality::cell_jacobian;
use super::{HexError, HexMesh, HEX_EDGES};

/// Damped Laplacian relaxation of the interior vertices.
///
/// Each round moves every interior vertex toward the mean of its
/// edge-neighbors, `v ← v + step·(mean − v)`, reading the previous round's
/// positions and writing a fresh buffer so the result is independent of
/// vertex order. Boundary vertices never move. `step` must lie in
/// `[0, 1]`; zero is the identity.
pub fn smooth_interior(hm: &HexMesh, iters: usize, step: f64) -> Result<HexMesh, HexError> {
    if !step.is_finite() || !(0.0..=1.0).contains(&step) {
        return Err(HexError::BadArgument(format!(
            "smoothing step must lie in [0, 1], got {step}"
        )));
    }
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); hm.vertex_count()];
    for cell in hm.cells() {
        for [a, b] in HEX_EDGES {
            neighbors[cell[a]].push(cell[b]);
            neighbors[cell[b]].push(cell[a]);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }

    let mut cur = hm.vertices().to_vec();
    let mut next = cur.clone();
    for _ in 0..iters {
        for (v, nbrs) in neighbors.iter().enumerate() {
            if hm.is_boundary(v) || nbrs.is_empty() {
                continue;
            }
            let mut mean = [0.0f64; 3];
            for &n in nbrs {
                for k in 0..3 {
                    mean[k] += cur[n][k];
                }
            }
            for k in 0..3 {
                mean[k] /= nbrs.len() as f64;
                next[v][k] = cur[v][k] + step * (mean[k] - cur[v][k]);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let mut out = hm.clone();
    out.vertices = cur;
    Ok(out)
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if len > 1e-12 {
        Some([v[0] / len, v[1] / len, v[2] / len])
    } else {
        None
    }
}

/// Right-hand-rule normal of a (near-planar) quad from its diagonals.
fn quad_normal(c: [[f64; 3]; 4]) -> Option<[f64; 3]> {
    let d1 = [c[2][0] - c[0][0], c[2][1] - c[0][1], c[2][2] - c[0][2]];
    let d2 = [c[3][0] - c[1][0], c[3][1] - c[1][1], c[3][2] - c[1][2]];
    normalize([
        d1[1] * d2[2] - d1[2] * d2[1],
        d1[2] * d2[0] - d1[0] * d2[2],
        d1[0] * d2[1] - d1[1] * d2[0],
    ])
}

/// Inserts one inset hex layer under every boundary quad.
///
/// Every boundary vertex gets an inward duplicate at distance
/// `thickness · h` along the average inward normal of its incident
/// boundary quads; original cells are rewired to the duplicates (the
/// shrunken core) and each boundary quad gains a dedicated layer hex
/// between its inset and original corners, so the cell count grows by
/// exactly the boundary quad count. If any touched cell would be
/// degenerate or inverted the operation fails and the input is left to
/// the caller unchanged.
pub fn pillow_boundary(hm: &HexMesh, thickness: f64) -> Result<HexMesh, HexError> {
    if !thickness.is_finite() || thickness <= 0.0 || thickness >= 0.5 {
        return Err(HexError::BadArgument(format!(
            "pillow thickness must lie strictly inside (0, 0.5), got {thickness}"
        )));
    }
    if hm.cell_count() == 0 {
        return Err(HexError::BadArgument("cannot pillow an empty mesh".into()));
    }

    // Average outward normal per boundary vertex.
    let mut normal_sum = vec![[0.0f64; 3]; hm.vertex_count()];
    for quad in hm.boundary_quads() {
        let corners = [
            hm.vertices()[quad[0]],
            hm.vertices()[quad[1]],
            hm.vertices()[quad[2]],
            hm.vertices()[quad[3]],
        ];
        if let Some(n) = quad_normal(corners) {
            for &v in quad {
                for k in 0..3 {
                    normal_sum[v][k] += n[k];
                }
            }
        }
    }

    let mut vertices = hm.vertices().to_vec();
    let mut dup = vec![usize::MAX; hm.vertex_count()];
    for v in 0..hm.vertex_count() {
        if !hm.is_boundary(v) {
            continue;
        }
        let offset = thickness * hm.h();
        // A cancelled normal leaves the duplicate in place; the resulting
        // degenerate layer cell is caught by the inversion check below.
        let dir = normalize(normal_sum[v]).unwrap_or([0.0; 3]);
        let p = vertices[v];
        dup[v] = vertices.len();
        vertices.push([
            p[0] - offset * dir[0],
            p[1] - offset * dir[1],
            p[2] - offset * dir[2],
        ]);
    }

    // Shrunken cores: boundary corners swap to their duplicates.
    let mut cells: Vec<[usize; 8]> = hm
        .cells()
        .iter()
        .map(|cell| cell.map(|v| if dup[v] != usize::MAX { dup[v] } else { v }))
        .collect();
    let core_count = cells.len();
    // One layer hex per boundary quad: inset quad below, original on top,
    // keeping the outward orientation so the cell is positively oriented.
    for q in hm.boundary_quads() {
        cells.push([dup[q[0]], dup[q[1]], dup[q[2]], dup[q[3]], q[0], q[1], q[2], q[3]]);
    }

    let touched: Vec<usize> = (0..cells.len())
        .filter(|&ci| {
            ci >= core_count || hm.cells()[ci].iter().any(|&v| dup[v] != usize::MAX)
        })
        .collect();
    let inverted = touched
        .iter()
        .filter(|&&ci| cell_jacobian(&vertices, &cells[ci]) <= 0.0)
        .count();
    if inverted > 0 {
        return Err(HexError::Pillow { inverted });
    }

    let mut out = HexMesh::new(vertices, cells, hm.h())?;
    // Original boundary vertices keep their ids and stay on the surface;
    // carry their anchors over.
    for v in 0..hm.vertex_count() {
        out.anchors[v] = hm.anchors[v];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::hexgen::{extract_hexes, quality};
    use crate::polycube::testshapes::{box_union, Box3};
    use crate::polycube::VoxelModel;

    fn extracted(boxes: &[Box3], s: usize) -> HexMesh {
        let vm = VoxelModel::new(1.0, box_union(boxes)).unwrap();
        extract_hexes(&vm, s).unwrap()
    }

    #[test]
    fn uniform_grid_is_a_fixpoint() {
        let hm = extracted(&[Box3 { origin: [0, 0, 0], size: [2, 2, 2] }], 2);
        let smoothed = smooth_interior(&hm, 50, 0.5).unwrap();
        for (a, b) in hm.vertices().iter().zip(smoothed.vertices()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn displaced_center_decays_geometrically() {
        // One interior vertex with fixed neighbors is a scalar recursion:
        // the residual shrinks by exactly (1 − step) per round.
        let hm = extracted(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }], 2);
        let center = (0..hm.vertex_count())
            .find(|&v| !hm.is_boundary(v))
            .unwrap();
        let target = hm.vertices()[center];
        let mut moved = hm.clone();
        let delta = [0.11, 0.07, -0.05];
        for (c, d) in moved.vertices[center].iter_mut().zip(delta) {
            *c += d;
        }
        let initial =
            (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
        let step = 0.5;
        let iters = 20;
        let smoothed = smooth_interior(&moved, iters, step).unwrap();
        let got = smoothed.vertices()[center];
        let residual = (0..3)
            .map(|k| (got[k] - target[k]) * (got[k] - target[k]))
            .sum::<f64>()
            .sqrt();
        let bound = (1.0 - step).powi(iters as i32) * initial;
        assert!(residual <= bound * (1.0 + 1e-9), "{residual} vs {bound}");
        assert!(residual > 0.0, "must converge geometrically, not exactly");
        // Everything else is boundary and must not move.
        for v in 0..hm.vertex_count() {
            if v != center {
                assert_eq!(smoothed.vertices()[v], hm.vertices()[v]);
            }
        }
    }

    #[test]
    fn zero_step_is_the_identity() {
        let mut hm = extracted(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }], 3);
        let inner = (0..hm.vertex_count()).find(|&v| !hm.is_boundary(v)).unwrap();
        hm.vertices[inner] = [0.41, 0.47, 0.52];
        let smoothed = smooth_interior(&hm, 10, 0.0).unwrap();
        assert_eq!(smoothed.vertices(), hm.vertices());
    }

    #[test]
    fn bad_step_rejected() {
        let hm = extracted(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }], 1);
        assert!(smooth_interior(&hm, 1, -0.1).is_err());
        assert!(smooth_interior(&hm, 1, 1.5).is_err());
        assert!(smooth_interior(&hm, 1, f64::NAN).is_err());
    }

    #[test]
    fn cube_pillow_is_seven_cells() {
        let hm = extracted(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }], 1);
        let p = pillow_boundary(&hm, 0.2).unwrap();
        assert_eq!(p.cell_count(), 7);
        assert_eq!(p.vertex_count(), 16);
        // Watertightness: boundary quads unchanged in count, quality all
        // positive.
        assert_eq!(p.boundary_quads().len(), 6);
        let r = quality(&p);
        assert_eq!(r.inverted, 0);
        assert!(r.j_min > 0.0);
    }

    #[test]
    fn bar_pillow_is_twelve_cells() {
        let hm = extracted(&[Box3 { origin: [0, 0, 0], size: [2, 1, 1] }], 1);
        let p = pillow_boundary(&hm, 0.2).unwrap();
        assert_eq!(p.cell_count(), 12);
        assert_eq!(p.boundary_quads().len(), 10);
        assert_eq!(quality(&p).inverted, 0);
    }

    #[test]
    fn pillowing_grows_by_the_boundary_quad_count() {
        for (boxes, s) in [
            (vec![Box3 { origin: [0, 0, 0], size: [2, 2, 1] }], 1),
            (
                vec![
                    Box3 { origin: [0, 0, 0], size: [2, 1, 1] },
                    Box3 { origin: [0, 1, 0], size: [1, 1, 1] },
                ],
                2,
            ),
        ] {
            let hm = extracted(&boxes, s);
            let p = pillow_boundary(&hm, 0.15).unwrap();
            assert_eq!(p.cell_count(), hm.cell_count() + hm.boundary_quads().len());
            assert_eq!(p.boundary_quads().len(), hm.boundary_quads().len());
            assert_eq!(quality(&p).inverted, 0);
        }
    }

    #[test]
    fn degenerate_thickness_is_rejected_by_the_inversion_check() {
        let hm = extracted(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }], 1);
        let err = pillow_boundary(&hm, 1e-18).unwrap_err();
        assert!(matches!(err, HexError::Pillow { inverted } if inverted > 0), "{err}");
    }

    #[test]
    fn out_of_range_thickness_is_rejected_up_front() {
        let hm = extracted(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }], 1);
        assert!(matches!(
            pillow_boundary(&hm, 0.0),
            Err(HexError::BadArgument(_))
        ));
        assert!(matches!(
            pillow_boundary(&hm, 0.5),
            Err(HexError::BadArgument(_))
        ));
    }
}
