//! Scaled-Jacobian quality of hexahedral cells.

use super::{HexMesh, CORNER_NEIGHBORS};

/// Scaled-Jacobian statistics over a mesh.
///
/// Per cell the value is the minimum over its eight corners of the
/// determinant of the corner's three unit edge vectors, taken in the
/// right-handed reference order, so every value lies in `[−1, 1]`. An
/// axis-aligned box scores exactly 1; zero or negative values mark
/// degenerate or inverted corners. An empty mesh reports zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    /// Minimum corner value per cell, in cell order.
    pub per_cell: Vec<f64>,
    /// Global minimum over cells.
    pub j_min: f64,
    /// Mean of the per-cell values.
    pub j_avg: f64,
    /// Cells whose value is ≤ 0.
    pub inverted: usize,
}

fn unit_diff(to: [f64; 3], from: [f64; 3]) -> Option<[f64; 3]> {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if len > 0.0 {
        Some([d[0] / len, d[1] / len, d[2] / len])
    } else {
        None
    }
}

fn det3(u: [f64; 3], v: [f64; 3], w: [f64; 3]) -> f64 {
    u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0])
}

/// Minimum scaled Jacobian over the eight corners of one cell. A corner
/// with a zero-length edge contributes 0 (degenerate, not an error).
pub(crate) fn cell_jacobian(vertices: &[[f64; 3]], cell: &[usize; 8]) -> f64 {
    let mut min = f64::INFINITY;
    for (corner, nbrs) in CORNER_NEIGHBORS.iter().enumerate() {
        let p = vertices[cell[corner]];
        let frame = [
            unit_diff(vertices[cell[nbrs[0]]], p),
            unit_diff(vertices[cell[nbrs[1]]], p),
            unit_diff(vertices[cell[nbrs[2]]], p),
        ];
        let j = match frame {
            [Some(u), Some(v), Some(w)] => det3(u, v, w),
            _ => 0.0,
        };
        min = min.min(j);
    }
    min
}

/// Evaluates the scaled Jacobian for every cell.
pub fn quality(hm: &HexMesh) -> QualityReport {
    let per_cell: Vec<f64> =
        hm.cells().iter().map(|c| cell_jacobian(hm.vertices(), c)).collect();
    if per_cell.is_empty() {
        return QualityReport { per_cell, j_min: 0.0, j_avg: 0.0, inverted: 0 };
    }
    let j_min = per_cell.iter().copied().fold(f64::INFINITY, f64::min);
    let j_avg = per_cell.iter().sum::<f64>() / per_cell.len() as f64;
    let inverted = per_cell.iter().filter(|&&j| j <= 0.0).count();
    QualityReport { per_cell, j_min, j_avg, inverted }
}
