//! Plane clustering and integer-grid snapping.
//!
//! Per axis label, the points' coordinates along that axis form tight
//! groups, one per polycube face plane. A 1D sort-and-split finds the
//! groups, and each group is then split into connected patches on its 2D
//! footprint so that coplanar but disjoint faces stay separate. Snapping
//! divides every plane offset by the grid unit and rounds; planes that end
//! up sharing an integer offset are either fine (disjoint footprints), a
//! resolution error (same label, overlapping), or a degenerate thin
//! feature (opposite labels, overlapping).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{AxisLabel, PolycubeError};
use crate::geomio::PolycubeCloud;

/// Ratio of the clustering gap to the grid unit: `gap = 0.35 h`.
///
/// Inverting the ratio recovers the implied grid unit from a gap, which
/// sizes the footprint cells used for connectivity splitting.
pub const GAP_FRACTION: f64 = 0.35;

/// The default clustering gap for a known grid unit.
pub fn default_gap(h: f64) -> f64 {
    GAP_FRACTION * h
}

/// One cluster of coplanar, footprint-connected points (pre-snap).
#[derive(Debug, Clone)]
pub struct PlanarPatch {
    pub label: AxisLabel,
    /// Mean coordinate of the member points along the label's axis.
    pub offset: f64,
    /// Member point indices into the source cloud, ascending.
    pub points: Vec<usize>,
    /// Footprint in `(u, v)` cells of size `gap / GAP_FRACTION`, where
    /// `u, v` are the two non-label axes in cyclic order.
    pub cells: BTreeSet<[i64; 2]>,
}

/// A patch with its plane snapped to the integer grid.
#[derive(Debug, Clone)]
pub struct SnappedPatch {
    pub label: AxisLabel,
    /// Plane coordinate in grid units.
    pub offset: i64,
    /// Member point indices into the source cloud, ascending.
    pub points: Vec<usize>,
    /// Footprint in `(u, v)` grid cells of size `h`.
    pub cells: BTreeSet<[i64; 2]>,
}

/// In-plane axes for a label's axis, in cyclic order.
fn uv_axes(axis: usize) -> (usize, usize) {
    ((axis + 1) % 3, (axis + 2) % 3)
}

fn footprint_cell(p: [f64; 3], axis: usize, cell: f64) -> [i64; 2] {
    let (u, v) = uv_axes(axis);
    [(p[u] / cell).floor() as i64, (p[v] / cell).floor() as i64]
}

/// Splits a labeled cloud into planar patches.
///
/// Per label: sort the member coordinates along the axis, split where a
/// consecutive gap exceeds `gap`, take each cluster's mean as its plane
/// offset, then split the cluster into 4-connected components of its
/// footprint cells. Output order is deterministic: labels in declaration
/// order, clusters by ascending offset, components by smallest cell.
pub fn cluster_planes(
    cloud: &PolycubeCloud,
    labels: &[AxisLabel],
    gap: f64,
) -> Result<Vec<PlanarPatch>, PolycubeError> {
    if !gap.is_finite() || gap <= 0.0 {
        return Err(PolycubeError::BadArgument(format!(
            "gap must be finite and positive, got {gap}"
        )));
    }
    if labels.len() != cloud.len() {
        return Err(PolycubeError::BadArgument(format!(
            "{} labels for {} points",
            labels.len(),
            cloud.len()
        )));
    }
    let cell = gap / GAP_FRACTION;
    let pts = cloud.points();
    let mut patches = Vec::new();
    for want in AxisLabel::ALL {
        let axis = want.axis();
        let mut members: Vec<usize> = (0..pts.len()).filter(|&i| labels[i] == want).collect();
        if members.is_empty() {
            continue;
        }
        members.sort_by(|&a, &b| {
            pts[a][axis].partial_cmp(&pts[b][axis]).expect("finite coordinate").then(a.cmp(&b))
        });
        let mut start = 0;
        for i in 1..=members.len() {
            let split = i == members.len()
                || pts[members[i]][axis] - pts[members[i - 1]][axis] > gap;
            if !split {
                continue;
            }
            let cluster = &members[start..i];
            start = i;
            let offset =
                cluster.iter().map(|&j| pts[j][axis]).sum::<f64>() / cluster.len() as f64;
            patches.extend(split_components(pts, cluster, want, offset, axis, cell));
        }
    }
    Ok(patches)
}

/// 4-connected footprint components of one coplanar cluster.
fn split_components(
    pts: &[[f64; 3]],
    cluster: &[usize],
    label: AxisLabel,
    offset: f64,
    axis: usize,
    cell: f64,
) -> Vec<PlanarPatch> {
    let mut by_cell: BTreeMap<[i64; 2], Vec<usize>> = BTreeMap::new();
    for &i in cluster {
        by_cell.entry(footprint_cell(pts[i], axis, cell)).or_default().push(i);
    }
    let mut visited: BTreeSet<[i64; 2]> = BTreeSet::new();
    let mut out = Vec::new();
    for &seed in by_cell.keys() {
        if visited.contains(&seed) {
            continue;
        }
        let mut cells = BTreeSet::new();
        let mut points = Vec::new();
        let mut queue = VecDeque::from([seed]);
        visited.insert(seed);
        while let Some(c) = queue.pop_front() {
            cells.insert(c);
            points.extend_from_slice(&by_cell[&c]);
            for (du, dv) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let n = [c[0] + du, c[1] + dv];
                if by_cell.contains_key(&n) && visited.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        points.sort_unstable();
        out.push(PlanarPatch { label, offset, points, cells });
    }
    out
}

/// Snaps plane offsets to multiples of `h` and re-derives footprints in
/// `h`-sized cells.
///
/// Two patches landing on the same integer offset of the same axis are
/// checked: same label with overlapping footprints means `h` cannot
/// resolve two distinct planes (collision); opposite labels with
/// overlapping footprints mean a feature thinner than one grid unit.
pub fn snap_to_grid(
    cloud: &PolycubeCloud,
    patches: &[PlanarPatch],
    h: f64,
) -> Result<Vec<SnappedPatch>, PolycubeError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(PolycubeError::BadArgument(format!(
            "grid unit must be finite and positive, got {h}"
        )));
    }
    let pts = cloud.points();
    let snapped: Vec<SnappedPatch> = patches
        .iter()
        .map(|p| SnappedPatch {
            label: p.label,
            offset: (p.offset / h).round() as i64,
            points: p.points.clone(),
            cells: p
                .points
                .iter()
                .map(|&i| footprint_cell(pts[i], p.label.axis(), h))
                .collect(),
        })
        .collect();

    let mut groups: BTreeMap<(usize, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in snapped.iter().enumerate() {
        groups.entry((p.label.axis(), p.offset)).or_default().push(i);
    }
    for ((_, offset), group) in &groups {
        for (a_pos, &a) in group.iter().enumerate() {
            for &b in &group[a_pos + 1..] {
                let (pa, pb) = (&snapped[a], &snapped[b]);
                if pa.cells.intersection(&pb.cells).next().is_none() {
                    continue;
                }
                if pa.label == pb.label {
                    // Same plane split into components shares an offset
                    // legitimately; only distinct source planes collide.
                    if (patches[a].offset - patches[b].offset).abs() > 1e-12 {
                        return Err(PolycubeError::SnapCollision {
                            axis: pa.label.axis_char(),
                            a: patches[a].offset,
                            b: patches[b].offset,
                            snapped: *offset,
                            h,
                        });
                    }
                } else {
                    return Err(PolycubeError::ThinFeature {
                        axis: pa.label.axis_char(),
                        offset: *offset,
                    });
                }
            }
        }
    }
    Ok(snapped)
}

/// Infers the grid unit from pre-snap patches: the smallest gap between
/// consecutive plane offsets on any axis, rounded to one significant
/// digit.
pub fn default_unit(patches: &[PlanarPatch]) -> Result<f64, PolycubeError> {
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        let mut offs: Vec<f64> = patches
            .iter()
            .filter(|p| p.label.axis() == axis)
            .map(|p| p.offset)
            .collect();
        offs.sort_by(|a, b| a.partial_cmp(b).expect("finite offset"));
        for w in offs.windows(2) {
            let gap = w[1] - w[0];
            if gap > 1e-12 && gap < best {
                best = gap;
            }
        }
    }
    if !best.is_finite() {
        return Err(PolycubeError::BadArgument(
            "cannot infer a grid unit: no axis has two distinct plane offsets".into(),
        ));
    }
    let mag = 10f64.powi(best.log10().floor() as i32);
    Ok((best / mag).round() * mag)
}
