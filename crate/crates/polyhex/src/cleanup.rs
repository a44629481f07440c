//! Two-phase outlier removal for generated polycube clouds.
//!
//! Phase I drops isolated points: anything with no other point at L1
//! distance `tau` or closer is an absolute outlier. Phase II ranks the
//! survivors by nearest-neighbor L1 distance and prunes the `K` sparsest.
//! Distances look at positions only; normals ride along untouched, and
//! both phases preserve the order of surviving points.
//!
//! Both phases run on a [`UniformGrid`] but are contractually bit-identical
//! to a brute-force pairwise scan; the tests enforce that.

use thiserror::Error;

use crate::geomio::PolycubeCloud;
use crate::spatial::{SpatialError, UniformGrid};

/// Errors from outlier filtering.
#[derive(Debug, Error)]
pub enum CleanupError {
    /// The connectivity radius must be finite and strictly positive.
    #[error("tau must be finite and positive, got {0}")]
    BadTau(f64),
    /// Phase II cannot prune the whole cloud.
    #[error("prune count {k} must be smaller than the cloud size {len}")]
    PruneTooLarge { k: usize, len: usize },
    /// Nearest-neighbor statistics need at least two points.
    #[error("nearest-neighbor statistics need at least 2 points, got {0}")]
    TooFewPoints(usize),
    /// Grid construction rejected the cloud (non-finite coordinates).
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Outlier-filter parameters.
#[derive(Debug, Clone, Copy)]
pub struct FilterConfig {
    /// L1 connectivity radius for Phase I, in cloud units.
    pub tau: f64,
    /// Number of sparsest survivors Phase II prunes.
    pub k: usize,
}

impl FilterConfig {
    pub fn new(tau: f64, k: usize) -> Result<Self, CleanupError> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(CleanupError::BadTau(tau));
        }
        Ok(FilterConfig { tau, k })
    }
}

/// Default Phase II prune count for an `m`-point cloud: 0.2%, rounded up.
pub fn default_prune_k(m: usize) -> usize {
    (0.002 * m as f64).ceil() as usize
}

/// Per-run removal counts from [`clean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleanupStats {
    pub input: usize,
    pub isolated_removed: usize,
    pub pruned: usize,
    pub output: usize,
}

/// Phase I: removes exactly the points with zero L1 neighbors within `tau`.
///
/// A neighbor is any other point (by index, so coincident points count)
/// at L1 distance `<= tau`. Survivors keep their relative order. This is a
/// single classification pass: removals are decided against the full input
/// cloud, not iterated to a fixpoint.
pub fn phase1_connectivity(cloud: &PolycubeCloud, tau: f64) -> Result<PolycubeCloud, CleanupError> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(CleanupError::BadTau(tau));
    }
    let pts = cloud.points();
    let grid = UniformGrid::build(pts, tau)?;
    let keep: Vec<bool> = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| grid.within_l1(p, tau).iter().any(|&(j, _)| j != i))
        .collect();
    Ok(select(cloud, &keep))
}

/// Phase II: prunes the `k` points with the largest nearest-neighbor L1
/// distance, computed over this cloud (the Phase I survivor set).
///
/// Ties are broken by index: among equal distances the higher index is
/// pruned first, so the lower index survives. Survivors keep their
/// relative order. `k = 0` is the identity; `k >= |cloud|` is an error.
pub fn phase2_density(cloud: &PolycubeCloud, k: usize) -> Result<PolycubeCloud, CleanupError> {
    if k == 0 {
        return Ok(cloud.clone());
    }
    if k >= cloud.len() {
        return Err(CleanupError::PruneTooLarge { k, len: cloud.len() });
    }
    let pts = cloud.points();
    let grid = UniformGrid::build_auto(pts)?;
    // k >= 1 and k < len imply len >= 2, so every point has a neighbor.
    let d_min: Vec<f64> = (0..pts.len())
        .map(|i| grid.nearest_l1(pts[i], Some(i)).expect("at least two points").1)
        .collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| {
        d_min[a]
            .partial_cmp(&d_min[b])
            .expect("finite distance")
            .then(a.cmp(&b))
    });
    let mut keep = vec![true; pts.len()];
    for &i in &order[pts.len() - k..] {
        keep[i] = false;
    }
    Ok(select(cloud, &keep))
}

/// Connectivity radius from the cloud itself:
/// 2.5 x the median nearest-neighbor L1 distance.
///
/// The median of an even-length list is the mean of its two middle values.
pub fn auto_tau(cloud: &PolycubeCloud) -> Result<f64, CleanupError> {
    let pts = cloud.points();
    if pts.len() < 2 {
        return Err(CleanupError::TooFewPoints(pts.len()));
    }
    let grid = UniformGrid::build_auto(pts)?;
    let mut nn: Vec<f64> = (0..pts.len())
        .map(|i| grid.nearest_l1(pts[i], Some(i)).expect("at least two points").1)
        .collect();
    nn.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
    let m = nn.len();
    let median = if m % 2 == 1 {
        nn[m / 2]
    } else {
        0.5 * (nn[m / 2 - 1] + nn[m / 2])
    };
    Ok(2.5 * median)
}

/// Runs both phases and reports removal counts.
///
/// The output size is exactly `input - isolated_removed - k`.
pub fn clean(
    cloud: &PolycubeCloud,
    cfg: &FilterConfig,
) -> Result<(PolycubeCloud, CleanupStats), CleanupError> {
    let survivors = phase1_connectivity(cloud, cfg.tau)?;
    let isolated_removed = cloud.len() - survivors.len();
    let out = phase2_density(&survivors, cfg.k)?;
    let stats = CleanupStats {
        input: cloud.len(),
        isolated_removed,
        pruned: cfg.k,
        output: out.len(),
    };
    Ok((out, stats))
}

fn select(cloud: &PolycubeCloud, keep: &[bool]) -> PolycubeCloud {
    let points: Vec<[f64; 3]> = cloud
        .points()
        .iter()
        .zip(keep)
        .filter(|&(_, &k)| k)
        .map(|(&p, _)| p)
        .collect();
    let normals: Vec<[f64; 3]> = cloud
        .normals()
        .iter()
        .zip(keep)
        .filter(|&(_, &k)| k)
        .map(|(&n, _)| n)
        .collect();
    PolycubeCloud::new(points, normals).expect("survivors keep valid normals")
}
