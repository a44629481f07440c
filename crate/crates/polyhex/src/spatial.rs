//! Uniform hash grid over 3D points.
//!
//! One acceleration structure serves every proximity query in the crate:
//! radius queries in the L1 and L2 metrics, single nearest neighbor, and
//! k-nearest. Results are defined purely in terms of distances and point
//! indices, so a grid query returns bit-identical results to a brute-force
//! scan over the same points; tests in the consuming modules rely on that.
//!
//! Queries order matches by `(distance, index)` ascending, so equidistant
//! points resolve to the lower index first.

use std::collections::HashMap;

use thiserror::Error;

/// Construction errors for [`UniformGrid`].
#[derive(Debug, Error)]
pub enum SpatialError {
    /// Cell size must be finite and strictly positive.
    #[error("grid cell size must be finite and positive, got {0}")]
    BadCell(f64),
    /// All point coordinates must be finite.
    #[error("point {0} has a non-finite coordinate")]
    NonFinitePoint(usize),
}

/// L1 (Manhattan) distance between two points.
pub fn dist_l1(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

/// L2 (Euclidean) distance between two points.
pub fn dist_l2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Metric selector for grid queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    L1,
    L2,
}

impl Metric {
    fn eval(self, a: [f64; 3], b: [f64; 3]) -> f64 {
        match self {
            Metric::L1 => dist_l1(a, b),
            Metric::L2 => dist_l2(a, b),
        }
    }
}

/// Hash grid over a fixed set of points.
///
/// The grid stores point indices bucketed by `floor(coord / cell)`. Both
/// L1 and L2 queries run on the same grid because each metric dominates
/// the L-infinity metric the cells are laid out in.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    cell: f64,
    points: Vec<[f64; 3]>,
    cells: HashMap<[i64; 3], Vec<usize>>,
    /// Componentwise key bounds over occupied cells; meaningless when empty.
    key_lo: [i64; 3],
    key_hi: [i64; 3],
}

impl UniformGrid {
    /// Builds a grid with the given cell size.
    ///
    /// Copies the points so queries cannot outlive a caller's borrow.
    pub fn build(points: &[[f64; 3]], cell: f64) -> Result<Self, SpatialError> {
        if !cell.is_finite() || cell <= 0.0 {
            return Err(SpatialError::BadCell(cell));
        }
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut key_lo = [i64::MAX; 3];
        let mut key_hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(SpatialError::NonFinitePoint(i));
            }
            let key = key_of(*p, cell);
            for a in 0..3 {
                key_lo[a] = key_lo[a].min(key[a]);
                key_hi[a] = key_hi[a].max(key[a]);
            }
            cells.entry(key).or_default().push(i);
        }
        Ok(Self { cell, points: points.to_vec(), cells, key_lo, key_hi })
    }

    /// Builds a grid with a cell size derived from the point density.
    ///
    /// Uses `max bbox extent / cbrt(n)` so the expected bucket occupancy is
    /// constant; degenerate clouds (empty, or all points coincident) fall
    /// back to a unit cell.
    pub fn build_auto(points: &[[f64; 3]]) -> Result<Self, SpatialError> {
        let mut cell = 1.0;
        if !points.is_empty() {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for p in points {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
            let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
            let derived = extent / (points.len() as f64).cbrt();
            if derived.is_finite() && derived > 0.0 {
                cell = derived;
            }
        }
        Self::build(points, cell)
    }

    /// Number of stored points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when the grid holds no points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Stored points, in insertion order.
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// All `(index, distance)` pairs with L1 distance `<= r`, sorted by
    /// `(distance, index)`. The query point itself is not special: if it is
    /// one of the stored points it appears at distance zero.
    pub fn within_l1(&self, q: [f64; 3], r: f64) -> Vec<(usize, f64)> {
        self.within(q, r, Metric::L1)
    }

    /// All `(index, distance)` pairs with L2 distance `<= r`, sorted by
    /// `(distance, index)`.
    pub fn within_l2(&self, q: [f64; 3], r: f64) -> Vec<(usize, f64)> {
        self.within(q, r, Metric::L2)
    }

    /// Nearest stored point to `q` in the L1 metric, skipping `exclude`.
    pub fn nearest_l1(&self, q: [f64; 3], exclude: Option<usize>) -> Option<(usize, f64)> {
        self.nearest(q, exclude, Metric::L1)
    }

    /// Nearest stored point to `q` in the L2 metric, skipping `exclude`.
    pub fn nearest_l2(&self, q: [f64; 3], exclude: Option<usize>) -> Option<(usize, f64)> {
        self.nearest(q, exclude, Metric::L2)
    }

    /// The `k` nearest points to `q` in the L2 metric, sorted by
    /// `(distance, index)`. Returns fewer than `k` entries when the grid
    /// holds fewer points.
    pub fn knearest_l2(&self, q: [f64; 3], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        self.knearest(q, k, exclude, Metric::L2)
    }

    fn within(&self, q: [f64; 3], r: f64, metric: Metric) -> Vec<(usize, f64)> {
        debug_assert!(q.iter().all(|c| c.is_finite()) && r.is_finite());
        let mut out = Vec::new();
        if self.points.is_empty() || r < 0.0 {
            return out;
        }
        // Both metrics dominate L-infinity, so the L-infinity ball of
        // radius r (a cell-aligned box) covers every candidate.
        let lo = key_of([q[0] - r, q[1] - r, q[2] - r], self.cell);
        let hi = key_of([q[0] + r, q[1] + r, q[2] + r], self.cell);
        for kx in lo[0]..=hi[0] {
            for ky in lo[1]..=hi[1] {
                for kz in lo[2]..=hi[2] {
                    let Some(bucket) = self.cells.get(&[kx, ky, kz]) else { continue };
                    for &i in bucket {
                        let d = metric.eval(q, self.points[i]);
                        if d <= r {
                            out.push((i, d));
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| cmp_did(*a, *b));
        out
    }

    fn nearest(&self, q: [f64; 3], exclude: Option<usize>, metric: Metric) -> Option<(usize, f64)> {
        let hits = self.knearest(q, 1, exclude, metric);
        hits.first().copied()
    }

    /// Expanding-shell k-nearest search.
    ///
    /// Visits cells shell by shell outward from the query's cell. Any point
    /// in a shell at Chebyshev cell distance `ring` is strictly farther than
    /// `(ring - 1) * cell` in either metric, so the search stops once that
    /// bound exceeds the current k-th best distance.
    fn knearest(
        &self,
        q: [f64; 3],
        k: usize,
        exclude: Option<usize>,
        metric: Metric,
    ) -> Vec<(usize, f64)> {
        debug_assert!(q.iter().all(|c| c.is_finite()));
        let mut best: Vec<(usize, f64)> = Vec::new();
        if self.points.is_empty() || k == 0 {
            return best;
        }
        let center = key_of(q, self.cell);
        // Largest shell that can contain an occupied cell, per key bounds.
        let max_ring = (0..3)
            .map(|a| {
                self.key_hi[a]
                    .saturating_sub(center[a])
                    .abs()
                    .max(center[a].saturating_sub(self.key_lo[a]).abs())
            })
            .max()
            .unwrap_or(0);
        // Smallest shell that can contain an occupied cell; lets a far
        // outside query skip straight to the populated region.
        let min_ring = (0..3)
            .map(|a| {
                if center[a] < self.key_lo[a] {
                    self.key_lo[a].saturating_sub(center[a])
                } else if center[a] > self.key_hi[a] {
                    center[a].saturating_sub(self.key_hi[a])
                } else {
                    0
                }
            })
            .max()
            .unwrap_or(0);
        let mut ring = min_ring;
        while ring <= max_ring {
            if best.len() == k {
                let bound = (ring - 1).max(0) as f64 * self.cell;
                if bound > best[k - 1].1 {
                    break;
                }
            }
            self.for_each_shell_bucket(center, ring, |bucket| {
                for &i in bucket {
                    if exclude == Some(i) {
                        continue;
                    }
                    let cand = (i, metric.eval(q, self.points[i]));
                    let pos = best
                        .binary_search_by(|probe| cmp_did(*probe, cand))
                        .unwrap_or_else(|e| e);
                    if pos < k {
                        best.insert(pos, cand);
                        best.truncate(k);
                    }
                }
            });
            ring += 1;
        }
        best
    }

    /// Calls `f` on each occupied bucket in the shell of cells at Chebyshev
    /// distance exactly `ring` from `center`.
    fn for_each_shell_bucket(&self, center: [i64; 3], ring: i64, mut f: impl FnMut(&[usize])) {
        if ring == 0 {
            if let Some(bucket) = self.cells.get(&center) {
                f(bucket);
            }
            return;
        }
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    let key = [
                        center[0].saturating_add(dx),
                        center[1].saturating_add(dy),
                        center[2].saturating_add(dz),
                    ];
                    if let Some(bucket) = self.cells.get(&key) {
                        f(bucket);
                    }
                }
            }
        }
    }
}

fn key_of(p: [f64; 3], cell: f64) -> [i64; 3] {
    // Float-to-int casts saturate, so absurd coordinates stay well-defined.
    [
        (p[0] / cell).floor() as i64,
        (p[1] / cell).floor() as i64,
        (p[2] / cell).floor() as i64,
    ]
}

/// Ascending `(distance, index)` order; distances must be finite.
fn cmp_did(a: (usize, f64), b: (usize, f64)) -> std::cmp::Ordering {
    a.1.partial_cmp(&b.1).expect("finite distance").then(a.0.cmp(&b.0))
}
