//! Poisson-disk surface sampling by dart throwing.
//!
//! Candidates are area-weighted random surface points; a candidate is
//! accepted when no previously accepted point lies within the rejection
//! radius. Acceptance order is sequential by candidate index, so a seed
//! fully determines the result. If the dart budget over- or under-shoots the
//! requested count, the excess is trimmed at random or the deficit topped up
//! with unconstrained draws (compensation sampling).

use std::collections::HashMap;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cloud::ConditionCloud;
use super::mesh::TriMesh;
use super::GeomError;

/// Rejection radius = factor * sqrt(total_area / count).
pub const DEFAULT_RADIUS_FACTOR: f64 = 0.85;
/// Candidate darts per requested point.
pub const DEFAULT_BUDGET_MULT: usize = 30;

#[derive(Debug, Clone, Copy)]
pub struct PoissonConfig {
    pub radius_factor: f64,
    pub budget_mult: usize,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            radius_factor: DEFAULT_RADIUS_FACTOR,
            budget_mult: DEFAULT_BUDGET_MULT,
        }
    }
}

/// How a sampling run went; `accepted - trimmed` leading points of the
/// returned cloud satisfied the radius constraint.
#[derive(Debug, Clone, Copy)]
pub struct SampleStats {
    pub radius: f64,
    pub candidates: usize,
    pub accepted: usize,
    pub trimmed: usize,
    pub topped_up: usize,
}

/// One area-weighted surface draw: face by cumulative area, position by the
/// square-root barycentric trick (uniform over the triangle).
fn draw_surface_point<R: Rng>(
    mesh: &TriMesh,
    cum_area: &[f64],
    rng: &mut R,
) -> (usize, [f64; 3], [f64; 3]) {
    let total = *cum_area.last().expect("non-empty mesh");
    let target = rng.random_range(0.0..total);
    let face = cum_area.partition_point(|&a| a <= target).min(mesh.faces().len() - 1);
    let su = rng.random_range(0.0..1.0_f64).sqrt();
    let v: f64 = rng.random_range(0.0..1.0);
    let bary = [1.0 - su, su * (1.0 - v), su * v];
    (face, bary, mesh.point_on_face(face, bary))
}

fn grid_key(p: [f64; 3], cell: f64) -> (i64, i64, i64) {
    (
        (p[0] / cell).floor() as i64,
        (p[1] / cell).floor() as i64,
        (p[2] / cell).floor() as i64,
    )
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

pub fn poisson_disk_sample(
    mesh: &TriMesh,
    count: usize,
    seed: u64,
) -> Result<ConditionCloud, GeomError> {
    poisson_disk_sample_with(mesh, count, seed, PoissonConfig::default()).map(|(c, _)| c)
}

pub fn poisson_disk_sample_with(
    mesh: &TriMesh,
    count: usize,
    seed: u64,
    cfg: PoissonConfig,
) -> Result<(ConditionCloud, SampleStats), GeomError> {
    if count == 0 {
        return Err(GeomError::BadArgument("sample count must be >= 1".into()));
    }
    let total_area = mesh.total_area();
    if total_area <= 0.0 {
        return Err(GeomError::BadArgument("mesh has zero surface area".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = cfg.radius_factor * (total_area / count as f64).sqrt();
    let r2 = radius * radius;
    let budget = cfg.budget_mult.max(1) * count;

    let mut cum_area = Vec::with_capacity(mesh.areas().len());
    let mut acc = 0.0;
    for &a in mesh.areas() {
        acc += a;
        cum_area.push(acc);
    }

    let mut points: Vec<[f64; 3]> = Vec::new();
    let mut face_id: Vec<usize> = Vec::new();
    let mut bary: Vec<[f64; 3]> = Vec::new();
    // Cell size = radius, so conflicting points are always within the 27
    // neighboring cells.
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();

    for _ in 0..budget {
        if points.len() == count {
            break;
        }
        let (face, b, p) = draw_surface_point(mesh, &cum_area, &mut rng);
        let key = grid_key(p, radius);
        let mut ok = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&(key.0 + dx, key.1 + dy, key.2 + dz)) {
                        if ids.iter().any(|&i| dist2(points[i], p) < r2) {
                            ok = false;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if ok {
            grid.entry(key).or_default().push(points.len());
            points.push(p);
            face_id.push(face);
            bary.push(b);
        }
    }

    let accepted = points.len();
    let mut trimmed = 0;
    let mut topped_up = 0;
    if accepted > count {
        // Random trim: partial shuffle selects the survivors, order kept.
        let mut keep: Vec<usize> = (0..accepted).collect();
        for i in 0..count {
            let j = rng.random_range(i..accepted);
            keep.swap(i, j);
        }
        keep.truncate(count);
        keep.sort_unstable();
        trimmed = accepted - count;
        points = keep.iter().map(|&i| points[i]).collect();
        face_id = keep.iter().map(|&i| face_id[i]).collect();
        bary = keep.iter().map(|&i| bary[i]).collect();
    } else {
        while points.len() < count {
            let (face, b, p) = draw_surface_point(mesh, &cum_area, &mut rng);
            points.push(p);
            face_id.push(face);
            bary.push(b);
            topped_up += 1;
        }
    }

    let stats = SampleStats {
        radius,
        candidates: budget,
        accepted,
        trimmed,
        topped_up,
    };
    Ok((ConditionCloud::new(points, face_id, bary)?, stats))
}
