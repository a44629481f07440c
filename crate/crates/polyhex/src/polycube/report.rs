//! Structural census of a voxel model's boundary surface.
//!
//! The boundary quads form a closed surface whose combinatorics are small
//! enough to audit exactly: Euler characteristic and genus per connected
//! surface piece, a census of corner vertices (where the number of
//! incident faces differs from the flat count of four), and edges shared
//! by more than two faces, which mark non-manifold contact such as two
//! solids touching along an edge.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::VoxelModel;

/// One face-connected piece of the boundary surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceComponent {
    pub faces: usize,
    /// Euler characteristic `V − E + F` of the piece.
    pub chi: i64,
    /// `(2 − chi) / 2` when that is a non-negative integer — the genus of
    /// a closed orientable surface. `None` when the piece is not such a
    /// surface (odd characteristic from non-manifold contact).
    pub genus: Option<i64>,
}

/// Summary of a voxel model's solid and surface structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureReport {
    pub voxels: usize,
    pub boundary_faces: usize,
    /// 6-connected components of the occupied cells.
    pub interior_components: usize,
    /// Face-connected boundary pieces in discovery order.
    pub surface_components: Vec<SurfaceComponent>,
    /// Vertices whose incident face count differs from 4, keyed by that
    /// count: `{3: 8}` is a box's eight corners.
    pub corner_histogram: BTreeMap<usize, usize>,
    /// Edges incident to more than two faces.
    pub non_manifold_edges: usize,
    /// Euler characteristic of the whole boundary.
    pub chi: i64,
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "voxels: {} in {} interior component(s)",
            self.voxels, self.interior_components
        )?;
        writeln!(
            f,
            "boundary: {} faces, euler characteristic {}",
            self.boundary_faces, self.chi
        )?;
        writeln!(f, "surface components: {}", self.surface_components.len())?;
        for (i, c) in self.surface_components.iter().enumerate() {
            match c.genus {
                Some(g) => {
                    writeln!(f, "  [{i}] {} faces, chi {}, genus {g}", c.faces, c.chi)?
                }
                None => writeln!(
                    f,
                    "  [{i}] {} faces, chi {} (not a closed manifold surface)",
                    c.faces, c.chi
                )?,
            }
        }
        if self.corner_histogram.is_empty() {
            writeln!(f, "corner census: none")?;
        } else {
            let parts: Vec<String> = self
                .corner_histogram
                .iter()
                .map(|(faces, count)| format!("{count} vertices with {faces} faces"))
                .collect();
            writeln!(f, "corner census: {}", parts.join(", "))?;
        }
        write!(f, "non-manifold edges: {}", self.non_manifold_edges)
    }
}

type Edge = ([i64; 3], [i64; 3]);

fn edge_key(a: [i64; 3], b: [i64; 3]) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Computes the full structural census of a voxel model.
pub fn structure_report(vm: &VoxelModel) -> StructureReport {
    let quads: Vec<[[i64; 3]; 4]> =
        vm.boundary_faces().iter().map(|f| f.corners()).collect();

    let mut vert_faces: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    let mut edge_faces: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (fi, q) in quads.iter().enumerate() {
        for k in 0..4 {
            *vert_faces.entry(q[k]).or_insert(0) += 1;
            edge_faces.entry(edge_key(q[k], q[(k + 1) % 4])).or_default().push(fi);
        }
    }
    let chi = vert_faces.len() as i64 - edge_faces.len() as i64 + quads.len() as i64;
    let mut corner_histogram = BTreeMap::new();
    for &count in vert_faces.values() {
        if count != 4 {
            *corner_histogram.entry(count).or_insert(0) += 1;
        }
    }
    let non_manifold_edges = edge_faces.values().filter(|fs| fs.len() > 2).count();

    // Face-connected components across shared edges.
    let mut comp_of = vec![usize::MAX; quads.len()];
    let mut surface_components = Vec::new();
    for seed in 0..quads.len() {
        if comp_of[seed] != usize::MAX {
            continue;
        }
        let id = surface_components.len();
        let mut member_faces = Vec::new();
        let mut queue = VecDeque::from([seed]);
        comp_of[seed] = id;
        while let Some(fi) = queue.pop_front() {
            member_faces.push(fi);
            for k in 0..4 {
                let key = edge_key(quads[fi][k], quads[fi][(k + 1) % 4]);
                for &other in &edge_faces[&key] {
                    if comp_of[other] == usize::MAX {
                        comp_of[other] = id;
                        queue.push_back(other);
                    }
                }
            }
        }
        let mut verts: BTreeSet<[i64; 3]> = BTreeSet::new();
        let mut edges: BTreeSet<Edge> = BTreeSet::new();
        for &fi in &member_faces {
            for k in 0..4 {
                verts.insert(quads[fi][k]);
                edges.insert(edge_key(quads[fi][k], quads[fi][(k + 1) % 4]));
            }
        }
        let c = verts.len() as i64 - edges.len() as i64 + member_faces.len() as i64;
        let genus = if c % 2 == 0 && (2 - c) / 2 >= 0 {
            Some((2 - c) / 2)
        } else {
            None
        };
        surface_components.push(SurfaceComponent { faces: member_faces.len(), chi: c, genus });
    }

    // 6-connected components of the occupied cells.
    let occ = vm.occupancy();
    let mut seen: BTreeSet<[i64; 3]> = BTreeSet::new();
    let mut interior_components = 0;
    for &seed in occ {
        if !seen.insert(seed) {
            continue;
        }
        interior_components += 1;
        let mut queue = VecDeque::from([seed]);
        while let Some(cell) = queue.pop_front() {
            for axis in 0..3 {
                for step in [-1i64, 1] {
                    let mut n = cell;
                    n[axis] += step;
                    if occ.contains(&n) && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
    }

    StructureReport {
        voxels: vm.voxel_count(),
        boundary_faces: quads.len(),
        interior_components,
        surface_components,
        corner_histogram,
        non_manifold_edges,
        chi,
    }
}
