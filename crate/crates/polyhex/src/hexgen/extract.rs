//! Structured hex extraction from a voxel model.

use std::collections::BTreeMap;

use super::{HexError, HexMesh};
use crate::polycube::VoxelModel;

/// Offsets of the eight corners in the shared corner convention.
const CORNER_OFFSETS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Splits every voxel into `s³` hexes on the refined grid.
///
/// Vertices shared between cells are deduplicated by their integer
/// coordinate on the `s`-times-refined lattice, so the mesh is conforming
/// by construction. World positions are `h · key / s`.
pub fn extract_hexes(vm: &VoxelModel, s: usize) -> Result<HexMesh, HexError> {
    if s == 0 {
        return Err(HexError::BadArgument("subdivision must be >= 1".into()));
    }
    let sf = s as i64;
    let scale = vm.h() / s as f64;
    let mut ids: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut cells: Vec<[usize; 8]> = Vec::new();
    for &cell in vm.occupancy() {
        let base = [cell[0] * sf, cell[1] * sf, cell[2] * sf];
        for a in 0..sf {
            for b in 0..sf {
                for c in 0..sf {
                    let mut hex = [0usize; 8];
                    for (slot, off) in CORNER_OFFSETS.iter().enumerate() {
                        let key = [
                            base[0] + a + off[0],
                            base[1] + b + off[1],
                            base[2] + c + off[2],
                        ];
                        let next = vertices.len();
                        let id = *ids.entry(key).or_insert_with(|| {
                            vertices.push([
                                key[0] as f64 * scale,
                                key[1] as f64 * scale,
                                key[2] as f64 * scale,
                            ]);
                            next
                        });
                        hex[slot] = id;
                    }
                    cells.push(hex);
                }
            }
        }
    }
    HexMesh::new(vertices, cells, vm.h())
}

#[cfg(test)]
mod tests {
    use super::*;

    use std::collections::BTreeSet;

    use crate::hexgen::HEX_FACES;
    use crate::polycube::testshapes::{box_union, ring_occupancy, Box3};

    fn model(boxes: &[Box3]) -> VoxelModel {
        VoxelModel::new(1.0, box_union(boxes)).unwrap()
    }

    #[test]
    fn one_voxel_is_one_hex() {
        let vm = model(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }]);
        let hm = extract_hexes(&vm, 1).unwrap();
        assert_eq!(hm.cell_count(), 1);
        assert_eq!(hm.vertex_count(), 8);
        assert_eq!(hm.boundary_vertex_count(), 8);
        assert_eq!(hm.boundary_quads().len(), 6);
    }

    #[test]
    fn one_voxel_subdivided_twice() {
        let vm = model(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }]);
        let hm = extract_hexes(&vm, 2).unwrap();
        assert_eq!(hm.cell_count(), 8);
        assert_eq!(hm.vertex_count(), 27);
        assert_eq!(hm.boundary_vertex_count(), 26);
        // The lone interior vertex is the grid center.
        let interior: Vec<usize> =
            (0..27).filter(|&v| !hm.is_boundary(v)).collect();
        assert_eq!(interior.len(), 1);
        assert_eq!(hm.vertices()[interior[0]], [0.5, 0.5, 0.5]);
    }

    #[test]
    fn bar_shares_the_interface_vertices() {
        let vm = model(&[Box3 { origin: [0, 0, 0], size: [2, 1, 1] }]);
        let hm = extract_hexes(&vm, 1).unwrap();
        assert_eq!(hm.cell_count(), 2);
        assert_eq!(hm.vertex_count(), 12);
        assert_eq!(hm.boundary_vertex_count(), 12);
        assert_eq!(hm.boundary_quads().len(), 10);
    }

    #[test]
    fn zero_subdivision_rejected() {
        let vm = model(&[Box3 { origin: [0, 0, 0], size: [1, 1, 1] }]);
        assert!(extract_hexes(&vm, 0).is_err());
    }

    /// Interior quads must pair up with opposite orientations, and the
    /// boundary quad count must equal the voxel boundary face count
    /// times `s²`.
    #[test]
    fn extraction_is_conforming() {
        let shapes: Vec<(VoxelModel, usize)> = vec![
            (model(&[Box3 { origin: [0, 0, 0], size: [2, 1, 1] }]), 2),
            (VoxelModel::new(0.5, ring_occupancy()).unwrap(), 1),
            (
                model(&[
                    Box3 { origin: [0, 0, 0], size: [2, 2, 1] },
                    Box3 { origin: [1, 1, 1], size: [1, 2, 2] },
                ]),
                3,
            ),
        ];
        for (vm, s) in shapes {
            let hm = extract_hexes(&vm, s).unwrap();
            let mut oriented: BTreeMap<[usize; 4], Vec<[usize; 4]>> = BTreeMap::new();
            for cell in hm.cells() {
                for local in HEX_FACES {
                    let quad =
                        [cell[local[0]], cell[local[1]], cell[local[2]], cell[local[3]]];
                    let mut key = quad;
                    key.sort_unstable();
                    oriented.entry(key).or_default().push(quad);
                }
            }
            for quads in oriented.values() {
                assert!(quads.len() == 1 || quads.len() == 2);
                if let [a, b] = quads.as_slice() {
                    // Rotate `b` to start at a[0]; an opposite orientation
                    // then walks a's corners backwards.
                    let start =
                        (0..4).find(|&k| b[k] == a[0]).expect("same corner set");
                    let rotated: Vec<usize> = (0..4).map(|k| b[(start + k) % 4]).collect();
                    assert_eq!(rotated, [a[0], a[3], a[2], a[1]]);
                }
            }
            let expected_boundary = vm.boundary_faces().len() * s * s;
            assert_eq!(hm.boundary_quads().len(), expected_boundary);
            // Refined cells tile the voxels exactly.
            assert_eq!(hm.cell_count(), vm.voxel_count() * s * s * s);
            let unique: BTreeSet<usize> = hm.cells().iter().flatten().copied().collect();
            assert_eq!(unique.len(), hm.vertex_count());
        }
    }
}
