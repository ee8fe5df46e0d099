use std::collections::HashMap;

use super::{Aabb, Point3, TetMesh};
use crate::{Error, Result};

/// Axis permutations of the Kuhn (Freudenthal) subdivision; each cell splits
/// into six tetrahedra sharing the diagonal from its low to its high corner.
const KUHN: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Structured tetrahedral mesh of a box with optional grid-aligned box holes.
///
/// Cells whose centre lies inside a hole are dropped; nodes not used by any
/// remaining tetrahedron are discarded.
pub fn generate_box_mesh(bounds: &Aabb, resolution: [usize; 3], holes: &[Aabb]) -> Result<TetMesh> {
    if resolution.iter().any(|&r| r == 0) {
        return Err(Error::InvalidInput(format!(
            "resolution must be at least 1 per axis, got {resolution:?}"
        )));
    }
    let mut h = [0.0; 3];
    for a in 0..3 {
        h[a] = (bounds.max[a] - bounds.min[a]) / resolution[a] as f64;
        if !(h[a] > 0.0 && h[a].is_finite()) {
            return Err(Error::InvalidInput(format!("degenerate bounds {bounds:?}")));
        }
    }
    for hole in holes {
        for a in 0..3 {
            for x in [hole.min[a], hole.max[a]] {
                let g = (x - bounds.min[a]) / h[a];
                if (g - g.round()).abs() > 1e-9 * (1.0 + g.abs()) {
                    return Err(Error::HoleNotAligned(format!("{hole:?}")));
                }
            }
        }
    }

    let [nx, ny, nz] = resolution;
    let grid_point = |i: usize, j: usize, k: usize| {
        Point3::new(
            bounds.min[0] + i as f64 * h[0],
            bounds.min[1] + j as f64 * h[1],
            bounds.min[2] + k as f64 * h[2],
        )
    };
    let mut node_id: HashMap<[usize; 3], usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut tets = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let centre = grid_point(i, j, k) + nalgebra::Vector3::new(h[0], h[1], h[2]) * 0.5;
                if holes.iter().any(|hole| hole.contains(&centre)) {
                    continue;
                }
                for perm in KUHN {
                    let mut corner = [i, j, k];
                    let mut tet = [0usize; 4];
                    for (slot, step) in std::iter::once(None).chain(perm.iter().map(Some)).enumerate() {
                        if let Some(&axis) = step {
                            corner[axis] += 1;
                        }
                        tet[slot] = *node_id.entry(corner).or_insert_with(|| {
                            nodes.push(grid_point(corner[0], corner[1], corner[2]));
                            nodes.len() - 1
                        });
                    }
                    tets.push(tet);
                }
            }
        }
    }
    if tets.is_empty() {
        return Err(Error::EmptyDomain);
    }
    TetMesh::new(nodes, tets)
}
