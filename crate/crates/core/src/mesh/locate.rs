use super::{Aabb, Point3};

/// Uniform grid over the mesh bounding box; each cell lists the
/// nondegenerate tetrahedra whose inflated bounding box overlaps it,
/// in ascending id order.
#[derive(Debug, Clone)]
pub(super) struct Locator {
    origin: [f64; 3],
    cell: [f64; 3],
    dims: [usize; 3],
    pad: f64,
    cells: Vec<Vec<u32>>,
}

impl Locator {
    pub(super) fn build(
        nodes: &[Point3],
        tets: &[[usize; 4]],
        volumes: &[f64],
        vol_tol: f64,
        bounds: &Aabb,
    ) -> Self {
        let pad = 1e-9 * bounds.diagonal().max(f64::MIN_POSITIVE);
        let per_axis = ((tets.len() as f64).cbrt().ceil() as usize).clamp(1, 128);
        let ext: Vec<f64> = (0..3)
            .map(|a| (bounds.max[a] - bounds.min[a]).max(pad))
            .collect();
        let longest = ext.iter().cloned().fold(0.0, f64::max);
        let mut dims = [1usize; 3];
        let mut cell = [0.0; 3];
        for a in 0..3 {
            dims[a] = ((per_axis as f64 * ext[a] / longest).ceil() as usize).max(1);
            cell[a] = ext[a] / dims[a] as f64;
        }
        let mut loc = Locator {
            origin: bounds.min,
            cell,
            dims,
            pad,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for (t, tet) in tets.iter().enumerate() {
            if volumes[t] <= vol_tol {
                continue;
            }
            let (lo, hi) = tet_box(nodes, tet);
            let (clo, chi) = loc.cell_range(&lo, &hi);
            for k in clo[2]..=chi[2] {
                for j in clo[1]..=chi[1] {
                    for i in clo[0]..=chi[0] {
                        let idx = loc.index([i, j, k]);
                        loc.cells[idx].push(t as u32);
                    }
                }
            }
        }
        loc
    }

    fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    fn coord(&self, x: f64, a: usize) -> usize {
        let f = ((x - self.origin[a]) / self.cell[a]).floor();
        if f < 0.0 {
            0
        } else {
            (f as usize).min(self.dims[a] - 1)
        }
    }

    fn cell_range(&self, lo: &[f64; 3], hi: &[f64; 3]) -> ([usize; 3], [usize; 3]) {
        let mut a0 = [0; 3];
        let mut a1 = [0; 3];
        for a in 0..3 {
            a0[a] = self.coord(lo[a] - self.pad, a);
            a1[a] = self.coord(hi[a] + self.pad, a);
        }
        (a0, a1)
    }

    pub(super) fn candidates(&self, p: &Point3) -> Option<&[u32]> {
        for a in 0..3 {
            let lo = self.origin[a] - self.pad;
            let hi = self.origin[a] + self.cell[a] * self.dims[a] as f64 + self.pad;
            if !(p[a] >= lo && p[a] <= hi) {
                return None;
            }
        }
        let c = [self.coord(p.x, 0), self.coord(p.y, 1), self.coord(p.z, 2)];
        Some(&self.cells[self.index(c)])
    }

    pub(super) fn tets_in_box(&self, lo: &Point3, hi: &Point3) -> Vec<usize> {
        let (clo, chi) = self.cell_range(&[lo.x, lo.y, lo.z], &[hi.x, hi.y, hi.z]);
        let mut out = Vec::new();
        for k in clo[2]..=chi[2] {
            for j in clo[1]..=chi[1] {
                for i in clo[0]..=chi[0] {
                    out.extend(self.cells[self.index([i, j, k])].iter().map(|&t| t as usize));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub(super) fn tet_box(nodes: &[Point3], tet: &[usize; 4]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &v in tet {
        for a in 0..3 {
            lo[a] = lo[a].min(nodes[v][a]);
            hi[a] = hi[a].max(nodes[v][a]);
        }
    }
    (lo, hi)
}
