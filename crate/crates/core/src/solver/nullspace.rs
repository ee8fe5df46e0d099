//! Orthonormal basis of `ker H`.
//!
//! Rows of the form `v x_i - v x_j = 0` are eliminated first by merging the
//! columns they tie into groups; the remaining rows are mapped into group space,
//! where a column-pivoted QR of the transposed matrix splits off the kernel:
//! `(H E)ᵀ P = Q R`, and the trailing columns of `Q` past the numerical rank
//! span `ker(H E)`.

use nalgebra::DMatrix;

use crate::smoothness::ConstraintMatrix;

/// Kernel basis `Q2` with orthonormal columns, stored densely.
#[derive(Debug, Clone)]
pub struct NullSpace {
    pub basis: DMatrix<f64>,
    /// Numerical rank of `H`.
    pub rank: usize,
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

fn is_equality(cols: &[usize], vals: &[f64]) -> bool {
    cols.len() == 2 && vals[0] != 0.0 && vals[0] == -vals[1]
}

/// Kernel of `h`; singular values of the reduced rows below
/// `rank_tol * max |R_ii|` count as zero.
pub fn nullspace_basis(h: &ConstraintMatrix, rank_tol: f64) -> NullSpace {
    let ncols = h.ncols();
    let mut uf = UnionFind((0..ncols).collect());
    let mut rest = Vec::new();
    for i in 0..h.nrows() {
        let (c, v) = h.row(i);
        if is_equality(c, v) {
            uf.union(c[0], c[1]);
        } else if !c.is_empty() {
            rest.push(i);
        }
    }
    let mut group_of = vec![usize::MAX; ncols];
    let mut sizes: Vec<usize> = Vec::new();
    let mut root_group = vec![usize::MAX; ncols];
    for c in 0..ncols {
        let r = uf.find(c);
        if root_group[r] == usize::MAX {
            root_group[r] = sizes.len();
            sizes.push(0);
        }
        group_of[c] = root_group[r];
        sizes[group_of[c]] += 1;
    }
    let ngroups = sizes.len();
    let inv_sqrt: Vec<f64> = sizes.iter().map(|&s| 1.0 / (s as f64).sqrt()).collect();
    let equalities = ncols - ngroups;

    let (z, rest_rank) = if rest.is_empty() {
        (DMatrix::identity(ngroups, ngroups), 0)
    } else {
        // Columns of (H_rest E)ᵀ.
        let mut m = faer::Mat::<f64>::zeros(ngroups, rest.len());
        for (j, &i) in rest.iter().enumerate() {
            let (c, v) = h.row(i);
            for (&c, &v) in c.iter().zip(v) {
                let g = group_of[c];
                m[(g, j)] += v * inv_sqrt[g];
            }
        }
        let qr = m.col_piv_qr();
        let r = qr.R();
        let diag = ngroups.min(rest.len());
        let diag_max = (0..diag).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let rank = (0..diag).filter(|&i| r[(i, i)].abs() > rank_tol * diag_max).count();
        let q = qr.compute_Q();
        let z = DMatrix::from_fn(ngroups, ngroups - rank, |i, j| q[(i, rank + j)]);
        (z, rank)
    };

    let k = z.ncols();
    let mut basis = DMatrix::zeros(ncols, k);
    for c in 0..ncols {
        let g = group_of[c];
        for j in 0..k {
            basis[(c, j)] = z[(g, j)] * inv_sqrt[g];
        }
    }
    NullSpace { basis, rank: equalities + rest_rank }
}
