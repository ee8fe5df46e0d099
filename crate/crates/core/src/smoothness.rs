//! Smoothness constraints `H γ = 0` gluing neighbouring polynomial pieces.
//!
//! For an interior face shared by `T = <o|a,b,c>` and `T~ = <o~|a,c,b>`, the
//! two pieces join with `C^r` continuity iff for every `m <= r` and every
//! `e_a + e_b + e_c = d - m`
//!
//! ```text
//! γ~[o~:m, a:e_a, b:e_b, c:e_c] = Σ_{|α|=m} B^m_α(β) γ[o:α_o, a:e_a+α_a, b:e_b+α_b, c:e_c+α_c]
//! ```
//!
//! where `β` are the barycentric coordinates of `o~` relative to `T` in the
//! order `(o, a, b, c)`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bernstein::{BasisLayout, MultiIndex};
use crate::mesh::Barycentric;
use crate::{Error, Result, TetMesh};

/// How the two tets around an interior face see it.
///
/// Index 0 is `T`, index 1 is `T~`. `T` is the side whose opposite vertex has
/// the smaller global node id, which makes the choice independent of tet order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceCorrespondence {
    pub face: usize,
    pub tets: [usize; 2],
    /// Local slot of the opposite vertex in each tet.
    pub opposite: [usize; 2],
    /// Local slots of the shared vertices: `(a, b, c)` in `T`, `(a, c, b)` in `T~`.
    pub shared: [[usize; 3]; 2],
    /// `β[0]`: `o~` relative to `T` as `(o, a, b, c)`; `β[1]`: `o` relative to `T~` as `(o~, a, c, b)`.
    pub opposite_bary: [Barycentric; 2],
}

impl FaceCorrespondence {
    /// Global node ids in canonical order for each side.
    pub fn canonical_nodes(&self, mesh: &TetMesh) -> [[usize; 4]; 2] {
        std::array::from_fn(|s| {
            let tet = mesh.tets()[self.tets[s]];
            let sh = self.shared[s];
            [tet[self.opposite[s]], tet[sh[0]], tet[sh[1]], tet[sh[2]]]
        })
    }
}

/// Builds the correspondence of interior face `face` (index into the interior faces).
pub fn face_correspondence(mesh: &TetMesh, face: usize) -> Result<FaceCorrespondence> {
    let f = mesh.interior_face(face)?;
    let (s0, s1) = (f.sides[0], f.sides[1]);
    let opp_node = |s: crate::mesh::FaceSide| mesh.tets()[s.tet][s.opposite];
    let (t, tt) = if opp_node(s0) <= opp_node(s1) { (s0, s1) } else { (s1, s0) };

    let tet_t = mesh.tets()[t.tet];
    let tet_tt = mesh.tets()[tt.tet];
    let shared_t: Vec<usize> = (0..4).filter(|&i| i != t.opposite).collect();
    let local_in_tt = |node: usize| tet_tt.iter().position(|&v| v == node).expect("shared node");
    let (a, b, c) = (tet_t[shared_t[0]], tet_t[shared_t[1]], tet_t[shared_t[2]]);
    let shared = [
        [shared_t[0], shared_t[1], shared_t[2]],
        [local_in_tt(a), local_in_tt(c), local_in_tt(b)],
    ];
    let opposite = [t.opposite, tt.opposite];
    let tets = [t.tet, tt.tet];

    let nodes = mesh.nodes();
    let canon = |bary: Barycentric, side: usize| -> Barycentric {
        let sh = shared[side];
        [bary[opposite[side]], bary[sh[0]], bary[sh[1]], bary[sh[2]]]
    };
    let beta_t = canon(mesh.barycentric(t.tet, &nodes[tet_tt[tt.opposite]])?, 0);
    let beta_tt = canon(mesh.barycentric(tt.tet, &nodes[tet_t[t.opposite]])?, 1);
    Ok(FaceCorrespondence {
        face,
        tets,
        opposite,
        shared,
        opposite_bary: [beta_t, beta_tt],
    })
}

/// Where a constraint row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowOrigin {
    pub face: usize,
    pub order: usize,
    /// Exponents `(e_a, e_b, e_c)` on the shared vertices.
    pub face_index: [usize; 3],
}

/// A sparse row: sorted `(column, value)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// Rows for one interior face, with columns offset by each tet's block.
pub fn continuity_rows(
    layout: &BasisLayout,
    r: usize,
    fc: &FaceCorrespondence,
) -> Result<Vec<(RowOrigin, SparseRow)>> {
    let d = layout.degree();
    if r >= d {
        return Err(Error::SmoothnessTooHigh { r, d });
    }
    let n = layout.dim();
    let beta = fc.opposite_bary[0];
    let [o, a, b, c] = [fc.opposite[0], fc.shared[0][0], fc.shared[0][1], fc.shared[0][2]];
    let [ot, at, ct, bt] = [fc.opposite[1], fc.shared[1][0], fc.shared[1][1], fc.shared[1][2]];
    let off_t = fc.tets[0] * n;
    let off_tt = fc.tets[1] * n;

    let mut rows = Vec::new();
    for m in 0..=r {
        let sub = BasisLayout::new(m);
        let weights = sub.eval_basis(&beta);
        for mi in layout.indices().iter().filter(|mi| mi.0[o] == m) {
            let (ea, eb, ec) = (mi.0[a], mi.0[b], mi.0[c]);
            let mut row: SparseRow = Vec::with_capacity(sub.dim() + 1);
            for (alpha, &w) in sub.indices().iter().zip(&weights) {
                if w == 0.0 {
                    continue;
                }
                let mut e = [0usize; 4];
                e[o] = alpha.0[0];
                e[a] = ea + alpha.0[1];
                e[b] = eb + alpha.0[2];
                e[c] = ec + alpha.0[3];
                row.push((off_t + layout.position(&MultiIndex(e)), w));
            }
            let mut e = [0usize; 4];
            e[ot] = m;
            e[at] = ea;
            e[bt] = eb;
            e[ct] = ec;
            row.push((off_tt + layout.position(&MultiIndex(e)), -1.0));
            row.sort_by_key(|&(col, _)| col);
            rows.push((RowOrigin { face: fc.face, order: m, face_index: [ea, eb, ec] }, row));
        }
    }
    Ok(rows)
}

/// Number of rows contributed by one interior face.
pub fn rows_per_face(d: usize, r: usize) -> usize {
    (0..=r.min(d)).map(|m| (d - m + 1) * (d - m + 2) / 2).sum()
}

/// Sparse constraint matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    origins: Vec<RowOrigin>,
}

impl ConstraintMatrix {
    pub fn from_rows(ncols: usize, rows: Vec<(RowOrigin, SparseRow)>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut origins = Vec::with_capacity(rows.len());
        for (o, row) in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
            origins.push(o);
        }
        ConstraintMatrix { ncols, row_ptr, cols, vals, origins }
    }

    pub fn nrows(&self) -> usize {
        self.origins.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn origins(&self) -> &[RowOrigin] {
        &self.origins
    }

    /// Columns and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[s..e], &self.vals[s..e])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `H X` for a dense `X` with `ncols` rows.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), x.ncols());
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                for j in 0..x.ncols() {
                    out[(i, j)] += v * x[(c, j)];
                }
            }
        }
        out
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows())
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                m[(i, c)] += v;
            }
        }
        m
    }

    /// Matrix Market coordinate format, 1-based.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows(), self.ncols, self.nnz())?;
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                writeln!(out, "{} {} {:e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Stacks the continuity rows of every interior face.
pub fn assemble_h(mesh: &TetMesh, layout: &BasisLayout, r: usize) -> Result<ConstraintMatrix> {
    let d = layout.degree();
    if r >= d {
        return Err(Error::SmoothnessTooHigh { r, d });
    }
    let mut rows = Vec::with_capacity(mesh.num_interior_faces() * rows_per_face(d, r));
    for f in 0..mesh.num_interior_faces() {
        let fc = face_correspondence(mesh, f)?;
        rows.extend(continuity_rows(layout, r, &fc)?);
    }
    Ok(ConstraintMatrix::from_rows(mesh.num_tets() * layout.dim(), rows))
}
