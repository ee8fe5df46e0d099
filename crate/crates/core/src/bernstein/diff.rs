use nalgebra::DMatrix;

use super::{basis_dim, BasisLayout};
use crate::{Error, Result};

const DIRECTION_TOL: f64 = 1e-12;

/// Coefficient matrix of an order-`m` directional derivative.
///
/// For a B-form `γ` of degree `d`, `matrixᵀ γ` is the B-form (degree `d - m`)
/// of the derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix {
    pub order: usize,
    pub degree: usize,
    pub matrix: DMatrix<f64>,
}

impl DiffMatrix {
    /// Applies the matrix to a coefficient block, giving the derivative's block.
    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.matrix.ncols()];
        for (i, &g) in coeffs.iter().enumerate() {
            if g != 0.0 {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += self.matrix[(i, j)] * g;
                }
            }
        }
        out
    }
}

fn check_direction(a: &[f64; 4]) -> Result<()> {
    let sum: f64 = a.iter().sum();
    let scale = a.iter().map(|x| x.abs()).fold(1.0, f64::max);
    if !(sum.abs() <= DIRECTION_TOL * scale) {
        return Err(Error::NotADirection { sum });
    }
    Ok(())
}

/// First-order matrix `C^(1)_d(a)` of shape `dim(d) x dim(d-1)`.
pub fn diff_matrix_first(d: usize, a: &[f64; 4]) -> Result<DiffMatrix> {
    check_direction(a)?;
    if d == 0 {
        return Err(Error::InvalidInput("derivative of a degree-0 basis".into()));
    }
    let rows = BasisLayout::new(d);
    let cols = BasisLayout::new(d - 1);
    let mut m = DMatrix::zeros(rows.dim(), cols.dim());
    let df = d as f64;
    for (i, mi) in rows.indices().iter().enumerate() {
        for (slot, &ac) in a.iter().enumerate() {
            if let Some(lo) = mi.lowered(slot) {
                m[(i, cols.position(&lo))] += df * ac;
            }
        }
    }
    Ok(DiffMatrix { order: 1, degree: d, matrix: m })
}

/// Order-`m` matrix `C^(1)_d(u1) C^(1)_{d-1}(u2) ... C^(1)_{d-m+1}(um)`.
pub fn diff_matrix(d: usize, dirs: &[[f64; 4]]) -> Result<DiffMatrix> {
    let m = dirs.len();
    if m > d {
        return Err(Error::InvalidInput(format!(
            "derivative order {m} exceeds degree {d}"
        )));
    }
    let mut acc = DMatrix::identity(basis_dim(d), basis_dim(d));
    for (step, a) in dirs.iter().enumerate() {
        acc *= diff_matrix_first(d - step, a)?.matrix;
    }
    Ok(DiffMatrix { order: m, degree: d, matrix: acc })
}
