//! The reduced penalized normal equations `(A + c R) θ = b`, `c = λ / n`.
//!
//! With `N = A + s R` (any `s > 0` making `N` positive definite) factored as
//! `N = L Lᵀ` and `L⁻¹ A L⁻ᵀ = U diag(g) Uᵀ`, both `A` and `R` are diagonal
//! in the basis `W = L⁻ᵀ U`: `Wᵀ A W = diag(g)`, `Wᵀ R W = diag(ρ)`. Every
//! `λ` then costs one diagonal solve.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SpectralSystem {
    w: DMatrix<f64>,
    g: DVector<f64>,
    rho: DVector<f64>,
    z: DVector<f64>,
}

/// Relative size below which a diagonal entry counts as zero.
const SINGULAR_TOL: f64 = 1e-12;

impl SpectralSystem {
    /// Diagonalizes the pencil `(A, R)` and projects `b`.
    pub fn new(a: &DMatrix<f64>, r: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let k = a.nrows();
        if k == 0 {
            return Ok(SpectralSystem {
                w: DMatrix::zeros(0, 0),
                g: DVector::zeros(0),
                rho: DVector::zeros(0),
                z: DVector::zeros(0),
            });
        }
        let (ta, tr) = (a.trace(), r.trace());
        let s = if tr > 0.0 && ta > 0.0 { ta / tr } else { 1.0 };
        let n = a + r * s;
        let chol = n.cholesky().ok_or_else(|| {
            Error::Singular(
                "data and penalty leave part of the spline space undetermined \
                 (fewer than four non-coplanar points?)"
                    .into(),
            )
        })?;
        let l = chol.l();
        let linv_a = l.solve_lower_triangular(a).expect("nonzero diagonal");
        let k_mat = l.solve_lower_triangular(&linv_a.transpose()).expect("nonzero diagonal");
        let k_sym = (&k_mat + k_mat.transpose()) * 0.5;
        let eig = k_sym.symmetric_eigen();
        let w = l.transpose().solve_upper_triangular(&eig.eigenvectors).expect("nonzero diagonal");
        let g = eig.eigenvalues.map(|x| x.max(0.0));
        let rw = r * &w;
        let rho = DVector::from_fn(k, |i, _| w.column(i).dot(&rw.column(i)).max(0.0));
        let z = w.transpose() * b;
        Ok(SpectralSystem { w, g, rho, z })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn denominators(&self, c: f64) -> Result<DVector<f64>> {
        let scale = self.g.max().max(c * self.rho.max()).max(f64::MIN_POSITIVE);
        let d = self.g.zip_map(&self.rho, |g, r| g + c * r);
        if d.iter().any(|&x| !(x > SINGULAR_TOL * scale)) {
            return Err(Error::Singular(format!(
                "reduced system is singular at effective penalty {c:e}"
            )));
        }
        Ok(d)
    }

    /// `θ(c)` and `tr S(c) = tr((A + cR)⁻¹ A)`.
    pub fn solve(&self, c: f64) -> Result<(DVector<f64>, f64)> {
        let d = self.denominators(c)?;
        let coef = self.z.component_div(&d);
        let trace = self.g.component_div(&d).sum();
        Ok((&self.w * coef, trace))
    }
}

/// `n * RSS / (n - tr S)^2`, or infinity when `tr S >= n`.
pub fn gcv_score(rss: f64, n: usize, tr_s: f64) -> f64 {
    let dof = n as f64 - tr_s;
    if dof <= 0.0 {
        return f64::INFINITY;
    }
    n as f64 * rss / (dof * dof)
}
