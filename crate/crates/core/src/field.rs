//! Spline fields: a mesh, a basis layout and one coefficient block per tet.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bernstein::{de_casteljau, diff_matrix_first, BasisLayout};
use crate::mesh::{Barycentric, Vector3, BARY_TOL};
use crate::{Error, Point3, Result, TetMesh};

/// A trivariate polynomial as a map from exponents `(a, b, c)` of `x^a y^b z^c`
/// to coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: BTreeMap<[u32; 3], f64>,
}

impl Polynomial {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::new().with([0, 0, 0], c)
    }

    /// Adds `coeff * x^e0 y^e1 z^e2`.
    pub fn with(mut self, exps: [u32; 3], coeff: f64) -> Self {
        *self.terms.entry(exps).or_insert(0.0) += coeff;
        self
    }

    /// Every monomial of total degree `<= degree` with coefficients from `coeff`.
    pub fn dense(degree: u32, mut coeff: impl FnMut([u32; 3]) -> f64) -> Self {
        let mut p = Self::new();
        for a in 0..=degree {
            for b in 0..=degree - a {
                for c in 0..=degree - a - b {
                    p = p.with([a, b, c], coeff([a, b, c]));
                }
            }
        }
        p
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, &c)| c != 0.0)
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, p: &Point3) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| c * p.x.powi(e[0] as i32) * p.y.powi(e[1] as i32) * p.z.powi(e[2] as i32))
            .sum()
    }

    /// Gradient `(df/dx, df/dy, df/dz)`.
    pub fn gradient(&self, p: &Point3) -> Vector3 {
        let mut g = Vector3::zeros();
        for (e, &c) in &self.terms {
            for a in 0..3 {
                if e[a] == 0 {
                    continue;
                }
                let mut t = c * e[a] as f64;
                for (k, &ek) in e.iter().enumerate() {
                    let pow = if k == a { ek - 1 } else { ek };
                    t *= p[k].powi(pow as i32);
                }
                g[a] += t;
            }
        }
        g
    }
}

/// Serialized description of a field, sufficient to check it against a mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub degree: usize,
    pub smoothness: Option<usize>,
    pub mesh_checksum: String,
    pub num_tets: usize,
    pub block_size: usize,
}

/// Coefficient vector `γ = (γ_T1, ..., γ_TN)` interpreted on a mesh.
#[derive(Debug, Clone)]
pub struct SplineField {
    mesh: Arc<TetMesh>,
    layout: BasisLayout,
    coeffs: Vec<f64>,
}

impl SplineField {
    pub fn new(mesh: Arc<TetMesh>, layout: BasisLayout, coeffs: Vec<f64>) -> Result<Self> {
        let want = mesh.num_tets() * layout.dim();
        if coeffs.len() != want {
            return Err(Error::Dimension(format!(
                "field needs {want} coefficients, got {}",
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Numerical(format!("coefficient {i} is not finite")));
        }
        Ok(SplineField { mesh, layout, coeffs })
    }

    pub fn zeros(mesh: Arc<TetMesh>, layout: BasisLayout) -> Self {
        let n = mesh.num_tets() * layout.dim();
        SplineField { mesh, layout, coeffs: vec![0.0; n] }
    }

    pub fn mesh(&self) -> &Arc<TetMesh> {
        &self.mesh
    }

    pub fn layout(&self) -> &BasisLayout {
        &self.layout
    }

    pub fn degree(&self) -> usize {
        self.layout.degree()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn block(&self, tet: usize) -> &[f64] {
        let n = self.layout.dim();
        &self.coeffs[tet * n..(tet + 1) * n]
    }

    pub fn header(&self, smoothness: Option<usize>) -> FieldHeader {
        FieldHeader {
            degree: self.degree(),
            smoothness,
            mesh_checksum: self.mesh.checksum(),
            num_tets: self.mesh.num_tets(),
            block_size: self.layout.dim(),
        }
    }

    /// Value at `p`, or `None` outside the mesh.
    pub fn eval(&self, p: &Point3) -> Option<f64> {
        let (tet, b) = self.mesh.locate(p, BARY_TOL)?;
        Some(self.eval_bary(tet, &b))
    }

    /// Value of the polynomial piece of `tet` at `p` (extrapolated if outside).
    pub fn eval_in_tet(&self, tet: usize, p: &Point3) -> f64 {
        let b = self.mesh.barycentric_unchecked(tet, p);
        self.eval_bary(tet, &b)
    }

    pub fn eval_bary(&self, tet: usize, b: &Barycentric) -> f64 {
        de_casteljau(self.layout.degree(), self.block(tet), b)
    }

    /// Derivative of the piece of `tet` at `p` in direction `u` (not normalized).
    pub fn directional_derivative(&self, tet: usize, p: &Point3, u: &Vector3) -> Result<f64> {
        let d = self.layout.degree();
        if d == 0 {
            return Ok(0.0);
        }
        let a = self.mesh.directional_coords(tet, u)?;
        let c = diff_matrix_first(d, &a)?;
        let deriv = c.apply(self.block(tet));
        let b = self.mesh.barycentric_unchecked(tet, p);
        Ok(de_casteljau(d - 1, &deriv, &b))
    }

    pub fn gradient_in_tet(&self, tet: usize, p: &Point3) -> Result<Vector3> {
        let mut g = Vector3::zeros();
        for a in 0..3 {
            g[a] = self.directional_derivative(tet, p, &Vector3::ith(a, 1.0))?;
        }
        Ok(g)
    }
}

/// Exact B-form of a global polynomial of degree `<= layout.degree()`, found
/// by interpolation at the domain points of every tet.
pub fn bform_of_polynomial(mesh: Arc<TetMesh>, layout: &BasisLayout, f: &Polynomial) -> Result<SplineField> {
    if f.degree() as usize > layout.degree() {
        return Err(Error::InvalidInput(format!(
            "polynomial degree {} exceeds basis degree {}",
            f.degree(),
            layout.degree()
        )));
    }
    let n = layout.dim();
    let d = layout.degree().max(1) as f64;
    let bary: Vec<Barycentric> = layout
        .indices()
        .iter()
        .map(|mi| {
            if layout.degree() == 0 {
                [0.25; 4]
            } else {
                mi.0.map(|e| e as f64 / d)
            }
        })
        .collect();
    // The collocation matrix depends only on the degree, not on the tet.
    let a = DMatrix::from_fn(n, n, |i, j| layout.eval_basis(&bary[i])[j]);
    let lu = a.lu();
    let mut coeffs = Vec::with_capacity(mesh.num_tets() * n);
    for t in 0..mesh.num_tets() {
        if mesh.is_degenerate(t) {
            return Err(Error::DegenerateTet {
                tet: t,
                volume: mesh.tet_volume(t).unwrap_or(0.0),
            });
        }
        let rhs = DVector::from_iterator(n, bary.iter().map(|b| f.eval(&mesh.point_at(t, b))));
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("interpolation system of tet {t}")))?;
        coeffs.extend(sol.iter());
    }
    SplineField::new(mesh, layout.clone(), coeffs)
}
