//! Trivariate Bernstein basis polynomials on a tetrahedron.
//!
//! Coefficients of a degree-`d` polynomial are stored in lexicographic order
//! of their multi-indices `(i, j, k, l)`, from `(d,0,0,0)` down to `(0,0,0,d)`.

mod diff;
mod mass;

use serde::{Deserialize, Serialize};

use crate::mesh::{Barycentric, Point3, TetMesh};
use crate::{Error, Result};

pub use diff::{diff_matrix, diff_matrix_first, DiffMatrix};
pub use mass::mass_matrix;

/// Exponents `(i, j, k, l)` of `b1^i b2^j b3^k b4^l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub [usize; 4]);

impl MultiIndex {
    pub fn new(i: usize, j: usize, k: usize, l: usize) -> Self {
        MultiIndex([i, j, k, l])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    /// `self + e_slot`.
    pub fn raised(&self, slot: usize) -> Self {
        let mut m = *self;
        m.0[slot] += 1;
        m
    }

    /// `self - e_slot`, if nonnegative.
    pub fn lowered(&self, slot: usize) -> Option<Self> {
        let mut m = *self;
        m.0[slot] = m.0[slot].checked_sub(1)?;
        Some(m)
    }
}

/// `binom(n, k)` as a float. Exact while the result fits in 64 bits.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return (0..k).fold(1.0, |a, i| a * (n - i) as f64 / (i + 1) as f64);
        }
    }
    acc as f64
}

/// `d! / (i! j! k! l!)`.
pub fn multinomial(mi: &MultiIndex) -> f64 {
    let [i, j, k, l] = mi.0;
    binomial(i + j + k + l, i) * binomial(j + k + l, j) * binomial(k + l, k)
}

/// Dimension of the trivariate polynomials of degree `d`: `binom(d+3, 3)`.
pub fn basis_dim(d: usize) -> usize {
    (d + 1) * (d + 2) * (d + 3) / 6
}

/// 0-based position of `mi` in the lexicographic order for its degree.
fn position(mi: &MultiIndex) -> usize {
    let [i, j, k, _] = mi.0;
    let d = mi.degree();
    let a = d - i;
    let b = d - i - j;
    // sum_{m=0}^{a} m(m+1)/2 + sum_{n=0}^{b} (n+1) - k, shifted to 0-based.
    a * (a + 1) * (a + 2) / 6 + (b + 1) * (b + 2) / 2 - k - 1
}

/// 1-based position of a multi-index of degree `d` in lexicographic order.
pub fn lex_index(d: usize, mi: &MultiIndex) -> Result<usize> {
    if mi.degree() != d {
        return Err(Error::InvalidInput(format!(
            "multi-index {:?} does not have degree {d}",
            mi.0
        )));
    }
    Ok(position(mi) + 1)
}

/// Degree and lexicographic ordering of the Bernstein basis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "usize", into = "usize")]
pub struct BasisLayout {
    degree: usize,
    indices: Vec<MultiIndex>,
}

impl From<usize> for BasisLayout {
    fn from(d: usize) -> Self {
        BasisLayout::new(d)
    }
}

impl From<BasisLayout> for usize {
    fn from(l: BasisLayout) -> usize {
        l.degree
    }
}

impl BasisLayout {
    pub fn new(degree: usize) -> Self {
        let d = degree;
        let mut indices = Vec::with_capacity(basis_dim(d));
        for i in (0..=d).rev() {
            for j in (0..=d - i).rev() {
                for k in (0..=d - i - j).rev() {
                    indices.push(MultiIndex([i, j, k, d - i - j - k]));
                }
            }
        }
        BasisLayout { degree, indices }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// 0-based position of `mi`; panics on a degree mismatch.
    pub fn position(&self, mi: &MultiIndex) -> usize {
        debug_assert_eq!(mi.degree(), self.degree);
        position(mi)
    }

    /// All basis values `B_ijkl(b)` in layout order.
    pub fn eval_basis(&self, b: &Barycentric) -> Vec<f64> {
        let d = self.degree;
        let mut pow = vec![[1.0f64; 4]; d + 1];
        for e in 1..=d {
            for s in 0..4 {
                pow[e][s] = pow[e - 1][s] * b[s];
            }
        }
        self.indices
            .iter()
            .map(|mi| {
                let [i, j, k, l] = mi.0;
                multinomial(mi) * pow[i][0] * pow[j][1] * pow[k][2] * pow[l][3]
            })
            .collect()
    }

    /// Evaluates the B-form with coefficients `coeffs` at `b` by de Casteljau:
    /// repeatedly replace each degree-`m` coefficient net by its convex
    /// (affine, outside the tetrahedron) combination with weights `b`.
    pub fn eval_bform(&self, coeffs: &[f64], b: &Barycentric) -> Result<f64> {
        if coeffs.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "expected {} coefficients, got {}",
                self.dim(),
                coeffs.len()
            )));
        }
        Ok(de_casteljau(self.degree, coeffs, b))
    }

    /// Bezier domain point `(i v1 + j v2 + k v3 + l v4) / d` of `tet`.
    pub fn domain_point(&self, mesh: &TetMesh, tet: usize, mi: &MultiIndex) -> Point3 {
        let d = self.degree.max(1) as f64;
        let b = mi.0.map(|e| e as f64 / d);
        if self.degree == 0 {
            return mesh.point_at(tet, &[0.25; 4]);
        }
        mesh.point_at(tet, &b)
    }
}

pub(crate) fn de_casteljau(degree: usize, coeffs: &[f64], b: &Barycentric) -> f64 {
    let mut net = coeffs.to_vec();
    for m in (0..degree).rev() {
        // Level m nets are a prefix-compatible reuse of the buffer: position of
        // a degree-m index only depends on the index, so compute fresh.
        let lower = BasisLayout::new(m);
        let next: Vec<f64> = lower
            .indices()
            .iter()
            .map(|mi| (0..4).map(|s| b[s] * net[position(&mi.raised(s))]).sum())
            .collect();
        net = next;
    }
    net[0]
}
