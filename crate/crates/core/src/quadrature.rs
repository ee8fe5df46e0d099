//! Quadrature on tetrahedra by collapsing a Gauss-Legendre tensor rule.

use crate::mesh::Barycentric;
use crate::{Error, Result};

/// Highest supported polynomial exactness.
pub const MAX_ORDER: usize = 40;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 - x) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// A rule on the reference tetrahedron: barycentric points and weights that
/// sum to one, so `∫_T f ≈ V_T Σ w f(p)`.
#[derive(Debug, Clone)]
pub struct TetRule {
    pub order: usize,
    pub points: Vec<(Barycentric, f64)>,
}

impl TetRule {
    /// Rule exact for polynomials of total degree `<= order`.
    pub fn new(order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::InvalidInput(format!(
                "quadrature order {order} exceeds {MAX_ORDER}"
            )));
        }
        let n = (order + 3).div_ceil(2);
        let gl = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n * n);
        for &(u, wu) in &gl {
            for &(v, wv) in &gl {
                for &(w, ww) in &gl {
                    let x = u;
                    let y = (1.0 - u) * v;
                    let z = (1.0 - u) * (1.0 - v) * w;
                    // Jacobian (1-u)^2 (1-v), times 6 to normalize the reference volume.
                    let weight = 6.0 * wu * wv * ww * (1.0 - u).powi(2) * (1.0 - v);
                    points.push(([1.0 - x - y - z, x, y, z], weight));
                }
            }
        }
        Ok(TetRule { order, points })
    }

    /// `V * Σ w f(b)`.
    pub fn integrate(&self, volume: f64, mut f: impl FnMut(&Barycentric) -> f64) -> f64 {
        volume * self.points.iter().map(|(b, w)| w * f(b)).sum::<f64>()
    }
}
