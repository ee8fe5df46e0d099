use nalgebra::DMatrix;

use super::{binomial, BasisLayout};

/// Exact Gram matrix `∫_T B_α B_β dv` of the degree-`d` basis on a tet of
/// volume `volume`.
pub fn mass_matrix(d: usize, volume: f64) -> DMatrix<f64> {
    let layout = BasisLayout::new(d);
    let n = layout.dim();
    let denom = binomial(2 * d, d) * binomial(2 * d + 3, 3);
    let mut m = DMatrix::zeros(n, n);
    for (i, a) in layout.indices().iter().enumerate() {
        for (j, b) in layout.indices().iter().enumerate().skip(i) {
            let num: f64 = (0..4).map(|s| binomial(a.0[s] + b.0[s], a.0[s])).product();
            let v = num / denom * volume;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
