//! Roughness penalty: per-tet blocks of the integrated squared second derivatives.
//!
//! `P_T = Σ_{g,g' ∈ {x,y,z}} C(g,g') L C(g,g')ᵀ` over all nine ordered pairs,
//! so mixed derivatives carry weight two.

use nalgebra::DMatrix;

use crate::bernstein::{diff_matrix, mass_matrix, BasisLayout};
use crate::field::SplineField;
use crate::mesh::Vector3;
use crate::{Error, Result, TetMesh};

/// Directional coordinates of the three Cartesian axes relative to `tet`.
pub fn axis_directions(mesh: &TetMesh, tet: usize) -> Result<[[f64; 4]; 3]> {
    Ok([
        mesh.directional_coords(tet, &Vector3::x())?,
        mesh.directional_coords(tet, &Vector3::y())?,
        mesh.directional_coords(tet, &Vector3::z())?,
    ])
}

/// `P_T` for one tet.
pub fn penalty_block(mesh: &TetMesh, layout: &BasisLayout, tet: usize) -> Result<DMatrix<f64>> {
    let d = layout.degree();
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "second-derivative penalty needs degree >= 2, got {d}"
        )));
    }
    let dirs = axis_directions(mesh, tet)?;
    let l = mass_matrix(d - 2, mesh.tet_volume(tet)?);
    let n = layout.dim();
    let mut p = DMatrix::zeros(n, n);
    for g in &dirs {
        for h in &dirs {
            let c = diff_matrix(d, &[*g, *h])?.matrix;
            p += &c * &l * c.transpose();
        }
    }
    // Symmetrize away rounding.
    let pt = p.transpose();
    Ok((p + pt) * 0.5)
}

/// Block-diagonal penalty with per-tet weights.
#[derive(Debug, Clone)]
pub struct PenaltyBlocks {
    blocks: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
}

impl PenaltyBlocks {
    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Same blocks with new weights.
    pub fn reweighted(&self, weights: &[f64]) -> Result<Self> {
        check_weights(weights, self.blocks.len())?;
        Ok(PenaltyBlocks { blocks: self.blocks.clone(), weights: weights.to_vec() })
    }

    /// `Σ_T ω_T γ_Tᵀ P_T γ_T` for a global coefficient vector.
    pub fn quadratic_form(&self, coeffs: &[f64]) -> Result<f64> {
        let n = self.blocks.first().map_or(0, |b| b.nrows());
        if coeffs.len() != n * self.blocks.len() {
            return Err(Error::Dimension(format!(
                "penalty expects {} coefficients, got {}",
                n * self.blocks.len(),
                coeffs.len()
            )));
        }
        let mut e = 0.0;
        for (t, (p, &w)) in self.blocks.iter().zip(&self.weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            let g = nalgebra::DVectorView::from_slice(&coeffs[t * n..(t + 1) * n], n);
            e += w * (p * g).dot(&g);
        }
        Ok(e)
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Dimension(format!("expected {n} weights, got {}", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput(format!("penalty weight {w} is not a nonnegative number")));
    }
    Ok(())
}

/// All blocks, weighted by `weights` (default one).
pub fn assemble_p(mesh: &TetMesh, layout: &BasisLayout, weights: Option<&[f64]>) -> Result<PenaltyBlocks> {
    let n = mesh.num_tets();
    let weights = match weights {
        Some(w) => {
            check_weights(w, n)?;
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    let blocks = (0..n)
        .map(|t| penalty_block(mesh, layout, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(PenaltyBlocks { blocks, weights })
}

/// `ℰ(s) = γᵀ P γ`.
pub fn energy(field: &SplineField, blocks: &PenaltyBlocks) -> Result<f64> {
    if blocks.len() != field.mesh().num_tets() {
        return Err(Error::Dimension("penalty and field meshes differ".into()));
    }
    blocks.quadratic_form(field.coeffs())
}
