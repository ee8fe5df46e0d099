//! Constrained penalized least squares.
//!
//! Minimizes `‖Y - Bγ‖² + (λ/n) γᵀPγ` subject to `Hγ = 0` by writing
//! `γ = Q₂θ` with `Q₂` an orthonormal kernel basis of `H`, and selects `λ` by
//! GCV or block cross-validation. A [`SplineModel`] holds everything that
//! depends only on the mesh, degree and smoothness, so it can be reused across
//! datasets.

mod cv;
mod nullspace;
mod system;

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bernstein::BasisLayout;
use crate::field::SplineField;
use crate::mesh::{Barycentric, BARY_TOL};
use crate::penalty::{assemble_p, PenaltyBlocks};
use crate::smoothness::{assemble_h, ConstraintMatrix};
use crate::{Error, Point3, Result, TetMesh};

pub use cv::{assign_folds, BlockCv};
pub use nullspace::{nullspace_basis, NullSpace};
pub use system::{gcv_score, SpectralSystem};

/// Observations located in a mesh. Points outside every tet are dropped.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Vec<Point3>,
    values: Vec<f64>,
    locations: Vec<(usize, Barycentric)>,
    dropped: usize,
}

impl Dataset {
    pub fn new(mesh: &TetMesh, points: Vec<Point3>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("value {i} is not finite")));
        }
        let mut kept = Dataset { points: Vec::new(), values: Vec::new(), locations: Vec::new(), dropped: 0 };
        for (p, v) in points.into_iter().zip(values) {
            match mesh.locate(&p, BARY_TOL) {
                Some(loc) => {
                    kept.points.push(p);
                    kept.values.push(v);
                    kept.locations.push(loc);
                }
                None => kept.dropped += 1,
            }
        }
        Ok(kept)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn locations(&self) -> &[(usize, Barycentric)] {
        &self.locations
    }

    /// Number of input points that fell outside the mesh.
    pub fn dropped(&self) -> usize {
        self.dropped
    }
}

/// Sparse design matrix: row `i` holds the basis values of point `i` in its
/// tet's block.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub ncols: usize,
    pub block: usize,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn mul_vec(&self, gamma: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(t, v)| v.iter().zip(&gamma[t * self.block..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Σ_i ‖B_i‖²`.
    pub fn frobenius_sq(&self) -> f64 {
        self.rows.iter().map(|(_, v)| v.iter().map(|x| x * x).sum::<f64>()).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for (i, (t, v)) in self.rows.iter().enumerate() {
            for (j, &x) in v.iter().enumerate() {
                m[(i, t * self.block + j)] = x;
            }
        }
        m
    }
}

pub fn design_matrix(mesh: &TetMesh, layout: &BasisLayout, data: &Dataset) -> DesignMatrix {
    DesignMatrix {
        ncols: mesh.num_tets() * layout.dim(),
        block: layout.dim(),
        rows: data.locations.iter().map(|(t, b)| (*t, layout.eval_basis(b))).collect(),
    }
}

/// Penalty parameter candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaGrid {
    /// `count` log-spaced multipliers in `[lo, hi]` of `tr(BᵀB) / tr(P)`.
    Auto { lo: f64, hi: f64, count: usize },
    /// Absolute values.
    Values(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto { lo: 1e-6, hi: 1e4, count: 20 }
    }
}

/// `count` log-spaced values from `lo` to `hi`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
            .collect(),
    }
}

impl LambdaGrid {
    pub fn resolve(&self, scale: f64) -> Result<Vec<f64>> {
        let mut v = match self {
            LambdaGrid::Auto { lo, hi, count } => {
                if !(*lo > 0.0 && hi >= lo && *count >= 1) {
                    return Err(Error::InvalidInput(format!("bad lambda range {lo}:{hi}:{count}")));
                }
                log_space(lo * scale, hi * scale, *count)
            }
            LambdaGrid::Values(v) => v.clone(),
        };
        if v.is_empty() || v.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("lambda values must be finite and nonnegative".into()));
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }
}

/// How `λ` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Gcv,
    BlockCv { folds: usize, seed: u64 },
    Fixed(f64),
}

/// Options of the total-variation weighted refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub tau: f64,
    pub c_grid: Vec<f64>,
    pub quad_order: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig { tau: 2.0, c_grid: log_space_lin(1.25, 3.0, 8), quad_order: 4 }
    }
}

fn log_space_lin(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 1.0) || !c.is_finite()) {
            return Err(Error::InvalidInput("every C must be a finite number above 1".into()));
        }
        crate::quadrature::TetRule::new(self.quad_order).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub degree: usize,
    pub smoothness: usize,
    pub lambda_grid: LambdaGrid,
    pub selection: Selection,
    pub rank_tol: f64,
    pub adaptive: Option<AdaptiveConfig>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degree: 3,
            smoothness: 1,
            lambda_grid: LambdaGrid::default(),
            selection: Selection::Gcv,
            rank_tol: 1e-10,
            adaptive: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smoothness >= self.degree {
            return Err(Error::SmoothnessTooHigh { r: self.smoothness, d: self.degree });
        }
        if self.degree < 2 {
            return Err(Error::InvalidInput("degree must be at least 2".into()));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::InvalidInput(format!("rank tolerance {} outside (0, 1)", self.rank_tol)));
        }
        match self.selection {
            Selection::BlockCv { folds, .. } if folds < 2 => {
                return Err(Error::InvalidInput("block CV needs at least 2 folds".into()))
            }
            Selection::Fixed(l) if !(l >= 0.0) || !l.is_finite() => {
                return Err(Error::InvalidInput(format!("lambda {l} must be finite and nonnegative")))
            }
            _ => {}
        }
        self.lambda_grid.resolve(1.0)?;
        if let Some(a) = &self.adaptive {
            a.validate()?;
        }
        Ok(())
    }
}

/// Score of one grid value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    /// GCV score, or mean held-out squared error under block CV.
    pub score: f64,
    pub edf: f64,
    pub rss: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub field: SplineField,
    pub smoothness: usize,
    pub lambda: f64,
    pub c: Option<f64>,
    pub weights: Option<Vec<f64>>,
    /// `tr(S_λ)`.
    pub edf: f64,
    pub rss: f64,
    pub gcv: f64,
    pub scores: Vec<LambdaScore>,
    pub n: usize,
    pub nullspace_dim: usize,
    pub constraint_rank: usize,
}

impl FitResult {
    pub fn coeffs(&self) -> &[f64] {
        self.field.coeffs()
    }
}

/// Mesh-dependent parts of a fit: constraints, kernel basis and penalty.
#[derive(Debug, Clone)]
pub struct SplineModel {
    mesh: Arc<TetMesh>,
    layout: BasisLayout,
    smoothness: usize,
    h: ConstraintMatrix,
    null: NullSpace,
    penalty: PenaltyBlocks,
    /// Per tet, `F_tᵀ Q_t` where `P_t = F_t F_tᵀ`.
    penalty_roots: Vec<DMatrix<f64>>,
}

impl SplineModel {
    pub fn new(mesh: Arc<TetMesh>, degree: usize, smoothness: usize, rank_tol: f64) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if let Some(t) = (0..mesh.num_tets()).find(|&t| mesh.is_degenerate(t)) {
            return Err(Error::DegenerateTet { tet: t, volume: mesh.tet_volume(t).unwrap_or(0.0) });
        }
        let layout = BasisLayout::new(degree);
        let h = assemble_h(&mesh, &layout, smoothness)?;
        let null = nullspace_basis(&h, rank_tol);
        let penalty = assemble_p(&mesh, &layout, None)?;
        let n = layout.dim();
        let penalty_roots = penalty
            .blocks()
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let eig = p.clone().symmetric_eigen();
                let cutoff = 1e-13 * eig.eigenvalues.amax();
                let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
                let f = DMatrix::from_fn(n, keep.len(), |i, j| {
                    eig.eigenvectors[(i, keep[j])] * eig.eigenvalues[keep[j]].sqrt()
                });
                f.transpose() * null.basis.rows(t * n, n)
            })
            .collect();
        Ok(SplineModel { mesh, layout, smoothness, h, null, penalty, penalty_roots })
    }

    pub fn from_config(mesh: Arc<TetMesh>, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        Self::new(mesh, config.degree, config.smoothness, config.rank_tol)
    }

    pub fn mesh(&self) -> &Arc<TetMesh> {
        &self.mesh
    }

    pub fn layout(&self) -> &BasisLayout {
        &self.layout
    }

    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    pub fn constraints(&self) -> &ConstraintMatrix {
        &self.h
    }

    pub fn nullspace(&self) -> &NullSpace {
        &self.null
    }

    pub fn penalty(&self) -> &PenaltyBlocks {
        &self.penalty
    }

    /// `Q₂ᵀ P(ω) Q₂`.
    pub fn reduced_penalty(&self, weights: Option<&[f64]>) -> Result<DMatrix<f64>> {
        let k = self.null.dim();
        let nt = self.mesh.num_tets();
        if let Some(w) = weights {
            if w.len() != nt {
                return Err(Error::Dimension(format!("expected {nt} weights, got {}", w.len())));
            }
        }
        let rows: usize = self.penalty_roots.iter().map(|f| f.nrows()).sum();
        let mut stacked = DMatrix::zeros(rows, k);
        let mut at = 0;
        for (t, f) in self.penalty_roots.iter().enumerate() {
            let s = weights.map_or(1.0, |w| w[t].sqrt());
            stacked.rows_mut(at, f.nrows()).copy_from(&(f * s));
            at += f.nrows();
        }
        Ok(stacked.tr_mul(&stacked))
    }

    /// Data-dependent pieces of the reduced problem.
    pub fn reduce(&self, data: &Dataset) -> Result<ReducedData> {
        if data.is_empty() {
            return Err(Error::InvalidInput("no observations inside the mesh".into()));
        }
        let n = self.layout.dim();
        let k = self.null.dim();
        let q = &self.null.basis;
        let mut bq = DMatrix::zeros(data.len(), k);
        for (i, (t, b)) in data.locations.iter().enumerate() {
            let basis = self.layout.eval_basis(b);
            for c in 0..k {
                let col = q.column(c);
                bq[(i, c)] = basis.iter().enumerate().map(|(j, &bj)| bj * col[t * n + j]).sum();
            }
        }
        let y = DVector::from_column_slice(&data.values);
        let tet_of: Vec<usize> = data.locations.iter().map(|l| l.0).collect();
        let design = design_matrix(&self.mesh, &self.layout, data);
        Ok(ReducedData {
            a: bq.tr_mul(&bq),
            b: bq.tr_mul(&y),
            bq,
            y,
            tet_of,
            trace_btb: design.frobenius_sq(),
        })
    }

    /// `γ = Q₂θ` as a field.
    pub fn field(&self, theta: &DVector<f64>) -> Result<SplineField> {
        let gamma = &self.null.basis * theta;
        SplineField::new(self.mesh.clone(), self.layout.clone(), gamma.as_slice().to_vec())
    }

    fn lambda_values(&self, grid: &LambdaGrid, data: &ReducedData, weights: Option<&[f64]>) -> Result<Vec<f64>> {
        let tr_p: f64 = self
            .penalty
            .blocks()
            .iter()
            .enumerate()
            .map(|(t, p)| weights.map_or(1.0, |w| w[t]) * p.trace())
            .sum();
        let scale = if tr_p > 0.0 { data.trace_btb / tr_p } else { 1.0 };
        grid.resolve(scale)
    }

    /// Fits with the given per-tet penalty weights (`None` for unweighted).
    pub fn fit_weighted(
        &self,
        data: &ReducedData,
        config: &FitConfig,
        weights: Option<&[f64]>,
    ) -> Result<FitResult> {
        let r = self.reduced_penalty(weights)?;
        let n = data.y.len();
        let sys = SpectralSystem::new(&data.a, &r, &data.b)?;
        let (lambda, scores) = match &config.selection {
            Selection::Fixed(l) => (*l, Vec::new()),
            Selection::Gcv => {
                let grid = self.lambda_values(&config.lambda_grid, data, weights)?;
                let scores: Vec<LambdaScore> = grid
                    .iter()
                    .map(|&l| match data.evaluate(&sys, l) {
                        Ok((_, edf, rss)) => LambdaScore { lambda: l, score: gcv_score(rss, n, edf), edf, rss },
                        Err(e) => {
                            warn!("lambda {l:e} skipped: {e}");
                            LambdaScore { lambda: l, score: f64::INFINITY, edf: f64::NAN, rss: f64::NAN }
                        }
                    })
                    .collect();
                (argmin(&scores)?, scores)
            }
            Selection::BlockCv { folds, seed } => {
                let grid = self.lambda_values(&config.lambda_grid, data, weights)?;
                let cv = BlockCv::run(self.mesh.num_tets(), data, &r, *folds, *seed, &grid)?;
                let scores = cv
                    .scores
                    .into_iter()
                    .map(|mut s| {
                        if let Ok((_, edf, rss)) = data.evaluate(&sys, s.lambda) {
                            s.edf = edf;
                            s.rss = rss;
                        }
                        s
                    })
                    .collect();
                (cv.best, scores)
            }
        };
        let (theta, edf, rss) = data.evaluate(&sys, lambda)?;
        Ok(FitResult {
            field: self.field(&theta)?,
            smoothness: self.smoothness,
            lambda,
            c: None,
            weights: weights.map(|w| w.to_vec()),
            edf,
            rss,
            gcv: gcv_score(rss, n, edf),
            scores,
            n,
            nullspace_dim: self.null.dim(),
            constraint_rank: self.null.rank,
        })
    }

    pub fn fit(&self, data: &Dataset, config: &FitConfig) -> Result<FitResult> {
        config.validate()?;
        if config.degree != self.layout.degree() || config.smoothness != self.smoothness {
            return Err(Error::InvalidInput("configuration does not match the model".into()));
        }
        self.fit_reduced(&self.reduce(data)?, config)
    }

    /// Same as [`SplineModel::fit`] on data already projected by [`SplineModel::reduce`].
    pub fn fit_reduced(&self, reduced: &ReducedData, config: &FitConfig) -> Result<FitResult> {
        config.validate()?;
        match &config.adaptive {
            None => self.fit_weighted(reduced, config, None),
            Some(_) => crate::adaptive::fit_atpst_reduced(self, reduced, config),
        }
    }
}

/// First minimum; ties keep the smaller `λ` because the grid is ascending.
fn argmin(scores: &[LambdaScore]) -> Result<f64> {
    let mut best: Option<&LambdaScore> = None;
    for s in scores {
        if s.score.is_finite() && best.is_none_or(|b| s.score < b.score) {
            best = Some(s);
        }
    }
    best.map(|b| b.lambda)
        .ok_or_else(|| Error::Numerical("no penalty value gave a finite score".into()))
}

/// `Q₂ᵀBᵀBQ₂`, `Q₂ᵀBᵀY` and the rows of `BQ₂` for one dataset.
#[derive(Debug, Clone)]
pub struct ReducedData {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub bq: DMatrix<f64>,
    pub y: DVector<f64>,
    pub tet_of: Vec<usize>,
    pub trace_btb: f64,
}

impl ReducedData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// `(θ, tr S, RSS)` at `λ`.
    pub fn evaluate(&self, sys: &SpectralSystem, lambda: f64) -> Result<(DVector<f64>, f64, f64)> {
        let (theta, edf) = sys.solve(lambda / self.n() as f64)?;
        let resid = &self.y - &self.bq * &theta;
        Ok((theta, edf, resid.norm_squared()))
    }
}

/// Builds the model and fits in one call.
pub fn fit_tpst(data: &Dataset, mesh: Arc<TetMesh>, config: &FitConfig) -> Result<FitResult> {
    SplineModel::from_config(mesh, config)?.fit(data, config)
}

/// Predictions at `points`; `None` outside the mesh.
pub fn predict(fit: &FitResult, points: &[Point3]) -> Vec<Option<f64>> {
    points.iter().map(|p| fit.field.eval(p)).collect()
}
