//! Block cross-validation with whole tetrahedra as blocks.

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmin, LambdaScore, ReducedData, SpectralSystem};
use crate::{Error, Result};

/// Fold of every tet: shuffle tet ids with the seeded generator, then deal
/// them round-robin into `folds` folds.
pub fn assign_folds(num_tets: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_tets).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; num_tets];
    for (pos, &t) in order.iter().enumerate() {
        fold[t] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone)]
pub struct BlockCv {
    pub best: f64,
    /// Mean held-out squared error per `λ`.
    pub scores: Vec<LambdaScore>,
    pub folds: Vec<usize>,
    /// `(fold, λ)` pairs left out because the training system was singular.
    pub skipped: Vec<(usize, f64)>,
}

impl BlockCv {
    pub fn run(
        num_tets: usize,
        data: &ReducedData,
        r: &DMatrix<f64>,
        folds: usize,
        seed: u64,
        grid: &[f64],
    ) -> Result<Self> {
        if folds < 2 {
            return Err(Error::InvalidInput("block CV needs at least 2 folds".into()));
        }
        let fold_of = assign_folds(num_tets, folds, seed);
        let n = data.n();
        let mut sse = vec![0.0; grid.len()];
        let mut count = vec![0usize; grid.len()];
        let mut skipped = Vec::new();
        for f in 0..folds {
            let held: Vec<usize> = (0..n).filter(|&i| fold_of[data.tet_of[i]] == f).collect();
            if held.is_empty() {
                continue;
            }
            if held.len() == n {
                return Err(Error::InvalidInput(format!("fold {f} leaves no training points")));
            }
            let bq_h = data.bq.select_rows(&held);
            let y_h = data.y.select_rows(&held);
            let a = &data.a - bq_h.tr_mul(&bq_h);
            let b = &data.b - bq_h.tr_mul(&y_h);
            let n_train = (n - held.len()) as f64;
            let sys = match SpectralSystem::new(&a, r, &b) {
                Ok(s) => s,
                Err(e) => {
                    warn!("fold {f} skipped: {e}");
                    skipped.extend(grid.iter().map(|&l| (f, l)));
                    continue;
                }
            };
            for (li, &lambda) in grid.iter().enumerate() {
                match sys.solve(lambda / n_train) {
                    Ok((theta, _)) => {
                        let resid = &y_h - &bq_h * theta;
                        sse[li] += resid.norm_squared();
                        count[li] += held.len();
                    }
                    Err(e) => {
                        warn!("fold {f} at lambda {lambda:e} skipped: {e}");
                        skipped.push((f, lambda));
                    }
                }
            }
        }
        let scores: Vec<LambdaScore> = grid
            .iter()
            .enumerate()
            .map(|(i, &lambda)| LambdaScore {
                lambda,
                score: if count[i] > 0 { sse[i] / count[i] as f64 } else { f64::INFINITY },
                edf: f64::NAN,
                rss: f64::NAN,
            })
            .collect();
        Ok(BlockCv { best: argmin(&scores)?, scores, folds: fold_of, skipped })
    }
}
