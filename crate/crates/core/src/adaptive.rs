//! Adaptive refits: penalize each tet by a weight that decreases with the
//! total variation of an initial fit there.

use std::sync::Arc;

use crate::bernstein::{diff_matrix_first, BasisLayout};
use crate::field::SplineField;
use crate::penalty::axis_directions;
use crate::quadrature::TetRule;
use crate::solver::{Dataset, FitConfig, FitResult, ReducedData, SplineModel};
use crate::{Error, Result, TetMesh};

/// `∫_T |∇s| dv` by quadrature exact to degree `rule.order`.
pub fn total_variation(field: &SplineField, tet: usize, rule: &TetRule) -> Result<f64> {
    let d = field.degree();
    if d == 0 {
        return Ok(0.0);
    }
    let mesh = field.mesh();
    let low = BasisLayout::new(d - 1);
    let grads = axis_directions(mesh, tet)?
        .iter()
        .map(|a| Ok(diff_matrix_first(d, a)?.apply(field.block(tet))))
        .collect::<Result<Vec<_>>>()?;
    let volume = mesh.tet_volume(tet)?;
    Ok(rule.integrate(volume, |b| {
        grads
            .iter()
            .map(|g| {
                let v = crate::bernstein::de_casteljau(low.degree(), g, b);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }))
}

/// Total variation of every tet.
pub fn total_variations(field: &SplineField, quad_order: usize) -> Result<Vec<f64>> {
    let rule = TetRule::new(quad_order)?;
    (0..field.mesh().num_tets()).map(|t| total_variation(field, t, &rule)).collect()
}

/// `ω_T = (C - (TV_T / V_T) / C_m)^τ` with `C_m = max_T TV_T / V_T`.
/// A flat field (`C_m = 0`) gets `ω_T = C^τ` everywhere.
pub fn adaptive_weights(tv: &[f64], volumes: &[f64], tau: f64, c: f64) -> Result<Vec<f64>> {
    if tv.len() != volumes.len() {
        return Err(Error::Dimension(format!("{} variations for {} volumes", tv.len(), volumes.len())));
    }
    if !(c > 1.0) || !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("need C > 1 and tau > 0, got C={c} tau={tau}")));
    }
    let normalized: Vec<f64> = tv.iter().zip(volumes).map(|(t, v)| t / v).collect();
    let cm = normalized.iter().copied().fold(0.0, f64::max);
    Ok(normalized
        .iter()
        .map(|&x| {
            let rel = if cm > 0.0 { x / cm } else { 0.0 };
            (c - rel).powf(tau)
        })
        .collect())
}

/// Initial fit, then one weighted refit per `C`; keeps the `C` with the
/// smallest GCV score, `λ` being reselected for each `C`.
pub(crate) fn fit_atpst_reduced(model: &SplineModel, data: &ReducedData, config: &FitConfig) -> Result<FitResult> {
    let adaptive = config
        .adaptive
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("adaptive options missing".into()))?;
    adaptive.validate()?;
    let initial = model.fit_weighted(data, config, None)?;
    let tv = total_variations(&initial.field, adaptive.quad_order)?;
    let mesh = model.mesh();
    let volumes = (0..mesh.num_tets()).map(|t| mesh.tet_volume(t)).collect::<Result<Vec<_>>>()?;
    let mut best: Option<FitResult> = None;
    for &c in &adaptive.c_grid {
        let w = adaptive_weights(&tv, &volumes, adaptive.tau, c)?;
        let mut fit = model.fit_weighted(data, config, Some(&w))?;
        fit.c = Some(c);
        if best.as_ref().is_none_or(|b| fit.gcv < b.gcv) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("empty C grid".into()))
}

/// Adaptive fit from scratch; `config.adaptive` must be set.
pub fn fit_atpst(data: &Dataset, mesh: Arc<TetMesh>, config: &FitConfig) -> Result<FitResult> {
    if config.adaptive.is_none() {
        return Err(Error::InvalidInput("adaptive options missing".into()));
    }
    SplineModel::from_config(mesh, config)?.fit(data, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{bform_of_polynomial, Polynomial};
    use crate::mesh::tests::{reference_tet, two_tet_example};

    #[test]
    fn tv_of_simple_fields() {
        let mesh = Arc::new(two_tet_example());
        let layout = BasisLayout::new(3);
        let rule = TetRule::new(4).unwrap();
        let c = bform_of_polynomial(mesh.clone(), &layout, &Polynomial::constant(2.0)).unwrap();
        assert!(total_variation(&c, 0, &rule).unwrap().abs() < 1e-13);
        let x = bform_of_polynomial(mesh.clone(), &layout, &Polynomial::new().with([1, 0, 0], 1.0)).unwrap();
        for t in 0..2 {
            let v = mesh.tet_volume(t).unwrap();
            assert!((total_variation(&x, t, &rule).unwrap() - v).abs() < 1e-13);
        }
        let x3 = SplineField::new(mesh.clone(), layout, x.coeffs().iter().map(|c| -3.0 * c).collect()).unwrap();
        let a = total_variation(&x, 1, &rule).unwrap();
        assert!((total_variation(&x3, 1, &rule).unwrap() - 3.0 * a).abs() < 1e-13);
    }

    #[test]
    fn quadrature_order_converges() {
        let mesh = Arc::new(reference_tet());
        let poly = Polynomial::dense(3, |e| 1.0 / (1.0 + e[0] as f64 + 2.0 * e[1] as f64));
        let f = bform_of_polynomial(mesh, &BasisLayout::new(3), &poly).unwrap();
        let coarse = total_variation(&f, 0, &TetRule::new(4).unwrap()).unwrap();
        let fine = total_variation(&f, 0, &TetRule::new(8).unwrap()).unwrap();
        assert!((coarse - fine).abs() < 1e-3 * fine);
    }

    #[test]
    fn weights() {
        let w = adaptive_weights(&[2.0, 0.0], &[1.0, 1.0], 2.0, 2.0).unwrap();
        assert_eq!(w, vec![1.0, 4.0]);
        let w = adaptive_weights(&[3.0, 1.5], &[2.0, 1.0], 2.0, 1.5).unwrap();
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let w = adaptive_weights(&[0.0, 0.0], &[1.0, 2.0], 2.0, 3.0).unwrap();
        assert_eq!(w, vec![9.0, 9.0]);
        assert!(adaptive_weights(&[1.0], &[1.0], 2.0, 1.0).is_err());
        assert!(adaptive_weights(&[1.0], &[1.0, 2.0], 2.0, 2.0).is_err());
    }

    fn sampled(mesh: &TetMesh, n: usize, seed: u64, f: impl Fn(&crate::Point3) -> f64, noise: f64) -> Dataset {
        use rand::{Rng, SeedableRng};
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = mesh.bounds();
        let mut pts = Vec::new();
        while pts.len() < n {
            let p = crate::Point3::new(
                rng.random_range(b.min[0]..b.max[0]),
                rng.random_range(b.min[1]..b.max[1]),
                rng.random_range(b.min[2]..b.max[2]),
            );
            if mesh.locate(&p, 0.0).is_some() {
                pts.push(p);
            }
        }
        let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
        let vals = pts.iter().map(|p| f(p) + if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 }).collect();
        Dataset::new(mesh, pts, vals).unwrap()
    }

    fn adaptive_config(c_grid: Vec<f64>) -> FitConfig {
        FitConfig {
            adaptive: Some(crate::solver::AdaptiveConfig { c_grid, ..Default::default() }),
            ..FitConfig::default()
        }
    }

    fn box_mesh(res: [usize; 3]) -> Arc<TetMesh> {
        let b = crate::mesh::Aabb::new([0.0; 3], [2.0, 1.0, 1.0]);
        Arc::new(crate::mesh::generate_box_mesh(&b, res, &[]).unwrap())
    }

    #[test]
    fn linear_truth_matches_plain_fit() {
        let mesh = box_mesh([2, 1, 1]);
        let data = sampled(&mesh, 300, 1, |p| 1.0 + p.x + 2.0 * p.y - p.z, 0.0);
        let plain = crate::solver::fit_tpst(&data, mesh.clone(), &FitConfig::default()).unwrap();
        let adaptive = fit_atpst(&data, mesh, &adaptive_config(vec![1.5, 2.5])).unwrap();
        for (a, b) in plain.coeffs().iter().zip(adaptive.coeffs()) {
            assert!((a - b).abs() < 1e-8);
        }
        let w = adaptive.weights.as_ref().unwrap();
        let first = w[0];
        assert!(w.iter().all(|x| (x - first).abs() < 1e-8 * first));
    }

    #[test]
    fn single_c_is_returned() {
        let mesh = box_mesh([2, 1, 1]);
        let data = sampled(&mesh, 300, 2, |p| (3.0 * p.x).sin() + p.y * p.z, 0.05);
        let fit = fit_atpst(&data, mesh.clone(), &adaptive_config(vec![1.75])).unwrap();
        assert_eq!(fit.c, Some(1.75));
        let w = fit.weights.as_ref().unwrap();
        assert_eq!(w.len(), mesh.num_tets());
        assert!(w.iter().all(|&x| x >= 0.75f64.powi(2) - 1e-12 && x <= 1.75f64.powi(2) + 1e-12));
        let ginf = fit.coeffs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let model = SplineModel::from_config(mesh, &FitConfig::default()).unwrap();
        assert!(model.constraints().mul_vec(fit.coeffs()).iter().all(|v| v.abs() <= 1e-8 * ginf));
        assert!(fit_atpst(&data, model.mesh().clone(), &FitConfig::default()).is_err());
    }

    #[test]
    fn smallest_weight_sits_in_oscillating_region() {
        let mesh = box_mesh([4, 2, 2]);
        let pi = std::f64::consts::PI;
        let truth = move |p: &crate::Point3| {
            let base = p.x + p.y * p.z;
            if p.x > 1.5 { base + (6.0 * pi * p.x).sin() * (6.0 * pi * p.y).sin() } else { base }
        };
        let data = sampled(&mesh, 3000, 3, truth, 0.05);
        let fit = fit_atpst(&data, mesh.clone(), &adaptive_config(vec![1.25, 2.0, 3.0])).unwrap();
        let w = fit.weights.as_ref().unwrap();
        let argmin = (0..w.len()).min_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        let max_x = mesh.vertices(argmin).iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
        assert!(max_x > 1.5, "tet {argmin} reaches only x = {max_x}");
    }

    proptest::proptest! {
        #[test]
        fn weight_bounds_and_order(
            tv in proptest::collection::vec(0.0f64..10.0, 1..30),
            c in 1.01f64..4.0,
            tau in 0.5f64..3.0,
        ) {
            let vol: Vec<f64> = (0..tv.len()).map(|i| 0.5 + (i % 3) as f64).collect();
            let w = adaptive_weights(&tv, &vol, tau, c).unwrap();
            let lo = (c - 1.0).powf(tau) - 1e-12;
            let hi = c.powf(tau) + 1e-12;
            proptest::prop_assert!(w.iter().all(|&x| x >= lo && x <= hi));
            for i in 0..tv.len() {
                for j in 0..tv.len() {
                    if tv[i] / vol[i] < tv[j] / vol[j] {
                        proptest::prop_assert!(w[i] >= w[j]);
                    }
                }
            }
        }
    }
}
