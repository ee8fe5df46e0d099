use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpst::field::Polynomial;
use tpst::mesh::{generate_box_mesh, Aabb};
use tpst::solver::{fit_tpst, Dataset, FitConfig, Selection};
use tpst::{io, Point3, TetMesh};

fn cube() -> Arc<TetMesh> {
    Arc::new(generate_box_mesh(&Aabb::new([0.0; 3], [1.0; 3]), [2, 1, 1], &[]).unwrap())
}

fn points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Point3::new(rng.random(), rng.random(), rng.random())).collect()
}

#[test]
fn text_round_trip_then_fit_reproduces_quadratic() {
    let mesh = cube();
    let (mut nodes, mut elems) = (Vec::new(), Vec::new());
    io::write_mesh(&mesh, &mut nodes, &mut elems).unwrap();
    let reloaded = Arc::new(io::load_mesh(nodes.as_slice(), elems.as_slice(), 0).unwrap());
    assert_eq!(reloaded.num_tets(), mesh.num_tets());

    let f = Polynomial::new().with([2, 0, 0], 1.0).with([0, 1, 1], -2.0).with([0, 0, 1], 0.5);
    let pts = points(400, 1);
    let vals: Vec<f64> = pts.iter().map(|p| f.eval(p)).collect();
    let mut csv = Vec::new();
    io::write_data(&mut csv, &pts, &vals).unwrap();
    let (pts, vals) = io::parse_data(csv.as_slice()).unwrap();

    let data = Dataset::new(&reloaded, pts, vals).unwrap();
    let config = FitConfig { degree: 2, selection: Selection::Fixed(0.0), ..FitConfig::default() };
    let fit = fit_tpst(&data, reloaded, &config).unwrap();
    for p in points(50, 2) {
        assert!((fit.field.eval(&p).unwrap() - f.eval(&p)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Linear fields lie in the penalty kernel, so every λ reproduces exact linear data.
    #[test]
    fn linear_data_reproduced_under_gcv(c in prop::array::uniform4(-2.0f64..2.0)) {
        let mesh = cube();
        let f = Polynomial::constant(c[0]).with([1, 0, 0], c[1]).with([0, 1, 0], c[2]).with([0, 0, 1], c[3]);
        let pts = points(200, 3);
        let vals = pts.iter().map(|p| f.eval(p)).collect();
        let data = Dataset::new(&mesh, pts, vals).unwrap();
        let config = FitConfig { degree: 2, ..FitConfig::default() };
        let fit = fit_tpst(&data, mesh, &config).unwrap();
        for p in points(20, 4) {
            prop_assert!((fit.field.eval(&p).unwrap() - f.eval(&p)).abs() < 1e-8);
        }
    }
}
