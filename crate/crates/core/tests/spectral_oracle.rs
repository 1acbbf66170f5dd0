use hawkes_cascade::hawkes::spectral_radius;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn eigen_radius(g: &[Vec<f64>]) -> f64 {
    let n = g.len();
    let m = DMatrix::from_fn(n, n, |r, c| g[r][c]);
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=6).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.5], n), n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_dense_eigenvalues(g in matrix()) {
        let got = spectral_radius(&g).unwrap();
        let want = eigen_radius(&g);
        prop_assert!((got - want).abs() <= 1e-6 * want.max(1.0), "power {got} vs eigen {want} for {g:?}");
    }
}

#[test]
fn two_node_closed_form() {
    let g = vec![vec![0.3, 0.2], vec![0.2, 0.25]];
    let (tr, det) = (0.55, 0.3 * 0.25 - 0.2 * 0.2);
    let want = tr / 2.0 + (tr * tr / 4.0 - det as f64).sqrt();
    assert!((spectral_radius(&g).unwrap() - want).abs() < 1e-9);
    assert!((eigen_radius(&g) - want).abs() < 1e-12);
}
