use mgflow::grf::{basis_function, kl_eigenvalues, sample_grf, sample_permeability, GrfSpec};
use proptest::prelude::*;

#[test]
fn field_averaged_variance_matches_trace() {
    let spec = GrfSpec::new(16, 10.0, 2024).unwrap();
    let samples = 10_000;
    let npix = 256;
    let mut sum = vec![0.0; npix];
    let mut sq = vec![0.0; npix];
    for d in 0..samples {
        let g = sample_grf(&spec, d).unwrap();
        for (i, &v) in g.data().iter().enumerate() {
            sum[i] += v;
            sq[i] += v * v;
        }
    }
    let n = samples as f64;
    let trace: f64 = kl_eigenvalues(&spec).data().iter().sum();
    let var: Vec<f64> = sq.iter().zip(&sum).map(|(&s2, &s)| s2 / n - (s / n).powi(2)).collect();
    let avg = var.iter().sum::<f64>() / npix as f64;
    assert!((avg / trace - 1.0).abs() < 0.05, "field-averaged variance {avg} vs trace {trace}");
    for (i, &s) in sum.iter().enumerate() {
        let bound = 4.0 * (var[i] / n).sqrt();
        assert!((s / n).abs() < bound, "cell {i}: mean {} exceeds {bound}", s / n);
    }
}

#[test]
fn two_point_covariance_matches_kernel() {
    let n = 12;
    let spec = GrfSpec::new(n, 10.0, 77).unwrap();
    // Cell pairs (i1, m1, i2, m2), close enough to be strongly correlated.
    let pairs = [(0, 0, 1, 0), (3, 4, 3, 5), (6, 6, 7, 7), (10, 2, 9, 3), (5, 11, 5, 10)];
    let kernel = |p: &(usize, usize, usize, usize)| {
        let mut c = 0.0;
        for j in 0..n {
            for k in 0..n {
                c += mu(j, k) * basis_function(n, j, k, p.0, p.1) * basis_function(n, j, k, p.2, p.3);
            }
        }
        c
    };
    fn mu(j: usize, k: usize) -> f64 {
        mgflow::grf::eigenvalue(j, k)
    }
    let samples = 100_000;
    let mut acc = [0.0; 5];
    for d in 0..samples {
        let g = sample_grf(&spec, d).unwrap();
        let v = |i: usize, m: usize| g.data()[i * n + m];
        for (a, p) in acc.iter_mut().zip(&pairs) {
            *a += v(p.0, p.1) * v(p.2, p.3);
        }
    }
    for (a, p) in acc.iter().zip(&pairs) {
        let emp = a / samples as f64;
        let exact = kernel(p);
        assert!((emp / exact - 1.0).abs() < 0.10, "pair {p:?}: empirical {emp} vs {exact}");
    }
}

proptest! {
    #[test]
    fn permeability_is_non_negative(seed in any::<u64>(), draw in 0u64..1000, n in 2usize..12) {
        let k = sample_permeability(&GrfSpec::new(n, 10.0, seed).unwrap(), draw).unwrap();
        prop_assert!(k.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}
