mod common;

use common::{gaussian, rel, symmetric};
use lowrank_phases::linalg::frobenius_inner;
use lowrank_phases::SensingOperator;
use nalgebra::{DMatrix, DVector};

#[test]
fn measurement_moments_match_frobenius_norm() {
    let (n, m) = (8, 4096);
    let op = SensingOperator::gaussian(n, m, 21).unwrap();
    let z = symmetric(n, 22);
    // Raw statistics <A_i, Z> without the 1/sqrt(m) scale.
    let stats: Vec<f64> = op.apply(&z).unwrap().iter().map(|v| v * (m as f64).sqrt()).collect();
    let mean = stats.iter().sum::<f64>() / m as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    let fro2 = z.norm_squared();
    assert!(mean.abs() <= 3.0 * fro2.sqrt() / (m as f64).sqrt(), "mean {mean}");
    assert!(rel(var, fro2) <= 0.10, "variance {var} vs {fro2}");
}

#[test]
fn adjoint_identity_against_explicit_matrices() {
    let (n, m) = (5, 7);
    for k in 0..20 {
        let op = SensingOperator::gaussian(n, m, 100 + k).unwrap();
        let z = symmetric(n, 200 + k);
        let y = DVector::from_column_slice(gaussian(m, 1, 300 + k).as_slice());
        // Brute force from the explicit A_i.
        let scale = 1.0 / (m as f64).sqrt();
        let az: Vec<f64> = (0..m).map(|i| scale * frobenius_inner(&op.matrix(i), &z)).collect();
        let mut adj = DMatrix::zeros(n, n);
        for i in 0..m {
            adj += op.matrix(i) * (scale * y[i]);
        }
        let lhs: f64 = az.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs = frobenius_inner(&z, &adj);
        assert!(rel(lhs, rhs) <= 1e-12, "{lhs} vs {rhs}");

        let fast_az = op.apply(&z).unwrap();
        let fast_adj = op.adjoint(&y).unwrap();
        for i in 0..m {
            assert!((fast_az[i] - az[i]).abs() <= 1e-12 * (1.0 + az[i].abs()));
        }
        assert!((&fast_adj - &adj).norm() <= 1e-12 * (1.0 + adj.norm()));
        assert_eq!(fast_adj, fast_adj.transpose());
    }
}

#[test]
fn normal_map_is_unbiased() {
    let (n, m, ensembles) = (6, 10, 2000);
    let z = symmetric(n, 5);
    let mut sum = DMatrix::zeros(n, n);
    let mut sum_sq = DMatrix::zeros(n, n);
    for e in 0..ensembles {
        let op = SensingOperator::gaussian(n, m, 10_000 + e).unwrap();
        let s = op.normal_map(&z).unwrap();
        sum_sq += s.component_mul(&s);
        sum += s;
    }
    let k = ensembles as f64;
    let mean = &sum / k;
    for i in 0..n {
        for j in 0..n {
            let var = (sum_sq[(i, j)] / k - mean[(i, j)].powi(2)) * k / (k - 1.0);
            let se = (var / k).sqrt();
            assert!(
                (mean[(i, j)] - z[(i, j)]).abs() <= 5.0 * se,
                "entry ({i},{j}): {} vs {} (se {se})",
                mean[(i, j)],
                z[(i, j)]
            );
        }
    }
}

#[test]
fn rip_estimate_is_small_at_large_m() {
    let op = SensingOperator::gaussian(20, 4000, 3).unwrap();
    let est = op.estimate_rip(2, 200, 4).unwrap();
    assert!(est.delta_lower >= 0.0);
    assert!(est.delta_lower <= 0.5, "{}", est.delta_lower);
    assert_eq!(est, op.estimate_rip(2, 200, 4).unwrap());
    // The reported worst sample reproduces the maximum.
    assert_eq!(op.rip_trial(2, est.worst_case_sample_seed), est.delta_lower);
}

#[test]
fn rank_one_deviation_concentrates() {
    let (n, m) = (20, 8000);
    let op = SensingOperator::gaussian(n, m, 8).unwrap();
    let v = gaussian(n, 1, 9);
    let v = &v / v.norm();
    let z = &v * v.transpose();
    let dev = op.spectral_deviation(&z).unwrap();
    assert!((0.0..=0.5).contains(&dev), "{dev}");
    let res = op.deviation_residual(&z).unwrap();
    assert_eq!(res, res.transpose());
}

#[test]
fn linearity_of_both_maps() {
    let (n, m) = (7, 50);
    let op = SensingOperator::gaussian(n, m, 1).unwrap();
    let (a, b) = (1.7, -0.3);
    let z1 = symmetric(n, 2);
    let z2 = symmetric(n, 3);
    let lhs = op.apply(&(&z1 * a + &z2 * b)).unwrap();
    let rhs = op.apply(&z1).unwrap() * a + op.apply(&z2).unwrap() * b;
    assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());

    let y1 = DVector::from_column_slice(gaussian(m, 1, 4).as_slice());
    let y2 = DVector::from_column_slice(gaussian(m, 1, 5).as_slice());
    let lhs = op.adjoint(&(&y1 * a + &y2 * b)).unwrap();
    let rhs = op.adjoint(&y1).unwrap() * a + op.adjoint(&y2).unwrap() * b;
    assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (n, m) = (30, 700);
    let op = SensingOperator::gaussian(n, m, 77).unwrap();
    let z = symmetric(n, 78);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let y = op.apply(&z).unwrap();
            (op.adjoint(&y).unwrap(), y)
        })
    };
    let (a1, y1) = run(1);
    let (a4, y4) = run(4);
    assert_eq!(y1, y4);
    assert_eq!(a1, a4);
}
