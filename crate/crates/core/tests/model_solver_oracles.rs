mod common;

use common::{gaussian, instance, rel};
use lowrank_phases::linalg::{self, frobenius_inner};
use lowrank_phases::solver::{gd_step, init_factor};
use lowrank_phases::{InitKind, SolverConfig};
use nalgebra::DMatrix;

#[test]
fn loss_matches_per_measurement_sum() {
    let inst = instance(7, 2, 60, 4);
    let op = inst.operator();
    let u = gaussian(7, 3, 5) * 0.4;
    let uut = &u * u.transpose();
    let scale = 1.0 / (op.m() as f64).sqrt();
    let brute: f64 = (0..op.m())
        .map(|i| {
            let y_i = scale * frobenius_inner(&op.matrix(i), inst.truth().gram());
            let p_i = scale * frobenius_inner(&op.matrix(i), &uut);
            (y_i - p_i).powi(2)
        })
        .sum::<f64>()
        * 0.25;
    assert!(rel(inst.loss(&u).unwrap(), brute) <= 1e-12);
    assert!(rel(inst.loss(&DMatrix::zeros(7, 3)).unwrap(), 0.25 * inst.measurements().norm_squared()) <= 1e-15);
}

#[test]
fn gradient_matches_central_differences() {
    let (n, r) = (6, 3);
    let inst = instance(n, 2, 80, 6);
    let u = gaussian(n, r, 7) * 0.5;
    let g = inst.gradient(&u).unwrap();
    let h = 1e-5;
    for i in 0..n {
        for j in 0..r {
            let mut plus = u.clone();
            let mut minus = u.clone();
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            let fd = (inst.loss(&plus).unwrap() - inst.loss(&minus).unwrap()) / (2.0 * h);
            assert!(
                (fd - g[(i, j)]).abs() <= 1e-5 * g.abs().max(),
                "entry ({i},{j}): fd {fd} vs {}",
                g[(i, j)]
            );
        }
    }
    // Directional derivative along a random direction.
    let d = gaussian(n, r, 8);
    let fd = (inst.loss(&(&u + &d * h)).unwrap() - inst.loss(&(&u - &d * h)).unwrap()) / (2.0 * h);
    assert!(rel(fd, frobenius_inner(&g, &d)) <= 1e-5);
}

#[test]
fn m_concentrates_around_the_gram_matrix() {
    let (n, rs) = (20, 2);
    let inst = instance(n, rs, 20 * n * rs, 9);
    let gap = linalg::spectral_norm(&(inst.m_matrix() - inst.truth().gram()));
    assert!(gap <= 0.5 * inst.truth().sigma_min().powi(2), "{gap}");
    let l = inst.m_eigenvalues();
    assert!(l[rs] < l[rs - 1]);
    assert!(l.windows(2).all(|w| w[0] >= w[1]));
    let vl = inst.spectral_basis();
    assert!(linalg::orthonormality_defect(vl) <= 1e-12);
}

#[test]
fn one_step_matches_per_measurement_loop() {
    let inst = instance(6, 2, 40, 10);
    let op = inst.operator();
    let u = gaussian(6, 4, 11) * 0.3;
    let mu = 0.25;
    let uut = &u * u.transpose();
    let scale = 1.0 / (op.m() as f64).sqrt();
    let mut adj = DMatrix::zeros(6, 6);
    for i in 0..op.m() {
        let a = op.matrix(i);
        let resid = inst.measurements()[i] - scale * frobenius_inner(&a, &uut);
        adj += a * (scale * resid);
    }
    let expected = &u + &adj * &u * mu;
    let got = gd_step(&inst, &u, mu).unwrap();
    assert!((&got - &expected).norm() <= 1e-12 * expected.norm());
}

#[test]
fn gaussian_init_has_variance_one_over_r() {
    let (n, r) = (100, 50);
    let cfg = SolverConfig::new(r, 0.25, 0.01, 0, 3);
    let u0 = init_factor(&cfg, n).unwrap() / 0.01;
    let k = (n * r) as f64;
    let mean = u0.sum() / k;
    let var = u0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    assert!(rel(var, 1.0 / r as f64) <= 0.10, "{var}");
}

#[test]
fn orthonormal_init_has_flat_spectrum() {
    let mut cfg = SolverConfig::new(4, 0.25, 0.01, 0, 3);
    cfg.init_kind = InitKind::Orthonormal;
    let u0 = init_factor(&cfg, 4).unwrap();
    for s in linalg::singular_values(&u0) {
        assert!((s - 0.01).abs() <= 1e-15);
    }
}

#[test]
fn global_minimum_has_zero_loss_and_gradient() {
    let inst = instance(8, 3, 100, 12);
    let x = inst.truth().factor().clone();
    assert!(inst.loss(&x).unwrap() <= 1e-28);
    assert!(inst.gradient(&x).unwrap().norm() <= 1e-13);
    assert!(inst.test_error(&x).unwrap() <= 1e-14);
}
