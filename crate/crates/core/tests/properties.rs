mod common;

use common::{gaussian, instance, symmetric};
use lowrank_phases::diagnostics::top_subspace;
use lowrank_phases::harness::output::fmt_float;
use lowrank_phases::linalg::{self, frobenius_inner};
use lowrank_phases::solver::run_gd_observed;
use lowrank_phases::{
    detect_phases, principal_angle, run_gd, signal_noise_decompose, GroundTruth, MonitorConfig, MonitorObserver,
    SensingOperator, SolverConfig, TruthKind,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    linalg::random_orthonormal(n, n, &mut lowrank_phases::rng::rng_from_seed(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjointness(n in 1usize..7, m in 1usize..25, seed in any::<u64>()) {
        let op = SensingOperator::gaussian(n, m, seed).unwrap();
        let z = symmetric(n, seed ^ 1);
        let y = DVector::from_column_slice(gaussian(m, 1, seed ^ 2).as_slice());
        let lhs = op.apply(&z).unwrap().dot(&y);
        let rhs = frobenius_inner(&z, &op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + z.norm() * y.norm()));
    }

    #[test]
    fn operators_are_deterministic(n in 1usize..6, m in 1usize..10, seed in any::<u64>()) {
        let a = SensingOperator::gaussian(n, m, seed).unwrap();
        let b = SensingOperator::gaussian(n, m, seed).unwrap();
        for i in 0..m {
            prop_assert_eq!(a.matrix(i), b.matrix(i));
            prop_assert_eq!(a.matrix(i), a.matrix(i).transpose());
        }
        let rank = 1 + (seed as usize % n);
        let ea = a.estimate_rip(rank, 3, seed).unwrap();
        prop_assert!(ea.delta_lower >= 0.0);
        prop_assert_eq!(ea, b.estimate_rip(rank, 3, seed).unwrap());
    }

    #[test]
    fn loss_is_nonnegative_and_origin_is_critical(n in 2usize..7, r in 1usize..5, seed in any::<u64>()) {
        let inst = instance(n, 1, 3 * n, seed);
        let u = gaussian(n, r, seed ^ 3);
        prop_assert!(inst.loss(&u).unwrap() >= 0.0);
        prop_assert!(inst.gradient(&DMatrix::zeros(n, r)).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decomposition_is_exact(n in 3usize..9, rs_frac in 0.0f64..1.0, extra in 0usize..4, seed in any::<u64>()) {
        let rs = 1 + ((n - 1) as f64 * rs_frac) as usize;
        let r = rs + extra;
        let truth = GroundTruth::generate(n, rs, TruthKind::Orthonormal, seed).unwrap();
        let u = gaussian(n, r, seed ^ 4);
        let s = signal_noise_decompose(&truth, &u).unwrap();
        let scale = linalg::spectral_norm(&u);
        prop_assert_eq!(s.w.ncols(), rs);
        prop_assert_eq!(s.w_perp.ncols(), r - rs);
        prop_assert!((s.reconstruct() - &u).abs().max() <= 1e-10 * scale);
        prop_assert!(linalg::orthonormality_defect(&s.w) <= 1e-10);
        if r > rs {
            prop_assert!(linalg::orthonormality_defect(&s.w_perp) <= 1e-10);
            prop_assert!((s.w.transpose() * &s.w_perp).abs().max() <= 1e-10);
            prop_assert!((truth.basis().transpose() * &s.noise).abs().max() <= 1e-10 * scale);
        }
        prop_assert!((0.0..=1.0).contains(&s.angle_x_signal));
    }

    #[test]
    fn angles_are_symmetric_and_rotation_invariant(n in 2usize..8, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let v1 = top_subspace(&gaussian(n, k, seed), k).unwrap();
        let v2 = top_subspace(&gaussian(n, k, seed ^ 5), k).unwrap();
        let a = principal_angle(&v1, &v2).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - principal_angle(&v2, &v1).unwrap()).abs() <= 1e-10);
        let (q1, q2) = (orthogonal(k, seed ^ 6), orthogonal(k, seed ^ 7));
        prop_assert!((a - principal_angle(&(&v1 * q1), &(&v2 * q2)).unwrap()).abs() <= 1e-10);
        let proj = linalg::spectral_norm(&(&v1 * v1.transpose() - &v2 * v2.transpose()));
        prop_assert!((a - proj).abs() <= 1e-10);
    }

    #[test]
    fn floats_round_trip_through_csv_text(v in any::<f64>()) {
        let s = fmt_float(v);
        if v.is_nan() {
            prop_assert_eq!(s, "nan");
        } else {
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_are_reproducible_and_phases_ordered(seed in any::<u64>(), mu in 0.0f64..0.3, alpha_exp in 1i32..6) {
        let inst = instance(8, 2, 120, seed);
        let mut cfg = SolverConfig::new(4, mu, 10f64.powi(-alpha_exp), 150, seed ^ 8);
        cfg.record_stride = 3;
        let a = run_gd(&inst, &cfg).unwrap();
        let b = run_gd(&inst, &cfg).unwrap();
        prop_assert_eq!(&a.record, &b.record);
        prop_assert!(a.record.rows.windows(2).all(|w| w[0].t < w[1].t));
        prop_assert_eq!(a.record.rows.last().unwrap().t, a.record.iterations);
        let p = detect_phases(&a.record, inst.truth(), 0.1, 1e-3);
        if let (Some(s), Some(t1)) = (p.t_spectral_end, p.t1) { prop_assert!(s <= t1); }
        if let (Some(t1), Some(h)) = (p.t1, p.t_hat) { prop_assert!(t1 <= h); }
        if mu == 0.0 {
            prop_assert!(a.record.rows.iter().all(|r| r.loss == a.record.rows[0].loss));
        }
    }

    #[test]
    fn monitors_only_judge_gated_steps(seed in any::<u64>(), mu in 0.005f64..0.3) {
        let inst = instance(8, 2, 150, seed);
        let cfg = SolverConfig::new(4, mu, 1e-3, 120, seed ^ 9);
        let mut obs = MonitorObserver::new(&inst, mu, cfg.alpha, MonitorConfig::default()).unwrap();
        let observed = run_gd_observed(&inst, &cfg, &mut obs).unwrap();
        let report = obs.into_report();
        for rec in &report.records {
            if rec.inequality_satisfied.is_some() {
                prop_assert!(rec.precondition_satisfied);
                prop_assert!(rec.gates.iter().all(|g| g.satisfied));
                prop_assert!(rec.lhs.is_finite() && rec.rhs.is_finite());
            } else {
                prop_assert!(!rec.precondition_satisfied);
            }
        }
        prop_assert_eq!(report.total_violations(), 0);
        prop_assert_eq!(observed.record, run_gd(&inst, &cfg).unwrap().record);
    }
}
