use std::ffi::CStr;
use std::ptr;

use lowrank_phases::{GroundTruth, ProblemInstance, SensingOperator, SolverConfig, TruthKind};
use lowrank_phases_ffi::*;
use nalgebra::DMatrix;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lrp_last_error()) }.to_string_lossy().into_owned()
}

struct Instance(*mut LrpInstance);

impl Instance {
    fn new(n: usize, r_star: usize, m: usize) -> Self {
        let mut h = ptr::null_mut();
        let s = unsafe { lrp_instance_new(n, r_star, m, 11, 12, 1.0, &mut h) };
        assert_eq!(s, LrpStatus::Ok, "{}", last_error());
        Self(h)
    }
}

impl Drop for Instance {
    fn drop(&mut self) {
        unsafe { lrp_instance_free(self.0) }
    }
}

fn native(n: usize, r_star: usize, m: usize) -> ProblemInstance {
    let truth = GroundTruth::generate(n, r_star, TruthKind::Orthonormal, 11).unwrap();
    ProblemInstance::new(truth, SensingOperator::gaussian(n, m, 12).unwrap()).unwrap()
}

#[test]
fn apply_and_adjoint_match_the_library() {
    let (n, m) = (4, 30);
    let native = SensingOperator::gaussian(n, m, 5).unwrap();
    let mut op = ptr::null_mut();
    unsafe {
        assert_eq!(lrp_operator_new(n, m, 5, &mut op), LrpStatus::Ok);
        let (mut nn, mut mm) = (0, 0);
        assert_eq!(lrp_operator_dims(op, &mut nn, &mut mm), LrpStatus::Ok);
        assert_eq!((nn, mm), (n, m));

        let z = DMatrix::from_fn(n, n, |i, j| (i + j) as f64 * 0.3 - 1.0);
        let mut y = vec![0.0; m];
        assert_eq!(lrp_operator_apply(op, z.as_ptr(), n * n, y.as_mut_ptr(), m), LrpStatus::Ok);
        assert_eq!(y.as_slice(), native.apply(&z).unwrap().as_slice());

        let mut back = vec![0.0; n * n];
        assert_eq!(lrp_operator_adjoint(op, y.as_ptr(), m, back.as_mut_ptr(), n * n), LrpStatus::Ok);
        assert_eq!(back.as_slice(), native.adjoint(&native.apply(&z).unwrap()).unwrap().as_slice());

        let mut delta = f64::NAN;
        assert_eq!(lrp_operator_estimate_rip(op, 2, 10, 3, &mut delta), LrpStatus::Ok);
        assert_eq!(delta, native.estimate_rip(2, 10, 3).unwrap().delta_lower);
        lrp_operator_free(op);
    }
}

#[test]
fn asymmetric_input_is_rejected() {
    let mut op = ptr::null_mut();
    unsafe {
        lrp_operator_new(3, 10, 0, &mut op);
        let z = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut y = [0.0; 10];
        assert_eq!(lrp_operator_apply(op, z.as_ptr(), 9, y.as_mut_ptr(), 10), LrpStatus::NotSymmetric);
        assert!(last_error().contains("symmetric"));
        lrp_operator_free(op);
    }
}

#[test]
fn wrong_lengths_are_dimension_mismatches() {
    let inst = Instance::new(5, 1, 40);
    let u = [0.1; 10];
    let mut loss = 0.0;
    let mut y = [0.0; 3];
    unsafe {
        assert_eq!(lrp_instance_loss(inst.0, u.as_ptr(), 10, 3, &mut loss), LrpStatus::DimensionMismatch);
        assert_eq!(lrp_instance_loss(inst.0, u.as_ptr(), 5, 1, &mut loss), LrpStatus::Ok);
        let mut op = ptr::null_mut();
        lrp_operator_new(2, 4, 0, &mut op);
        assert_eq!(lrp_operator_adjoint(op, y.as_ptr(), 3, y.as_mut_ptr(), 3), LrpStatus::DimensionMismatch);
        lrp_operator_free(op);
    }
}

#[test]
fn null_handles_are_reported_not_dereferenced() {
    let mut loss = 0.0;
    unsafe {
        assert_eq!(lrp_instance_loss(ptr::null(), ptr::null(), 0, 0, &mut loss), LrpStatus::NullPointer);
        assert_eq!(lrp_trajectory_len(ptr::null()), 0);
        lrp_trajectory_free(ptr::null_mut());
        lrp_instance_free(ptr::null_mut());
        lrp_operator_free(ptr::null_mut());
    }
    let inst = Instance::new(4, 1, 20);
    let u = [0.5; 4];
    unsafe {
        assert_eq!(lrp_instance_loss(inst.0, u.as_ptr(), 4, 1, ptr::null_mut()), LrpStatus::NullPointer);
        assert_eq!(lrp_instance_loss(inst.0, ptr::null(), 4, 1, &mut loss), LrpStatus::NullPointer);
    }
}

#[test]
fn loss_gradient_and_test_error_match_the_library() {
    let (n, r) = (6, 2);
    let inst = Instance::new(n, 1, 60);
    let reference = native(n, 1, 60);
    let u = DMatrix::from_fn(n, r, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
    let (mut loss, mut err) = (0.0, 0.0);
    let mut grad = vec![0.0; n * r];
    unsafe {
        assert_eq!(lrp_instance_loss(inst.0, u.as_ptr(), n * r, r, &mut loss), LrpStatus::Ok);
        assert_eq!(lrp_instance_test_error(inst.0, u.as_ptr(), n * r, r, &mut err), LrpStatus::Ok);
        assert_eq!(
            lrp_instance_gradient(inst.0, u.as_ptr(), n * r, r, grad.as_mut_ptr(), n * r),
            LrpStatus::Ok
        );
    }
    assert_eq!(loss, reference.loss(&u).unwrap());
    assert_eq!(err, reference.test_error(&u).unwrap());
    assert_eq!(grad.as_slice(), reference.gradient(&u).unwrap().as_slice());

    let mut x = vec![0.0; n];
    unsafe { assert_eq!(lrp_instance_truth(inst.0, x.as_mut_ptr(), n), LrpStatus::Ok) };
    assert_eq!(x.as_slice(), reference.truth().factor().as_slice());
}

#[test]
fn gd_run_reproduces_the_native_trajectory() {
    let (n, r) = (6, 3);
    let inst = Instance::new(n, 1, 80);
    let mut opts = lrp_solver_options_default();
    opts.r = r;
    opts.alpha = 1e-3;
    opts.max_iters = 200;
    opts.record_stride = 7;
    opts.seed = 9;

    let mut traj = ptr::null_mut();
    unsafe { assert_eq!(lrp_run_gd(inst.0, &opts, &mut traj), LrpStatus::Ok, "{}", last_error()) };

    let mut cfg = SolverConfig::new(r, opts.mu, opts.alpha, opts.max_iters, opts.seed);
    cfg.record_stride = 7;
    let expected = lowrank_phases::run_gd(&native(n, 1, 80), &cfg).unwrap();

    unsafe {
        let len = lrp_trajectory_len(traj);
        assert_eq!(len, expected.record.rows.len());
        assert_eq!(lrp_trajectory_iterations(traj), expected.record.iterations);
        for (i, want) in expected.record.rows.iter().enumerate() {
            let mut row = LrpTrajectoryRow::default();
            assert_eq!(lrp_trajectory_row(traj, i, &mut row), LrpStatus::Ok);
            assert_eq!(row.t, want.t);
            assert_eq!(row.loss, want.loss);
            assert_eq!(row.test_error_rel, want.test_error_rel);
            assert_eq!(row.sigma_min_vxu.to_bits(), want.sigma_min_vxu.to_bits());
        }
        let mut row = LrpTrajectoryRow::default();
        assert_eq!(lrp_trajectory_row(traj, len, &mut row), LrpStatus::InvalidArgument);

        let mut reason = LrpStopReason::Diverged;
        assert_eq!(lrp_trajectory_stop_reason(traj, &mut reason), LrpStatus::Ok);
        assert_eq!(reason, LrpStopReason::MaxIters);

        let mut u = vec![0.0; n * r];
        assert_eq!(lrp_trajectory_final_factor(traj, u.as_mut_ptr(), n * r), LrpStatus::Ok);
        assert_eq!(u.as_slice(), expected.final_u.as_slice());
        lrp_trajectory_free(traj);
    }
}

#[test]
fn stop_thresholds_and_divergence_surface_as_stop_reasons() {
    let inst = Instance::new(5, 1, 60);
    let mut opts = lrp_solver_options_default();
    opts.r = 2;
    opts.alpha = 1e-3;
    opts.max_iters = 5000;
    opts.stop_test_error = 1e-3;
    let mut traj = ptr::null_mut();
    let mut reason = LrpStopReason::MaxIters;
    unsafe {
        assert_eq!(lrp_run_gd(inst.0, &opts, &mut traj), LrpStatus::Ok);
        lrp_trajectory_stop_reason(traj, &mut reason);
        assert_eq!(reason, LrpStopReason::TestErrorThreshold);
        assert!(lrp_trajectory_iterations(traj) < 5000);
        lrp_trajectory_free(traj);
    }

    opts.stop_test_error = f64::NAN;
    opts.mu = 50.0;
    opts.alpha = 1.0;
    opts.max_iters = 200;
    unsafe {
        assert_eq!(lrp_run_gd(inst.0, &opts, &mut traj), LrpStatus::Ok);
        lrp_trajectory_stop_reason(traj, &mut reason);
        assert_eq!(reason, LrpStopReason::Diverged);
        lrp_trajectory_free(traj);
    }
}

#[test]
fn invalid_solver_options_are_rejected() {
    let inst = Instance::new(4, 1, 20);
    let mut opts = lrp_solver_options_default();
    opts.r = 2;
    opts.orthonormal_init = true;
    let mut traj = ptr::null_mut();
    unsafe {
        assert_eq!(lrp_run_gd(inst.0, &opts, &mut traj), LrpStatus::InvalidArgument);
        assert!(traj.is_null());
        opts.orthonormal_init = false;
        opts.alpha = -1.0;
        assert_eq!(lrp_run_gd(inst.0, &opts, &mut traj), LrpStatus::InvalidArgument);
    }
    assert!(last_error().contains("initialization scale"));
}

#[test]
fn conditioned_instance_uses_kappa() {
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(lrp_instance_new(6, 2, 50, 1, 2, 4.0, &mut h), LrpStatus::Ok);
        let mut x = vec![0.0; 12];
        lrp_instance_truth(h, x.as_mut_ptr(), 12);
        let x = DMatrix::from_column_slice(6, 2, &x);
        let s = x.singular_values();
        let (hi, lo) = (s.max(), s.min());
        assert!((hi / lo - 4.0).abs() < 1e-10);
        lrp_instance_free(h);
        assert_eq!(lrp_instance_new(6, 2, 50, 1, 2, 0.5, &mut h), LrpStatus::InvalidArgument);
    }
}
