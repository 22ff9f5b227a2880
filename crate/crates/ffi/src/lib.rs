//! C ABI over `lowrank-phases`.
//!
//! Matrices cross the boundary as column-major `double` arrays with an
//! explicit element count. Every entry point returns an [`LrpStatus`]; on
//! failure [`lrp_last_error`] describes the cause. Objects are opaque
//! handles owned by the caller and released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lowrank_phases::{
    run_gd, Error, GroundTruth, InitKind, ProblemInstance, RunOutcome, SensingOperator, SolverConfig, StopReason,
    TrajectoryRow, TruthKind,
};
use nalgebra::{DMatrix, DVector};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotSymmetric = 4,
    Diverged = 5,
    Panic = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrpStopReason {
    MaxIters = 0,
    LossThreshold = 1,
    TestErrorThreshold = 2,
    Diverged = 3,
}

impl From<StopReason> for LrpStopReason {
    fn from(r: StopReason) -> Self {
        match r {
            StopReason::MaxIters => LrpStopReason::MaxIters,
            StopReason::LossThreshold => LrpStopReason::LossThreshold,
            StopReason::TestErrorThreshold => LrpStopReason::TestErrorThreshold,
            StopReason::Diverged => LrpStopReason::Diverged,
        }
    }
}

/// Opaque measurement operator.
pub struct LrpOperator(SensingOperator);

/// Opaque problem instance: planted factor, operator and measurements.
pub struct LrpInstance(ProblemInstance);

/// Opaque result of a gradient descent run.
pub struct LrpTrajectory(RunOutcome);

/// Gradient descent settings. A threshold that is NaN or not positive is
/// disabled.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LrpSolverOptions {
    pub r: usize,
    pub mu: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub record_stride: usize,
    pub stop_loss: f64,
    pub stop_test_error: f64,
    pub seed: u64,
    /// Haar orthogonal start instead of iid Gaussian; needs `r == n`.
    pub orthonormal_init: bool,
}

/// One recorded iterate; the fields follow the trajectory CSV columns.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LrpTrajectoryRow {
    pub t: usize,
    pub loss: f64,
    pub test_error: f64,
    pub test_error_rel: f64,
    pub sigma_rstar: f64,
    pub sigma_rstar_plus1: f64,
    pub spec_norm: f64,
    pub angle_l_lt: f64,
    pub angle_x_lt: f64,
    pub signal_sigma_min: f64,
    pub noise_spec: f64,
    pub angle_x_signal: f64,
    pub sigma_min_vxu: f64,
}

impl From<&TrajectoryRow> for LrpTrajectoryRow {
    fn from(r: &TrajectoryRow) -> Self {
        Self {
            t: r.t,
            loss: r.loss,
            test_error: r.test_error,
            test_error_rel: r.test_error_rel,
            sigma_rstar: r.sigma_rstar,
            sigma_rstar_plus1: r.sigma_rstar_plus1,
            spec_norm: r.spec_norm,
            angle_l_lt: r.angle_l_lt,
            angle_x_lt: r.angle_x_lt,
            signal_sigma_min: r.signal_sigma_min,
            noise_spec: r.noise_spec,
            angle_x_signal: r.angle_x_signal,
            sigma_min_vxu: r.sigma_min_vxu,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LrpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::DimensionMismatch { .. } => LrpStatus::DimensionMismatch,
            Error::InvalidArgument(_) | Error::Config(_) | Error::NotOrthonormal(_) => LrpStatus::InvalidArgument,
            Error::NotSymmetric { .. } => LrpStatus::NotSymmetric,
            Error::Diverged { .. } => LrpStatus::Diverged,
            _ => LrpStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LrpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            LrpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            LrpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LrpStatus::NullPointer, format!("{what} is NULL"))
}

fn mismatch(what: &str, expected: usize, found: usize) -> Failure {
    Failure(
        LrpStatus::DimensionMismatch,
        format!("{what}: expected {expected} elements, found {found}"),
    )
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len != expected {
        return Err(mismatch(what, expected, len));
    }
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len != expected {
        return Err(mismatch(what, expected, len));
    }
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn threshold(v: f64) -> Option<f64> {
    (v > 0.0).then_some(v)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lrp_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => c"",
    };
    VERSION.as_ptr()
}

/// Why the most recent call on this thread failed; empty after a success.
/// The pointer stays valid until the next call into the library on the
/// same thread.
#[no_mangle]
pub extern "C" fn lrp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Draws `m` symmetrized Gaussian measurement matrices of size `n x n`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lrp_operator_new(n: usize, m: usize, seed: u64, out: *mut *mut LrpOperator) -> LrpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let op = SensingOperator::gaussian(n, m, seed)?;
        out.write(Box::into_raw(Box::new(LrpOperator(op))));
        Ok(())
    })
}

/// # Safety
/// `op` must be NULL or a handle from [`lrp_operator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lrp_operator_free(op: *mut LrpOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Writes `n` and `m` of the operator.
///
/// # Safety
/// `op` must be a live handle; `n` and `m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrp_operator_dims(op: *const LrpOperator, n: *mut usize, m: *mut usize) -> LrpStatus {
    guard(|| {
        let op = &handle(op, "op")?.0;
        write_out(n, op.n(), "n")?;
        write_out(m, op.m(), "m")
    })
}

/// `y = A(Z)` for a symmetric `n x n` matrix `Z` (`z_len = n*n`, `y_len = m`).
///
/// # Safety
/// `z` must hold `z_len` readable doubles and `y` `y_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lrp_operator_apply(
    op: *const LrpOperator,
    z: *const f64,
    z_len: usize,
    y: *mut f64,
    y_len: usize,
) -> LrpStatus {
    guard(|| {
        let op = &handle(op, "op")?.0;
        let n = op.n();
        let z = input(z, z_len, n * n, "z")?;
        let dst = output(y, y_len, op.m(), "y")?;
        let res = op.apply(&DMatrix::from_column_slice(n, n, z))?;
        dst.copy_from_slice(res.as_slice());
        Ok(())
    })
}

/// `Z = A*(y)` (`y_len = m`, `z_len = n*n`).
///
/// # Safety
/// `y` must hold `y_len` readable doubles and `z` `z_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lrp_operator_adjoint(
    op: *const LrpOperator,
    y: *const f64,
    y_len: usize,
    z: *mut f64,
    z_len: usize,
) -> LrpStatus {
    guard(|| {
        let op = &handle(op, "op")?.0;
        let n = op.n();
        let y = input(y, y_len, op.m(), "y")?;
        let dst = output(z, z_len, n * n, "z")?;
        let res = op.adjoint(&DVector::from_column_slice(y))?;
        dst.copy_from_slice(res.as_slice());
        Ok(())
    })
}

/// Sampled lower bound on the rank-`rank` restricted-isometry constant.
///
/// # Safety
/// `op` must be a live handle and `delta` writable.
#[no_mangle]
pub unsafe extern "C" fn lrp_operator_estimate_rip(
    op: *const LrpOperator,
    rank: usize,
    trials: usize,
    seed: u64,
    delta: *mut f64,
) -> LrpStatus {
    guard(|| {
        let op = &handle(op, "op")?.0;
        let est = op.estimate_rip(rank, trials, seed)?;
        write_out(delta, est.delta_lower, "delta")
    })
}

/// Builds an instance with a planted `n x r_star` factor and `m`
/// measurements. `kappa == 1` plants an orthonormal factor; larger values
/// give singular values geometric from 1 to `1/kappa`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lrp_instance_new(
    n: usize,
    r_star: usize,
    m: usize,
    truth_seed: u64,
    operator_seed: u64,
    kappa: f64,
    out: *mut *mut LrpInstance,
) -> LrpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = if kappa == 1.0 {
            TruthKind::Orthonormal
        } else {
            TruthKind::Conditioned { kappa }
        };
        let truth = GroundTruth::generate(n, r_star, kind, truth_seed)?;
        let op = SensingOperator::gaussian(n, m, operator_seed)?;
        let inst = ProblemInstance::new(truth, op)?;
        out.write(Box::into_raw(Box::new(LrpInstance(inst))));
        Ok(())
    })
}

/// # Safety
/// `inst` must be NULL or a handle from [`lrp_instance_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lrp_instance_free(inst: *mut LrpInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Copies the planted factor `X` (`x_len = n * r_star`).
///
/// # Safety
/// `x` must hold `x_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lrp_instance_truth(inst: *const LrpInstance, x: *mut f64, x_len: usize) -> LrpStatus {
    guard(|| {
        let inst = &handle(inst, "inst")?.0;
        let f = inst.truth().factor();
        output(x, x_len, f.len(), "x")?.copy_from_slice(f.as_slice());
        Ok(())
    })
}

fn factor(inst: &ProblemInstance, u: &[f64], r: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(inst.n(), r, u)
}

/// `f(U) = 1/4 ||A(U U^T) - y||^2` for an `n x r` factor.
///
/// # Safety
/// `u` must hold `u_len = n*r` readable doubles and `loss` be writable.
#[no_mangle]
pub unsafe extern "C" fn lrp_instance_loss(
    inst: *const LrpInstance,
    u: *const f64,
    u_len: usize,
    r: usize,
    loss: *mut f64,
) -> LrpStatus {
    guard(|| {
        let inst = &handle(inst, "inst")?.0;
        let u = input(u, u_len, inst.n() * r, "u")?;
        write_out(loss, inst.loss(&factor(inst, u, r))?, "loss")
    })
}

/// Gradient of the loss at an `n x r` factor, written to `grad` (`n*r`).
///
/// # Safety
/// `u` must hold `u_len` readable doubles and `grad` `u_len` writable ones.
#[no_mangle]
pub unsafe extern "C" fn lrp_instance_gradient(
    inst: *const LrpInstance,
    u: *const f64,
    u_len: usize,
    r: usize,
    grad: *mut f64,
    grad_len: usize,
) -> LrpStatus {
    guard(|| {
        let inst = &handle(inst, "inst")?.0;
        let u = input(u, u_len, inst.n() * r, "u")?;
        let dst = output(grad, grad_len, inst.n() * r, "grad")?;
        let g = inst.gradient(&factor(inst, u, r))?;
        dst.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// `||U U^T - X X^T||_F` for an `n x r` factor.
///
/// # Safety
/// `u` must hold `u_len = n*r` readable doubles and `err` be writable.
#[no_mangle]
pub unsafe extern "C" fn lrp_instance_test_error(
    inst: *const LrpInstance,
    u: *const f64,
    u_len: usize,
    r: usize,
    err: *mut f64,
) -> LrpStatus {
    guard(|| {
        let inst = &handle(inst, "inst")?.0;
        let u = input(u, u_len, inst.n() * r, "u")?;
        write_out(err, inst.test_error(&factor(inst, u, r))?, "err")
    })
}

/// Defaults: `r = 1`, `mu = 0.25`, `alpha = 1e-6`, 1000 iterations, every
/// iterate recorded, no stopping thresholds, seed 0.
#[no_mangle]
pub extern "C" fn lrp_solver_options_default() -> LrpSolverOptions {
    LrpSolverOptions {
        r: 1,
        mu: 0.25,
        alpha: 1e-6,
        max_iters: 1000,
        record_stride: 1,
        stop_loss: f64::NAN,
        stop_test_error: f64::NAN,
        seed: 0,
        orthonormal_init: false,
    }
}

/// Runs gradient descent. A run that hits a non-finite iterate still
/// returns `LRP_STATUS_OK` with a trajectory whose stop reason is
/// `LRP_STOP_REASON_DIVERGED`.
///
/// # Safety
/// `inst` and `opts` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrp_run_gd(
    inst: *const LrpInstance,
    opts: *const LrpSolverOptions,
    out: *mut *mut LrpTrajectory,
) -> LrpStatus {
    guard(|| {
        let inst = &handle(inst, "inst")?.0;
        let o = *handle(opts, "opts")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg = SolverConfig::new(o.r, o.mu, o.alpha, o.max_iters, o.seed);
        cfg.record_stride = o.record_stride;
        cfg.stop_loss = threshold(o.stop_loss);
        cfg.stop_test_error = threshold(o.stop_test_error);
        if o.orthonormal_init {
            cfg.init_kind = InitKind::Orthonormal;
        }
        let outcome = run_gd(inst, &cfg)?;
        out.write(Box::into_raw(Box::new(LrpTrajectory(outcome))));
        Ok(())
    })
}

/// # Safety
/// `traj` must be NULL or a handle from [`lrp_run_gd`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lrp_trajectory_free(traj: *mut LrpTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded rows, or 0 for a NULL handle.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrp_trajectory_len(traj: *const LrpTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.record.rows.len())
}

/// Number of gradient steps taken, or 0 for a NULL handle.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrp_trajectory_iterations(traj: *const LrpTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.record.iterations)
}

/// # Safety
/// `traj` must be a live handle and `row` writable.
#[no_mangle]
pub unsafe extern "C" fn lrp_trajectory_row(
    traj: *const LrpTrajectory,
    index: usize,
    row: *mut LrpTrajectoryRow,
) -> LrpStatus {
    guard(|| {
        let rows = &handle(traj, "traj")?.0.record.rows;
        let r = rows.get(index).ok_or_else(|| {
            Failure(
                LrpStatus::InvalidArgument,
                format!("row index {index} out of range (len {})", rows.len()),
            )
        })?;
        write_out(row, r.into(), "row")
    })
}

/// # Safety
/// `traj` must be a live handle and `reason` writable.
#[no_mangle]
pub unsafe extern "C" fn lrp_trajectory_stop_reason(
    traj: *const LrpTrajectory,
    reason: *mut LrpStopReason,
) -> LrpStatus {
    guard(|| {
        let t = &handle(traj, "traj")?.0;
        write_out(reason, t.record.stop_reason.into(), "reason")
    })
}

/// Copies the last finite iterate (`u_len = n*r`).
///
/// # Safety
/// `u` must hold `u_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lrp_trajectory_final_factor(traj: *const LrpTrajectory, u: *mut f64, u_len: usize) -> LrpStatus {
    guard(|| {
        let f = &handle(traj, "traj")?.0.final_u;
        output(u, u_len, f.len(), "u")?.copy_from_slice(f.as_slice());
        Ok(())
    })
}
