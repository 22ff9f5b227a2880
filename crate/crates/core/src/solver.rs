//! Vanilla gradient descent on the factorized objective from a scaled
//! random initialization, with per-iteration diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{raw_angle, signal_noise_decompose};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ProblemInstance;
use crate::rng::{gaussian_matrix, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `U_0 = alpha * G` with iid entries of variance `1/r`.
    #[default]
    GaussianIid,
    /// `U_0 = alpha * Q` with `Q` a Haar orthogonal `n x n` matrix; needs `r = n`.
    Orthonormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub r: usize,
    pub mu: f64,
    pub alpha: f64,
    #[serde(default)]
    pub init_kind: InitKind,
    pub max_iters: usize,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Stop once `f(U_t) <= stop_loss`.
    #[serde(default)]
    pub stop_loss: Option<f64>,
    /// Stop once the relative test error `||U U^T - X X^T||_F / ||X X^T||_F`
    /// is at most this value.
    #[serde(default)]
    pub stop_test_error: Option<f64>,
    pub seed: u64,
}

fn default_stride() -> usize {
    1
}

impl SolverConfig {
    pub fn new(r: usize, mu: f64, alpha: f64, max_iters: usize, seed: u64) -> Self {
        Self {
            r,
            mu,
            alpha,
            init_kind: InitKind::GaussianIid,
            max_iters,
            record_stride: 1,
            stop_loss: None,
            stop_test_error: None,
            seed,
        }
    }

    /// `mu` may be zero (a frozen trajectory); negative or non-finite is rejected.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidArgument("factor width r must be >= 1".into()));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be finite and >= 0 (got {})", self.mu)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("initialization scale must be > 0 (got {})", self.alpha)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
        }
        if self.init_kind == InitKind::Orthonormal && self.r != n {
            return Err(Error::InvalidArgument(format!(
                "orthonormal initialization needs r = n (got r = {}, n = {n})",
                self.r
            )));
        }
        Ok(())
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
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

impl TrajectoryRow {
    pub const COLUMNS: [&'static str; 13] = [
        "t",
        "loss",
        "test_error",
        "test_error_rel",
        "sigma_rstar",
        "sigma_rstar_plus1",
        "spec_norm",
        "angle_L_Lt",
        "angle_X_Lt",
        "signal_sigma_min",
        "noise_spec",
        "angle_X_signal",
        "sigma_min_VXU",
    ];

    /// Values in [`Self::COLUMNS`] order, excluding `t`.
    pub fn values(&self) -> [f64; 12] {
        [
            self.loss,
            self.test_error,
            self.test_error_rel,
            self.sigma_rstar,
            self.sigma_rstar_plus1,
            self.spec_norm,
            self.angle_l_lt,
            self.angle_x_lt,
            self.signal_sigma_min,
            self.noise_spec,
            self.angle_x_signal,
            self.sigma_min_vxu,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    LossThreshold,
    TestErrorThreshold,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub stop_reason: StopReason,
    /// Number of gradient steps taken.
    pub iterations: usize,
    pub diverged: bool,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory always holds the initial row")
    }
}

/// Result of [`run_gd`]: the record plus the last finite iterate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: TrajectoryRecord,
    pub u0: DMatrix<f64>,
    pub final_u: DMatrix<f64>,
}

/// Everything known about iterate `t` when the observer is called.
pub struct IterateView<'a> {
    pub t: usize,
    pub u: &'a DMatrix<f64>,
    /// `y - A(U_t U_t^T)`.
    pub residual: &'a DVector<f64>,
    /// `A*(y - A(U_t U_t^T))`; absent for the final iterate, where no step
    /// is taken.
    pub adjoint_residual: Option<&'a DMatrix<f64>>,
}

/// Read-only hook invoked on every iterate of a run.
pub trait StepObserver {
    fn observe(&mut self, view: &IterateView<'_>) -> Result<()>;
}

impl StepObserver for () {
    fn observe(&mut self, _view: &IterateView<'_>) -> Result<()> {
        Ok(())
    }
}

/// Every iterate of a run, kept in memory.
#[derive(Debug, Default)]
pub struct IterateRecorder {
    pub iterates: Vec<DMatrix<f64>>,
}

impl StepObserver for IterateRecorder {
    fn observe(&mut self, view: &IterateView<'_>) -> Result<()> {
        self.iterates.push(view.u.clone());
        Ok(())
    }
}

pub fn init_factor(cfg: &SolverConfig, n: usize) -> Result<DMatrix<f64>> {
    cfg.validate(n)?;
    Ok(init_unscaled(cfg, n) * cfg.alpha)
}

/// The unit-scale draw `U` behind `U_0 = alpha U`.
pub fn init_unscaled(cfg: &SolverConfig, n: usize) -> DMatrix<f64> {
    let mut rng = rng_from_seed(cfg.seed);
    match cfg.init_kind {
        InitKind::GaussianIid => gaussian_matrix(n, cfg.r, 1.0 / (cfg.r as f64).sqrt(), &mut rng),
        InitKind::Orthonormal => linalg::random_orthonormal(n, n, &mut rng),
    }
}

/// `U - mu * grad f(U)`.
pub fn gd_step(inst: &ProblemInstance, u: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
    if !linalg::is_finite(u) {
        return Err(Error::InvalidArgument("gd_step needs a finite iterate".into()));
    }
    let residual = inst.residual(u)?;
    let g = inst.operator().adjoint_unchecked(&residual);
    let next = u + (g * u) * mu;
    if !linalg::is_finite(&next) {
        return Err(Error::Diverged { iteration: 1 });
    }
    Ok(next)
}

/// Diagnostics row for iterate `u` given its residual.
pub fn row_diagnostics(inst: &ProblemInstance, t: usize, u: &DMatrix<f64>, residual: &DVector<f64>) -> TrajectoryRow {
    let truth = inst.truth();
    let rs = truth.r_star();
    let loss = 0.25 * residual.norm_squared();
    let test_error = (u * u.transpose() - truth.gram()).norm();
    let dec = linalg::svd(u);
    let k = rs.min(dec.u.ncols());
    let lt = dec.u.columns(0, k).into_owned();
    let split = signal_noise_decompose(truth, u).expect("iterate shape checked by caller");
    TrajectoryRow {
        t,
        loss,
        test_error,
        test_error_rel: test_error / inst.gram_fro(),
        sigma_rstar: dec.sigma(rs - 1),
        sigma_rstar_plus1: dec.sigma(rs),
        spec_norm: dec.spectral_norm(),
        angle_l_lt: raw_angle(inst.spectral_basis(), &lt),
        angle_x_lt: raw_angle(truth.basis(), &lt),
        signal_sigma_min: split.signal_sigma_min,
        noise_spec: split.noise_spec,
        angle_x_signal: split.angle_x_signal,
        sigma_min_vxu: split.sigma_min_vxu,
    }
}

pub fn run_gd(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunOutcome> {
    run_gd_observed(inst, cfg, &mut ())
}

/// Runs gradient descent, calling `observer` on every iterate.
///
/// Diagnostics are recorded every `record_stride` iterations and at the
/// final iterate. A non-finite iterate stops the run; the outcome then
/// carries the last finite iterate with `diverged = true`.
pub fn run_gd_observed<O: StepObserver + ?Sized>(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut O,
) -> Result<RunOutcome> {
    let u0 = init_factor(cfg, inst.n())?;
    run_gd_from(inst, cfg, u0, observer)
}

/// Same as [`run_gd_observed`] from an explicit starting point.
pub fn run_gd_from<O: StepObserver + ?Sized>(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    u0: DMatrix<f64>,
    observer: &mut O,
) -> Result<RunOutcome> {
    cfg.validate(inst.n())?;
    if u0.shape() != (inst.n(), cfg.r) {
        return Err(Error::dims("initial factor", format!("{}x{}", inst.n(), cfg.r), format!("{}x{}", u0.nrows(), u0.ncols())));
    }
    let op = inst.operator();
    let mut rows = Vec::new();
    let mut u = u0.clone();
    let mut t = 0;
    let stop_reason = loop {
        let residual = inst.residual_unchecked(&u);
        let loss = 0.25 * residual.norm_squared();
        let loss_hit = cfg.stop_loss.is_some_and(|s| loss <= s);
        let test_hit = cfg.stop_test_error.is_some_and(|s| {
            (&u * u.transpose() - inst.truth().gram()).norm() / inst.gram_fro() <= s
        });
        let stop = if loss_hit {
            Some(StopReason::LossThreshold)
        } else if test_hit {
            Some(StopReason::TestErrorThreshold)
        } else if t >= cfg.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        if stop.is_some() || t % cfg.record_stride == 0 {
            rows.push(row_diagnostics(inst, t, &u, &residual));
        }
        if let Some(reason) = stop {
            observer.observe(&IterateView { t, u: &u, residual: &residual, adjoint_residual: None })?;
            break reason;
        }
        let g = op.adjoint_unchecked(&residual);
        observer.observe(&IterateView { t, u: &u, residual: &residual, adjoint_residual: Some(&g) })?;
        let next = &u + (&g * &u) * cfg.mu;
        if !linalg::is_finite(&next) {
            if rows.last().map(|r| r.t) != Some(t) {
                rows.push(row_diagnostics(inst, t, &u, &residual));
            }
            break StopReason::Diverged;
        }
        u = next;
        t += 1;
    };
    let diverged = stop_reason == StopReason::Diverged || rows.iter().any(|r| !r.is_finite());
    Ok(RunOutcome {
        record: TrajectoryRecord { rows, stop_reason, iterations: t, diverged },
        u0,
        final_u: u,
    })
}
