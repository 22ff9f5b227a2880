//! Runtime checks of the step-wise inequalities that drive the convergence
//! analysis, evaluated on actual iterates.
//!
//! Each check first evaluates the lemma's preconditions numerically
//! ("gates"). The inequality is only judged when every gate passes; a
//! violation is never reported for a step whose gates failed. Unspecified
//! "sufficiently small" constants are all replaced by one configurable
//! `c_small`.
//!
//! Every record is normalized to the form `lhs <= rhs`; for a lower bound
//! `A >= B` the record stores `lhs = B`, `rhs = A`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{raw_angle, signal_noise_decompose, SignalNoiseSplit, RANK_DEFICIENCY_TOL};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ProblemInstance;
use crate::solver::{IterateView, StepObserver};
use crate::spectral::z_sigmas;

pub const DEFAULT_C_SMALL: f64 = 0.01;

/// Relative slack allowed when comparing the two sides of an inequality.
const REL_SLACK: f64 = 1e-10;
/// Absolute slack, in units of `||X||^2`.
const ABS_SLACK: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// Exponential growth of `sigma_min(V_X^T U_t)`.
    SigmaGrowth,
    /// Recursion for the noise norm `||U_t W_perp||`.
    NoiseRecursion,
    /// Recursion for the signal angle `||V_{X_perp}^T V_{U_t W_t}||`.
    AngleRecursion,
    /// `||U_t|| <= 3 ||X||` is preserved by a step.
    NormControl,
    /// Linear contraction of `||V_X^T (X X^T - U U^T)||_F`.
    LocalContraction,
    /// Test error split into projected error and noise term.
    ErrorSplit,
    /// Singular values and angle of `Z_t U_0 + E_t` from those of `Z_t`.
    Perturbation,
    /// Closeness of the SVD of `U_t` and the signal/noise split.
    SvdCloseness,
    /// Eigenvalues and leading subspace of `M` against those of `X X^T`.
    WeylConsequence,
}

impl Lemma {
    pub const ALL: [Lemma; 9] = [
        Lemma::SigmaGrowth,
        Lemma::NoiseRecursion,
        Lemma::AngleRecursion,
        Lemma::NormControl,
        Lemma::LocalContraction,
        Lemma::ErrorSplit,
        Lemma::Perturbation,
        Lemma::SvdCloseness,
        Lemma::WeylConsequence,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    FailOnViolation,
    #[default]
    LogOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    #[serde(default = "all_lemmas")]
    pub lemmas: Vec<Lemma>,
    #[serde(default = "default_c_small")]
    pub c_small: f64,
    /// RIP estimate; raises the `delta` used by the eigenvalue check when it
    /// exceeds the measured perturbation.
    #[serde(default)]
    pub delta_hat: Option<f64>,
    #[serde(default)]
    pub report_mode: ReportMode,
}

fn all_lemmas() -> Vec<Lemma> {
    Lemma::ALL.to_vec()
}

fn default_c_small() -> f64 {
    DEFAULT_C_SMALL
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { lemmas: all_lemmas(), c_small: DEFAULT_C_SMALL, delta_hat: None, report_mode: ReportMode::LogOnly }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_small > 0.0) || !self.c_small.is_finite() {
            return Err(Error::InvalidArgument(format!("c_small must be > 0 (got {})", self.c_small)));
        }
        Ok(())
    }

    fn enabled(&self, lemma: Lemma) -> bool {
        self.lemmas.contains(&lemma)
    }
}

/// One numerically evaluated precondition: `value <= limit` (or `<` when strict).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub lemma: Lemma,
    /// Which inequality of the lemma this record is about.
    pub inequality: String,
    /// Iteration index (the earlier one for step checks); absent for
    /// instance-level checks.
    pub t: Option<usize>,
    pub precondition_satisfied: bool,
    /// `None` when the preconditions failed (not applicable).
    pub inequality_satisfied: Option<bool>,
    pub lhs: f64,
    pub rhs: f64,
    /// Whether `lhs <= rhs` numerically, regardless of the gates.
    pub holds_ungated: bool,
    pub gates: Vec<Gate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub records: usize,
    pub applicable: usize,
    pub held: usize,
    pub violated: usize,
    pub held_ungated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub records: Vec<MonitorRecord>,
    pub summary: BTreeMap<Lemma, LemmaSummary>,
}

impl MonitorReport {
    pub fn total_violations(&self) -> usize {
        self.summary.values().map(|s| s.violated).sum()
    }

    pub fn total_applicable(&self) -> usize {
        self.summary.values().map(|s| s.applicable).sum()
    }

    fn push(&mut self, record: MonitorRecord, keep: bool) {
        let s = self.summary.entry(record.lemma).or_default();
        s.records += 1;
        if record.holds_ungated {
            s.held_ungated += 1;
        }
        match record.inequality_satisfied {
            Some(true) => {
                s.applicable += 1;
                s.held += 1;
            }
            Some(false) => {
                s.applicable += 1;
                s.violated += 1;
            }
            None => {}
        }
        if keep {
            self.records.push(record);
        }
    }

    pub fn merge(&mut self, other: &MonitorReport) {
        for (lemma, s) in &other.summary {
            let dst = self.summary.entry(*lemma).or_default();
            dst.records += s.records;
            dst.applicable += s.applicable;
            dst.held += s.held;
            dst.violated += s.violated;
            dst.held_ungated += s.held_ungated;
        }
        self.records.extend(other.records.iter().cloned());
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Quantities of one iterate shared by several lemmas.
#[derive(Debug, Clone)]
pub struct IterateStats {
    pub t: usize,
    pub u: DMatrix<f64>,
    pub split: SignalNoiseSplit,
    /// `||X X^T - U U^T||`.
    pub err_spec: f64,
    /// `||X X^T - U U^T||_F`.
    pub err_fro: f64,
    /// `||(A*A - Id)(X X^T - U U^T)||`.
    pub dev_spec: f64,
    /// `||(A*A - Id)(X X^T - U U^T)||_F`.
    pub dev_fro: f64,
    /// `||V_X^T (X X^T - U U^T)||_F`.
    pub projected_err_fro: f64,
    /// `||U W_perp W_perp^T U^T||_F`.
    pub noise_outer_fro: f64,
    pub spec_norm: f64,
    pub sigma_rstar: f64,
    pub sigma_rstar_plus1: f64,
    /// `||V_{X_perp}^T V_{L_t}||`.
    pub angle_x_lt: f64,
    /// `||V_{L_perp}^T V_{L_t}||`.
    pub angle_l_lt: f64,
}

impl IterateStats {
    /// `adjoint_residual` is `A*(y - A(U U^T))`; it is computed when absent.
    pub fn compute(inst: &ProblemInstance, t: usize, u: &DMatrix<f64>, adjoint_residual: Option<&DMatrix<f64>>) -> Result<Self> {
        let truth = inst.truth();
        let split = signal_noise_decompose(truth, u)?;
        let err = truth.gram() - u * u.transpose();
        let owned;
        let normal = match adjoint_residual {
            Some(g) => g,
            None => {
                let r: DVector<f64> = inst.residual(u)?;
                owned = inst.operator().adjoint_unchecked(&r);
                &owned
            }
        };
        let dev = normal - &err;
        let dec = linalg::svd(u);
        let rs = truth.r_star();
        let k = rs.min(dec.u.ncols());
        let lt = dec.u.columns(0, k).into_owned();
        let noise_outer_fro = (&split.noise * split.noise.transpose()).norm();
        Ok(Self {
            t,
            u: u.clone(),
            err_spec: linalg::sym_spectral_norm(&err),
            err_fro: err.norm(),
            dev_spec: linalg::sym_spectral_norm(&dev),
            dev_fro: dev.norm(),
            projected_err_fro: (truth.basis().transpose() * &err).norm(),
            noise_outer_fro,
            spec_norm: dec.spectral_norm(),
            sigma_rstar: dec.sigma(rs - 1),
            sigma_rstar_plus1: dec.sigma(rs),
            angle_x_lt: raw_angle(truth.basis(), &lt),
            angle_l_lt: raw_angle(inst.spectral_basis(), &lt),
            split,
        })
    }
}

/// Constants of the instance used by the gates.
#[derive(Debug, Clone, Copy)]
struct Scales {
    mu: f64,
    c: f64,
    x_norm: f64,
    sigma_min: f64,
    kappa: f64,
}

impl Scales {
    fn new(inst: &ProblemInstance, mu: f64, c: f64) -> Self {
        let t = inst.truth();
        Self { mu, c, x_norm: t.sigma_max(), sigma_min: t.sigma_min(), kappa: t.kappa() }
    }

    fn slack(&self) -> f64 {
        ABS_SLACK * self.x_norm.powi(2).max(1.0)
    }
}

struct Builder {
    lemma: Lemma,
    t: Option<usize>,
    gates: Vec<Gate>,
}

impl Builder {
    fn new(lemma: Lemma, t: Option<usize>) -> Self {
        Self { lemma, t, gates: Vec::new() }
    }

    fn le(mut self, name: &str, value: f64, limit: f64) -> Self {
        self.gates.push(Gate { name: name.into(), value, limit, satisfied: value <= limit });
        self
    }

    fn lt(mut self, name: &str, value: f64, limit: f64) -> Self {
        self.gates.push(Gate { name: name.into(), value, limit, satisfied: value < limit });
        self
    }

    fn ge(mut self, name: &str, value: f64, limit: f64) -> Self {
        self.gates.push(Gate { name: name.into(), value, limit, satisfied: value >= limit });
        self
    }

    fn check(&self, inequality: &str, lhs: f64, rhs: f64, slack: f64) -> MonitorRecord {
        let precondition_satisfied = self.gates.iter().all(|g| g.satisfied);
        let holds = lhs.is_finite() && rhs.is_finite() && lhs <= rhs + REL_SLACK * lhs.abs().max(rhs.abs()) + slack;
        MonitorRecord {
            lemma: self.lemma,
            inequality: inequality.into(),
            t: self.t,
            precondition_satisfied,
            inequality_satisfied: precondition_satisfied.then_some(holds),
            lhs,
            rhs,
            holds_ungated: holds,
            gates: self.gates.clone(),
        }
    }
}

/// Full column rank relative to `scale`.
fn full_rank(a: &DMatrix<f64>, scale: f64) -> bool {
    a.ncols() <= a.nrows()
        && linalg::singular_values(a).last().is_some_and(|&s| scale > 0.0 && s >= RANK_DEFICIENCY_TOL * scale)
}

fn rank_value(full: bool) -> f64 {
    if full {
        1.0
    } else {
        0.0
    }
}

fn sigma_growth(cur: &IterateStats, next: &IterateStats, s: &Scales) -> MonitorRecord {
    let sigma_t = cur.split.sigma_min_vxu;
    let rhs = sigma_t * (1.0 + 0.25 * s.mu * s.sigma_min.powi(2) - s.mu * sigma_t.powi(2));
    Builder::new(Lemma::SigmaGrowth, Some(cur.t))
        .le("mu", s.mu, s.c * s.x_norm.powi(-2) * s.kappa.powi(-2))
        .le("spec_norm", cur.spec_norm, 3.0 * s.x_norm)
        .le("angle_x_signal", cur.split.angle_x_signal, s.c / s.kappa)
        .le("deviation", cur.dev_spec, s.c * s.sigma_min.powi(2))
        .ge("vxu_full_rank", rank_value(!cur.split.rank_deficient), 1.0)
        .check("sigma_min_vxu_growth", rhs, next.split.sigma_min_vxu, s.slack())
}

fn noise_recursion(cur: &IterateStats, next: &IterateStats, s: &Scales, vx: &DMatrix<f64>) -> MonitorRecord {
    let noise = cur.split.noise_spec;
    let factor = 1.0 - 0.5 * s.mu * noise.powi(2)
        + 9.0 * s.mu * cur.split.angle_x_signal * s.x_norm.powi(2)
        + 2.0 * s.mu * cur.dev_spec;
    let rhs = factor * noise;
    let next_proj = vx.transpose() * &next.u * &cur.split.w;
    let mu_limit = s.c * s.x_norm.powi(-2).min(1.0 / cur.dev_spec);
    Builder::new(Lemma::NoiseRecursion, Some(cur.t))
        .ge("noise_columns", cur.split.w_perp.ncols() as f64, 1.0)
        .le("mu", s.mu, mu_limit)
        .le("spec_norm", cur.spec_norm, 3.0 * s.x_norm)
        .ge("next_vxu_w_full_rank", rank_value(full_rank(&next_proj, next.spec_norm)), 1.0)
        .le("angle_x_signal", cur.split.angle_x_signal, s.c / s.kappa)
        .check("noise_norm_recursion", next.split.noise_spec, rhs, s.slack())
}

fn angle_recursion(cur: &IterateStats, next: &IterateStats, s: &Scales) -> MonitorRecord {
    let rhs = (1.0 - 0.25 * s.mu * s.sigma_min.powi(2)) * cur.split.angle_x_signal
        + 100.0 * s.mu * cur.dev_spec
        + 500.0 * s.mu.powi(2) * cur.err_spec.powi(2);
    Builder::new(Lemma::AngleRecursion, Some(cur.t))
        .le("noise_vs_signal", cur.split.noise_spec, 2.0 * cur.split.signal_sigma_min)
        .le("spec_norm", cur.spec_norm, 3.0 * s.x_norm)
        .le("deviation", cur.dev_spec, s.c * s.sigma_min.powi(2))
        .le("angle_x_signal", cur.split.angle_x_signal, s.c)
        .le("mu", s.mu, s.c * s.kappa.powi(-2) * s.x_norm.powi(-2))
        .le("noise_spec", cur.split.noise_spec, s.c * s.kappa.powi(-2) * s.x_norm)
        .check("signal_angle_recursion", next.split.angle_x_signal, rhs, 0.0)
}

fn norm_control(cur: &IterateStats, next: &IterateStats, s: &Scales) -> MonitorRecord {
    Builder::new(Lemma::NormControl, Some(cur.t))
        .le("spec_norm", cur.spec_norm, 3.0 * s.x_norm)
        .le("mu", s.mu, 1.0 / (27.0 * s.x_norm.powi(2)))
        .le("deviation", cur.dev_spec, s.x_norm.powi(2))
        .check("spec_norm_bound", next.spec_norm, 3.0 * s.x_norm, 0.0)
}

fn local_contraction(cur: &IterateStats, next: &IterateStats, s: &Scales) -> MonitorRecord {
    let smin2 = s.sigma_min.powi(2);
    let rhs = (1.0 - s.mu / 200.0 * smin2) * cur.projected_err_fro + s.mu * smin2 / 100.0 * cur.noise_outer_fro;
    let dev_limit = s.c * s.kappa.powi(-2) * cur.err_fro;
    Builder::new(Lemma::LocalContraction, Some(cur.t))
        .le("spec_norm", cur.spec_norm, 3.0 * s.x_norm)
        .ge("signal_sigma_min", cur.split.signal_sigma_min, s.sigma_min / 10f64.sqrt())
        .le("mu", s.mu, s.c * s.kappa.powi(-2) * s.x_norm.powi(-2))
        .le("angle_x_signal", cur.split.angle_x_signal, s.c * s.kappa.powi(-2))
        .le("deviation_fro", cur.dev_fro, dev_limit)
        .le("deviation", cur.dev_spec, dev_limit)
        .check("projected_error_contraction", next.projected_err_fro, rhs, s.slack())
}

fn error_split(cur: &IterateStats, s: &Scales) -> MonitorRecord {
    Builder::new(Lemma::ErrorSplit, Some(cur.t))
        .le("spec_norm", cur.spec_norm, 3.0 * s.x_norm)
        .ge("signal_sigma_min", cur.split.signal_sigma_min, s.sigma_min / 10f64.sqrt())
        .le("angle_x_signal", cur.split.angle_x_signal, s.c * s.kappa.powi(-2))
        .check(
            "test_error_split",
            cur.err_fro,
            4.0 * cur.projected_err_fro + cur.noise_outer_fro,
            s.slack(),
        )
}

fn svd_closeness(cur: &IterateStats, s: &Scales) -> Vec<MonitorRecord> {
    let b = Builder::new(Lemma::SvdCloseness, Some(cur.t)).le("angle_x_lt", cur.angle_x_lt, 0.125);
    let tol = s.slack();
    vec![
        b.check("signal_sigma_vs_sigma_rstar", 0.5 * cur.sigma_rstar, cur.split.signal_sigma_min, tol),
        b.check("signal_angle_vs_lt_angle", cur.split.angle_x_signal, 7.0 * cur.angle_x_lt, 0.0),
        b.check("noise_vs_sigma_rstar_plus1", cur.split.noise_spec, 2.0 * cur.sigma_rstar_plus1, tol),
    ]
}

pub fn monitor_sigma_growth(inst: &ProblemInstance, u_t: &DMatrix<f64>, u_next: &DMatrix<f64>, mu: f64, cfg: &MonitorConfig) -> Result<MonitorRecord> {
    let (a, b, s) = step_stats(inst, u_t, u_next, mu, cfg)?;
    Ok(sigma_growth(&a, &b, &s))
}

pub fn monitor_noise_recursion(inst: &ProblemInstance, u_t: &DMatrix<f64>, u_next: &DMatrix<f64>, mu: f64, cfg: &MonitorConfig) -> Result<MonitorRecord> {
    let (a, b, s) = step_stats(inst, u_t, u_next, mu, cfg)?;
    Ok(noise_recursion(&a, &b, &s, inst.truth().basis()))
}

pub fn monitor_angle_recursion(inst: &ProblemInstance, u_t: &DMatrix<f64>, u_next: &DMatrix<f64>, mu: f64, cfg: &MonitorConfig) -> Result<MonitorRecord> {
    let (a, b, s) = step_stats(inst, u_t, u_next, mu, cfg)?;
    Ok(angle_recursion(&a, &b, &s))
}

pub fn monitor_norm_control(inst: &ProblemInstance, u_t: &DMatrix<f64>, u_next: &DMatrix<f64>, mu: f64, cfg: &MonitorConfig) -> Result<MonitorRecord> {
    let (a, b, s) = step_stats(inst, u_t, u_next, mu, cfg)?;
    Ok(norm_control(&a, &b, &s))
}

pub fn monitor_local_contraction(inst: &ProblemInstance, u_t: &DMatrix<f64>, u_next: &DMatrix<f64>, mu: f64, cfg: &MonitorConfig) -> Result<MonitorRecord> {
    let (a, b, s) = step_stats(inst, u_t, u_next, mu, cfg)?;
    Ok(local_contraction(&a, &b, &s))
}

pub fn monitor_error_split(inst: &ProblemInstance, u_t: &DMatrix<f64>, cfg: &MonitorConfig) -> Result<MonitorRecord> {
    let stats = IterateStats::compute(inst, 0, u_t, None)?;
    Ok(error_split(&stats, &Scales::new(inst, 0.0, cfg.c_small)))
}

pub fn monitor_svd_closeness(inst: &ProblemInstance, u_t: &DMatrix<f64>, cfg: &MonitorConfig) -> Result<Vec<MonitorRecord>> {
    let stats = IterateStats::compute(inst, 0, u_t, None)?;
    Ok(svd_closeness(&stats, &Scales::new(inst, 0.0, cfg.c_small)))
}

fn step_stats(
    inst: &ProblemInstance,
    u_t: &DMatrix<f64>,
    u_next: &DMatrix<f64>,
    mu: f64,
    cfg: &MonitorConfig,
) -> Result<(IterateStats, IterateStats, Scales)> {
    let a = IterateStats::compute(inst, 0, u_t, None)?;
    let b = IterateStats::compute(inst, 1, u_next, None)?;
    Ok((a, b, Scales::new(inst, mu, cfg.c_small)))
}

/// Inputs of the perturbation check at iteration `t`.
pub struct PerturbationInput<'a> {
    pub t: usize,
    pub mu: f64,
    pub alpha: f64,
    /// Unit-scale initialization `U`, with `U_0 = alpha U`.
    pub unit_init: &'a DMatrix<f64>,
    /// Gradient-descent iterate `U_t`.
    pub u_t: &'a DMatrix<f64>,
    /// Surrogate iterate `(I + mu M)^t U_0`.
    pub surrogate_t: &'a DMatrix<f64>,
}

/// Checks the three bounds on `Z_t U_0 + E_t = U_t` with `E_t = U_t - U~_t`.
pub fn monitor_perturbation(inst: &ProblemInstance, input: &PerturbationInput<'_>) -> Result<Vec<MonitorRecord>> {
    let rs = inst.r_star();
    let unit_norm = linalg::spectral_norm(input.unit_init);
    let vl_u = inst.spectral_basis().transpose() * input.unit_init;
    let sigma_vlu = if vl_u.ncols() < rs { 0.0 } else { linalg::sigma_min(&vl_u) };
    Ok(perturbation(inst, input, unit_norm, sigma_vlu))
}

fn perturbation(inst: &ProblemInstance, input: &PerturbationInput<'_>, unit_norm: f64, sigma_vlu: f64) -> Vec<MonitorRecord> {
    let rs = inst.r_star();
    let (sz, sz1) = z_sigmas(inst.m_eigenvalues(), input.mu, rs, input.t);
    let e_norm = linalg::spectral_norm(&(input.u_t - input.surrogate_t));
    let dec = linalg::svd(input.u_t);
    let k = rs.min(dec.u.ncols());
    let angle = raw_angle(inst.spectral_basis(), &dec.u.columns(0, k).into_owned());
    let a = input.alpha;
    let signal = a * sz * sigma_vlu;
    let leak = a * sz1 * unit_norm;
    let gap_lhs = sz1 * unit_norm + e_norm / a;
    let gap_rhs = sz * sigma_vlu;
    let b = Builder::new(Lemma::Perturbation, Some(input.t)).lt("gap", gap_lhs, gap_rhs);
    let slack = a * sz * 1e-12;
    vec![
        b.check("sigma_rstar_lower", signal - e_norm, dec.sigma(rs - 1), slack),
        b.check("sigma_rstar_plus1_upper", dec.sigma(rs), leak + e_norm, slack),
        b.check("angle_l_lt_upper", angle, (leak + e_norm) / (signal - leak - e_norm), 0.0),
    ]
}

/// Eigenvalue and subspace comparison of `M` with `X X^T`, using
/// `delta = max(||M - X X^T|| / lambda_{r*}(X X^T), delta_hat)`.
pub fn monitor_weyl_consequence(inst: &ProblemInstance, delta_hat: Option<f64>) -> Vec<MonitorRecord> {
    let truth = inst.truth();
    let rs = truth.r_star();
    let l1_x = truth.sigma_max().powi(2);
    let lr_x = truth.sigma_min().powi(2);
    let measured = linalg::sym_spectral_norm(&(inst.m_matrix() - truth.gram())) / lr_x;
    let delta = measured.max(delta_hat.unwrap_or(0.0));
    let eig = inst.m_eigenvalues();
    let b = Builder::new(Lemma::WeylConsequence, None).lt("delta", delta, 0.5);
    let slack = ABS_SLACK * l1_x.max(1.0);
    let mut out = vec![
        b.check("lambda1_lower", (1.0 - delta) * l1_x, eig[0], slack),
        b.check("lambda1_upper", eig[0], (1.0 + delta) * l1_x, slack),
    ];
    match eig.get(rs) {
        Some(&next) => out.push(b.check("lambda_rstar_plus1_upper", next, delta * lr_x, slack)),
        None => {
            let b = Builder::new(Lemma::WeylConsequence, None)
                .lt("delta", delta, 0.5)
                .lt("rstar_below_n", rs as f64, truth.n() as f64);
            out.push(b.check("lambda_rstar_plus1_upper", 0.0, 0.0, 0.0));
        }
    }
    out.push(b.check("lambda_rstar_lower", (1.0 - delta) * lr_x, eig[rs - 1], slack));
    let angle = raw_angle(truth.basis(), inst.spectral_basis());
    out.push(b.check("spectral_subspace_angle", angle, 2.0 * delta, 0.0));
    out
}

/// [`StepObserver`] evaluating every enabled lemma along a run.
pub struct MonitorObserver<'a> {
    inst: &'a ProblemInstance,
    cfg: MonitorConfig,
    scales: Scales,
    alpha: f64,
    keep_records: bool,
    prev: Option<IterateStats>,
    surrogate: Option<SurrogateState>,
    report: MonitorReport,
}

struct SurrogateState {
    current: DMatrix<f64>,
    unit: DMatrix<f64>,
    unit_norm: f64,
    sigma_vlu: f64,
}

impl<'a> MonitorObserver<'a> {
    pub fn new(inst: &'a ProblemInstance, mu: f64, alpha: f64, cfg: MonitorConfig) -> Result<Self> {
        cfg.validate()?;
        let scales = Scales::new(inst, mu, cfg.c_small);
        let mut report = MonitorReport::default();
        if cfg.enabled(Lemma::WeylConsequence) {
            for rec in monitor_weyl_consequence(inst, cfg.delta_hat) {
                report.push(rec, true);
            }
        }
        Ok(Self { inst, cfg, scales, alpha, keep_records: true, prev: None, surrogate: None, report })
    }

    /// Keep only the summary counts, not individual records.
    pub fn summary_only(mut self) -> Self {
        self.keep_records = false;
        self.report.records.clear();
        self
    }

    pub fn report(&self) -> &MonitorReport {
        &self.report
    }

    pub fn into_report(self) -> MonitorReport {
        self.report
    }

    fn emit(&mut self, rec: MonitorRecord) -> Result<()> {
        if rec.inequality_satisfied == Some(false) {
            let msg = format!(
                "{:?}/{} violated at t = {:?}: lhs = {:.6e} > rhs = {:.6e}",
                rec.lemma, rec.inequality, rec.t, rec.lhs, rec.rhs
            );
            log::warn!("{msg}");
            if self.cfg.report_mode == ReportMode::FailOnViolation {
                self.report.push(rec, self.keep_records);
                return Err(Error::MonitorViolation(msg));
            }
        }
        self.report.push(rec, self.keep_records);
        Ok(())
    }
}

impl StepObserver for MonitorObserver<'_> {
    fn observe(&mut self, view: &IterateView<'_>) -> Result<()> {
        let inst = self.inst;
        let cur = IterateStats::compute(inst, view.t, view.u, view.adjoint_residual)?;
        let s = self.scales;
        let enabled = |l: Lemma| self.cfg.enabled(l);

        let mut records = Vec::new();
        if let Some(prev) = &self.prev {
            if enabled(Lemma::SigmaGrowth) {
                records.push(sigma_growth(prev, &cur, &s));
            }
            if enabled(Lemma::NoiseRecursion) {
                records.push(noise_recursion(prev, &cur, &s, inst.truth().basis()));
            }
            if enabled(Lemma::AngleRecursion) {
                records.push(angle_recursion(prev, &cur, &s));
            }
            if enabled(Lemma::NormControl) {
                records.push(norm_control(prev, &cur, &s));
            }
            if enabled(Lemma::LocalContraction) {
                records.push(local_contraction(prev, &cur, &s));
            }
        }
        if enabled(Lemma::ErrorSplit) {
            records.push(error_split(&cur, &s));
        }
        if enabled(Lemma::SvdCloseness) {
            records.extend(svd_closeness(&cur, &s));
        }
        if enabled(Lemma::Perturbation) {
            if self.surrogate.is_none() {
                let unit = view.u / self.alpha;
                let vl_u = inst.spectral_basis().transpose() * &unit;
                let sigma_vlu = if vl_u.ncols() < inst.r_star() { 0.0 } else { linalg::sigma_min(&vl_u) };
                self.surrogate = Some(SurrogateState {
                    current: view.u.clone(),
                    unit_norm: linalg::spectral_norm(&unit),
                    unit,
                    sigma_vlu,
                });
            }
            let st = self.surrogate.as_mut().expect("initialized above");
            if linalg::is_finite(&st.current) {
                let input = PerturbationInput {
                    t: view.t,
                    mu: s.mu,
                    alpha: self.alpha,
                    unit_init: &st.unit,
                    u_t: view.u,
                    surrogate_t: &st.current,
                };
                let (sz, _) = z_sigmas(inst.m_eigenvalues(), s.mu, inst.r_star(), view.t);
                if sz.is_finite() {
                    records.extend(perturbation(inst, &input, st.unit_norm, st.sigma_vlu));
                }
                let next = &st.current + (inst.m_matrix() * &st.current) * s.mu;
                st.current = next;
            }
        }
        for rec in records {
            self.emit(rec)?;
        }
        self.prev = Some(cur);
        Ok(())
    }
}
