//! The power-method surrogate of early gradient descent.
//!
//! From small initialization the cubic term of the update is negligible and
//! `U_t` tracks `(I + mu M)^t U_0` with `M = A*(A(X X^T))`. The surrogate is
//! computed by repeated block products `U <- U + mu M U`; matrix powers are
//! never formed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{raw_angle, top_subspace};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ProblemInstance;
use crate::solver::{gd_step, init_factor, init_unscaled, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRow {
    pub t: usize,
    /// `sigma_{r*}((I + mu M)^t)`.
    pub sigma_rstar_z: f64,
    /// `sigma_{r*+1}((I + mu M)^t)`, 0 when `r* = n`.
    pub sigma_rstar1_z: f64,
    /// `||V_{L_perp}^T V_{L~_t}||`.
    pub angle_l_ltilde: f64,
    /// `||U_t - U~_t||`, filled in once paired with a GD trajectory.
    pub err_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SurrogateTrajectory {
    pub iterates: Vec<DMatrix<f64>>,
    pub rows: Vec<SurrogateRow>,
    /// First `t` at which the iteration left the range of `f64`.
    pub truncated_at: Option<usize>,
}

impl SurrogateTrajectory {
    /// Fills `err_norm` from a GD trajectory sharing the same `U_0`.
    pub fn pair_with(&mut self, gd_iterates: &[DMatrix<f64>]) {
        for (row, (ut, gd)) in self.rows.iter_mut().zip(self.iterates.iter().zip(gd_iterates)) {
            row.err_norm = Some(linalg::spectral_norm(&(gd - ut)));
        }
    }
}

/// Singular values of `(I + mu M)^t` at positions `r*` and `r* + 1` (1-based).
pub(crate) fn z_sigmas(lambdas: &[f64], mu: f64, r_star: usize, t: usize) -> (f64, f64) {
    let mut factors: Vec<f64> = lambdas.iter().map(|l| (1.0 + mu * l).abs()).collect();
    factors.sort_by(|a, b| b.total_cmp(a));
    let p = |i: usize| factors.get(i).map_or(0.0, |f| f.powi(t as i32));
    (p(r_star - 1), p(r_star))
}

pub fn surrogate_trajectory(inst: &ProblemInstance, u0: &DMatrix<f64>, mu: f64, t_max: usize) -> Result<SurrogateTrajectory> {
    if u0.nrows() != inst.n() || u0.ncols() == 0 {
        return Err(Error::dims("initial factor", format!("{} rows", inst.n()), format!("{}x{}", u0.nrows(), u0.ncols())));
    }
    if !linalg::is_finite(u0) || !mu.is_finite() {
        return Err(Error::InvalidArgument("surrogate needs finite inputs".into()));
    }
    let m = inst.m_matrix();
    let rs = inst.r_star();
    let k = rs.min(u0.ncols()).min(inst.n());
    let lambdas = inst.m_eigenvalues();
    let mut iterates = Vec::with_capacity(t_max + 1);
    let mut rows = Vec::with_capacity(t_max + 1);
    let mut truncated_at = None;
    let mut current = u0.clone();
    for t in 0..=t_max {
        let (sz, sz1) = z_sigmas(lambdas, mu, rs, t);
        if !linalg::is_finite(&current) || !sz.is_finite() {
            truncated_at = Some(t);
            break;
        }
        let basis = top_subspace(&current, k)?;
        rows.push(SurrogateRow {
            t,
            sigma_rstar_z: sz,
            sigma_rstar1_z: sz1,
            angle_l_ltilde: raw_angle(inst.spectral_basis(), &basis),
            err_norm: None,
        });
        let next = &current + (m * &current) * mu;
        iterates.push(current);
        current = next;
    }
    Ok(SurrogateTrajectory { iterates, rows, truncated_at })
}

/// `theta(t)` series of gradient descent and of its surrogate from a shared `U_0`.
#[derive(Debug, Clone)]
pub struct GdPowerComparison {
    pub u0: DMatrix<f64>,
    pub gd_iterates: Vec<DMatrix<f64>>,
    pub surrogate: SurrogateTrajectory,
    pub theta_gd: Vec<f64>,
    pub theta_p: Vec<f64>,
    pub err_norm: Vec<f64>,
}

impl GdPowerComparison {
    /// `min{ i : ||U~_{i-1} - U_{i-1}|| > ||U~_{i-1}|| }`, if reached.
    pub fn t_star_empirical(&self) -> Option<usize> {
        self.err_norm
            .iter()
            .zip(&self.surrogate.iterates)
            .position(|(e, ut)| *e > linalg::spectral_norm(ut))
            .map(|i| i + 1)
    }
}

pub fn compare_gd_power(inst: &ProblemInstance, cfg: &SolverConfig, t_max: usize) -> Result<GdPowerComparison> {
    let u0 = init_factor(cfg, inst.n())?;
    let mut surrogate = surrogate_trajectory(inst, &u0, cfg.mu, t_max)?;
    let steps = surrogate.iterates.len();
    let mut gd_iterates = Vec::with_capacity(steps);
    let mut u = u0.clone();
    for t in 0..steps {
        if t > 0 {
            u = gd_step(inst, &u, cfg.mu).map_err(|e| match e {
                Error::Diverged { .. } => Error::Diverged { iteration: t },
                other => other,
            })?;
        }
        gd_iterates.push(u.clone());
    }
    surrogate.pair_with(&gd_iterates);
    let k = inst.r_star().min(cfg.r).min(inst.n());
    let vl = inst.spectral_basis();
    let theta_gd = gd_iterates
        .iter()
        .map(|u| Ok(raw_angle(vl, &top_subspace(u, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let theta_p = surrogate.rows.iter().map(|r| r.angle_l_ltilde).collect();
    let err_norm = surrogate.rows.iter().map(|r| r.err_norm.unwrap_or(f64::NAN)).collect();
    Ok(GdPowerComparison { u0, gd_iterates, surrogate, theta_gd, theta_p, err_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPhaseBound {
    /// Closed-form lower bound on `t*`, 0 when the logarithm is negative.
    pub t_star_lower: usize,
    pub t_star_empirical: Option<usize>,
    /// Error bound evaluated at `t = 0..`.
    pub e_bound: Vec<f64>,
    pub delta1_hat: f64,
    pub warnings: Vec<String>,
}

/// `(4 / lambda_1) alpha^3 min(r, n) (1 + delta1) (1 + mu lambda_1)^{3t} ||U||^3`,
/// `U` being the unit-scale initialization.
pub fn error_bound(lambda1: f64, alpha: f64, width: usize, delta1: f64, mu: f64, unit_norm: f64, t: usize) -> f64 {
    4.0 / lambda1
        * alpha.powi(3)
        * width as f64
        * (1.0 + delta1)
        * (1.0 + mu * lambda1).powi(3 * t as i32)
        * unit_norm.powi(3)
}

/// Floor of
/// `ln( lambda_1 / (4 alpha^2 (1+delta1) ||U||^3) * ||U_0^T v_1|| / (alpha min(r,n)) ) / (2 ln(1 + mu lambda_1))`.
///
/// Returns the (possibly negative or non-finite) real value before flooring.
pub fn t_star_lower_raw(lambda1: f64, alpha: f64, width: usize, delta1: f64, mu: f64, unit_norm: f64, u0t_v1: f64) -> f64 {
    let arg = lambda1 / (4.0 * alpha * alpha * (1.0 + delta1) * unit_norm.powi(3)) * (u0t_v1 / (alpha * width as f64));
    arg.ln() / (2.0 * (1.0 + mu * lambda1).ln())
}

pub fn spectral_phase_bounds(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    delta1_hat: f64,
    comparison: &GdPowerComparison,
) -> Result<SpectralPhaseBound> {
    if !(delta1_hat >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta1_hat must be >= 0 (got {delta1_hat})")));
    }
    let lambda1 = inst.m_eigenvalues()[0];
    let unit = init_unscaled(cfg, inst.n());
    let unit_norm = linalg::spectral_norm(&unit);
    let width = cfg.r.min(inst.n());
    let v1 = inst.m_eigenvectors().column(0);
    let u0t_v1 = (comparison.u0.transpose() * v1).norm();

    let mut warnings = Vec::new();
    let raw = t_star_lower_raw(lambda1, cfg.alpha, width, delta1_hat, cfg.mu, unit_norm, u0t_v1);
    let t_star_lower = if raw.is_finite() && raw > 0.0 {
        raw.floor() as usize
    } else {
        let msg = format!("t* lower bound logarithm is not positive ({raw:.3e}); alpha is too large for the bound");
        log::warn!("{msg}");
        warnings.push(msg);
        0
    };
    let e_bound = (0..comparison.err_norm.len())
        .map(|t| error_bound(lambda1, cfg.alpha, width, delta1_hat, cfg.mu, unit_norm, t))
        .collect();
    Ok(SpectralPhaseBound {
        t_star_lower,
        t_star_empirical: comparison.t_star_empirical(),
        e_bound,
        delta1_hat,
        warnings,
    })
}

/// Leading `k` eigenvectors of a symmetric matrix, descending, sign-normalized.
pub fn spectral_subspace(m_sym: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = m_sym.nrows();
    if m_sym.ncols() != n {
        return Err(Error::dims("symmetric matrix", format!("{n}x{n}"), format!("{}x{}", n, m_sym.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("subspace dimension must be in 1..={n} (got {k})")));
    }
    Ok(linalg::sym_eigen(m_sym).vectors.columns(0, k).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::principal_angle;
    use crate::model::{GroundTruth, TruthKind};
    use crate::sensing::SensingOperator;

    #[test]
    fn diagonal_spectral_subspace() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let v = spectral_subspace(&m, 2).unwrap();
        let e12 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(principal_angle(&e12, &v).unwrap() < 1e-14);
        assert!(spectral_subspace(&m, 4).is_err());
        assert!(spectral_subspace(&m, 0).is_err());
    }

    #[test]
    fn gram_spectral_subspace_matches_truth() {
        let truth = GroundTruth::generate(8, 3, TruthKind::Conditioned { kappa: 4.0 }, 2).unwrap();
        let v = spectral_subspace(truth.gram(), 3).unwrap();
        assert!(principal_angle(truth.basis(), &v).unwrap() < 1e-10);
    }

    #[test]
    fn surrogate_starts_at_u0_and_overflow_truncates() {
        let truth = GroundTruth::generate(5, 1, TruthKind::Orthonormal, 2).unwrap();
        let op = SensingOperator::gaussian(5, 60, 3).unwrap();
        let inst = ProblemInstance::new(truth, op).unwrap();
        let u0 = DMatrix::from_element(5, 2, 1e-3);
        let s = surrogate_trajectory(&inst, &u0, 0.25, 3).unwrap();
        assert_eq!(s.iterates[0], u0);
        assert_eq!(s.rows.len(), 4);
        let huge = surrogate_trajectory(&inst, &u0, 1e100, 50).unwrap();
        assert!(huge.truncated_at.is_some());
    }

    #[test]
    fn lower_bound_grows_with_smaller_alpha() {
        let a = t_star_lower_raw(1.2, 1e-4, 6, 0.2, 0.25, 1.5, 0.6e-4);
        let b = t_star_lower_raw(1.2, 1e-8, 6, 0.2, 0.25, 1.5, 0.6e-8);
        assert!(b > a);
    }
}
