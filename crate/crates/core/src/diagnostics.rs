//! Signal/noise decomposition of iterates, subspace angles and detection of
//! the three trajectory phases.
//!
//! For an iterate `U` (`n x r`) write the SVD `V_X^T U = V S W^T` with
//! `W` of size `r x r_star`. The signal term is `U W`, the noise term is
//! `U W_perp` where `W_perp` spans the complement of `W`. By construction
//! the noise term is orthogonal to the column span of `X`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::GroundTruth;
use crate::solver::TrajectoryRecord;

/// Threshold on `sigma_{r*}(V_X^T U) / ||U||` below which the split is
/// flagged rank deficient.
pub const RANK_DEFICIENCY_TOL: f64 = 1e-13;

/// Orthonormality tolerance for inputs to [`principal_angle`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SignalNoiseSplit {
    /// `r x k` right singular vectors of `V_X^T U`, `k = min(r, r_star)`.
    pub w: DMatrix<f64>,
    /// `r x (r - k)` orthonormal complement of `w`.
    pub w_perp: DMatrix<f64>,
    /// `U W`.
    pub signal: DMatrix<f64>,
    /// `U W_perp`.
    pub noise: DMatrix<f64>,
    pub signal_sigma_min: f64,
    pub noise_spec: f64,
    /// `||V_{X_perp}^T V_{UW}||`.
    pub angle_x_signal: f64,
    /// `sigma_min(V_X^T U)`.
    pub sigma_min_vxu: f64,
    /// Set when `V_X^T U` is numerically rank deficient; `w` is then not unique.
    pub rank_deficient: bool,
}

impl SignalNoiseSplit {
    /// `signal W^T + noise W_perp^T`, which reproduces `U`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.signal * self.w.transpose() + &self.noise * self.w_perp.transpose()
    }
}

pub fn signal_noise_decompose(truth: &GroundTruth, u: &DMatrix<f64>) -> Result<SignalNoiseSplit> {
    if u.nrows() != truth.n() || u.ncols() == 0 {
        return Err(Error::dims("iterate", format!("{} rows", truth.n()), format!("{}x{}", u.nrows(), u.ncols())));
    }
    let vx = truth.basis();
    let projected = vx.transpose() * u;
    let dec = linalg::svd(&projected);
    let k = dec.s.len();
    let scale = linalg::spectral_norm(u);
    let bottom = dec.sigma(k - 1);
    let rank_deficient = scale == 0.0 || bottom < RANK_DEFICIENCY_TOL * scale || k < truth.r_star();
    let w = dec.v;
    let w_perp = linalg::orthonormal_complement(&w);
    let signal = u * &w;
    let noise = u * &w_perp;
    let signal_dec = linalg::svd(&signal);
    let signal_sigma_min = signal_dec.sigma(k - 1);
    let noise_spec = linalg::spectral_norm(&noise);
    let signal_basis = signal_dec.u.columns(0, k).into_owned();
    let angle_x_signal = raw_angle(vx, &signal_basis);
    Ok(SignalNoiseSplit {
        w,
        w_perp,
        signal,
        noise,
        signal_sigma_min,
        noise_spec,
        angle_x_signal,
        sigma_min_vxu: if k < truth.r_star() { 0.0 } else { bottom },
        rank_deficient,
    })
}

/// `||V_{1,perp}^T V_2||`, the largest singular value of `(I - V_1 V_1^T) V_2`.
///
/// Both inputs must have orthonormal columns. When they have the same
/// number of columns the value equals `||V_1 V_1^T - V_2 V_2^T||`.
pub fn principal_angle(v1: &DMatrix<f64>, v2: &DMatrix<f64>) -> Result<f64> {
    if v1.nrows() != v2.nrows() {
        return Err(Error::dims("subspace ambient dimension", v1.nrows(), v2.nrows()));
    }
    linalg::check_orthonormal(v1, ORTHONORMAL_TOL)?;
    linalg::check_orthonormal(v2, ORTHONORMAL_TOL)?;
    Ok(raw_angle(v1, v2))
}

pub(crate) fn raw_angle(v1: &DMatrix<f64>, v2: &DMatrix<f64>) -> f64 {
    if v2.ncols() == 0 {
        return 0.0;
    }
    let residual = v2 - v1 * (v1.transpose() * v2);
    linalg::spectral_norm(&residual).clamp(0.0, 1.0)
}

/// Leading `k` left singular vectors of `U` (the subspace `L_t` for `k = r_star`).
pub fn top_subspace(u: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let limit = u.nrows().min(u.ncols());
    if k == 0 || k > limit {
        return Err(Error::InvalidArgument(format!("subspace dimension must be in 1..={limit} (got {k})")));
    }
    Ok(linalg::svd(u).u.columns(0, k).into_owned())
}

/// Boundaries of the spectral, saddle-avoidance and refinement phases.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// First recorded `t` with `angle_L_Lt <= angle_threshold`.
    pub t_spectral_end: Option<usize>,
    /// First recorded `t` at or after the spectral end with
    /// `sigma_min(V_X^T U_t) >= sigma_min(X) / sqrt(10)`.
    pub t1: Option<usize>,
    /// First recorded `t` at or after `t1` with `test_error_rel <= final_threshold`.
    pub t_hat: Option<usize>,
    /// `[t_spectral_end, t1 - t_spectral_end, t_hat - t1]`.
    pub phase_lengths: [Option<usize>; 3],
    pub angle_threshold: f64,
    pub final_threshold: f64,
}

pub const DEFAULT_ANGLE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_FINAL_THRESHOLD: f64 = 1e-3;

/// Scans recorded rows in order. Each boundary search starts at the
/// previous detected boundary, so a report with all three boundaries is
/// ordered. Absent boundaries stay `None`.
pub fn detect_phases(
    traj: &TrajectoryRecord,
    truth: &GroundTruth,
    angle_threshold: f64,
    final_threshold: f64,
) -> PhaseReport {
    let rows = &traj.rows;
    let saddle_level = truth.sigma_min() / 10f64.sqrt();

    let spectral_idx = rows.iter().position(|row| row.angle_l_lt <= angle_threshold);
    let from = spectral_idx.unwrap_or(0);
    let t1_idx = rows[from..]
        .iter()
        .position(|row| row.sigma_min_vxu >= saddle_level)
        .map(|i| i + from);
    let from = t1_idx.unwrap_or(from);
    let hat_idx = rows[from..]
        .iter()
        .position(|row| row.test_error_rel <= final_threshold)
        .map(|i| i + from);

    let t_spectral_end = spectral_idx.map(|i| rows[i].t);
    let t1 = t1_idx.map(|i| rows[i].t);
    let t_hat = hat_idx.map(|i| rows[i].t);
    let phase_lengths = [
        t_spectral_end,
        t_spectral_end.zip(t1).map(|(a, b)| b - a),
        t1.zip(t_hat).map(|(a, b)| b - a),
    ];
    PhaseReport { t_spectral_end, t1, t_hat, phase_lengths, angle_threshold, final_threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TruthKind;
    use crate::rng::{gaussian_matrix, rng_from_seed};

    #[test]
    fn exact_alignment_split() {
        let truth = GroundTruth::generate(6, 2, TruthKind::Orthonormal, 4).unwrap();
        let split = signal_noise_decompose(&truth, truth.factor()).unwrap();
        assert_eq!(split.w_perp.ncols(), 0);
        assert_eq!(split.noise_spec, 0.0);
        assert!(split.angle_x_signal < 1e-12);
        assert!(!split.rank_deficient);
        let wtw = split.w.transpose() * &split.w;
        assert!((wtw - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_are_rank_deficient() {
        let truth = GroundTruth::generate(5, 2, TruthKind::Orthonormal, 4).unwrap();
        let vx = truth.basis();
        let g = gaussian_matrix(5, 3, 1.0, &mut rng_from_seed(2));
        let u = &g - vx * (vx.transpose() * &g);
        let split = signal_noise_decompose(&truth, &u).unwrap();
        assert!(split.rank_deficient);
    }

    #[test]
    fn angle_between_axes() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(principal_angle(&e1, &e1).unwrap(), 0.0);
        assert!((principal_angle(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn angle_rejects_non_orthonormal() {
        let v = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(principal_angle(&v, &e1), Err(Error::NotOrthonormal(_))));
        assert!(principal_angle(&e1, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn top_subspace_range_checks() {
        let u = gaussian_matrix(4, 2, 1.0, &mut rng_from_seed(2));
        assert!(top_subspace(&u, 0).is_err());
        assert!(top_subspace(&u, 3).is_err());
        assert_eq!(top_subspace(&u, 2).unwrap().shape(), (4, 2));
    }

    #[test]
    fn dominant_directions_of_diagonal_matrix() {
        let u = DMatrix::from_row_slice(3, 2, &[0.0, 0.5, 3.0, 0.0, 0.0, 0.0]);
        let l = top_subspace(&u, 1).unwrap();
        assert!((l[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }
}
