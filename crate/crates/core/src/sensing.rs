//! Gaussian sensing ensembles, the measurement map and its adjoint, and a
//! sampling estimator for restricted-isometry constants.
//!
//! The map sends a symmetric `n x n` matrix `Z` to the vector with entries
//! `(1/sqrt(m)) <A_i, Z>`; the adjoint sends `y` to `(1/sqrt(m)) sum_i y_i A_i`.
//!
//! Storage is one dense `n(n+1)/2 x m` matrix whose `i`-th column packs the
//! upper triangle of `A_i` column by column.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{derive_seed, gaussian_matrix, rng_from_seed, standard_normal};

/// Relative asymmetry tolerated on inputs to [`SensingOperator::apply`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Number of measurements handled per parallel task.
const MEASUREMENT_CHUNK: usize = 32;
/// Number of output rows handled per parallel task in the adjoint.
const ROW_CHUNK: usize = 256;

/// Distribution of the measurement matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// `A = (G + G^T) / 2` with `G` iid standard normal: diagonal variance 1,
    /// off-diagonal variance 1/2, so `Var <A, Z> = ||Z||_F^2` for symmetric `Z`.
    #[default]
    Symmetrized,
    /// Off-diagonal entries `N(0, 1)`, diagonal entries with standard
    /// deviation `1/sqrt(2)`. Not isotropic; kept for comparison.
    Footnote,
}

#[derive(Debug, Clone)]
pub struct SensingOperator {
    n: usize,
    m: usize,
    seed: u64,
    ensemble: Ensemble,
    /// Column `i` holds the packed upper triangle of `A_i`.
    data: DMatrix<f64>,
    scale: f64,
}

/// Sampled lower bound on the restricted-isometry constant of a given rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub rank: usize,
    pub trials: usize,
    /// Largest observed `| ||A(Z)||^2 - 1 |` over unit-Frobenius samples.
    pub delta_lower: f64,
    /// Seed the estimator was run with.
    pub seed: u64,
    /// Seed of the single trial attaining `delta_lower`.
    pub worst_case_sample_seed: u64,
}

impl SensingOperator {
    /// Draws `m` symmetric `n x n` measurement matrices.
    pub fn gaussian(n: usize, m: usize, seed: u64) -> Result<Self> {
        Self::with_ensemble(n, m, seed, Ensemble::Symmetrized)
    }

    pub fn with_ensemble(n: usize, m: usize, seed: u64, ensemble: Ensemble) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "sensing operator needs n >= 1 and m >= 1 (got n = {n}, m = {m})"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut data = DMatrix::zeros(packed_len(n), m);
        for i in 0..m {
            let a = match ensemble {
                Ensemble::Symmetrized => {
                    let g = gaussian_matrix(n, n, 1.0, &mut rng);
                    (&g + g.transpose()) * 0.5
                }
                Ensemble::Footnote => {
                    let mut a = DMatrix::zeros(n, n);
                    for j in 0..n {
                        a[(j, j)] = standard_normal(&mut rng) * std::f64::consts::FRAC_1_SQRT_2;
                        for k in (j + 1)..n {
                            let v = standard_normal(&mut rng);
                            a[(j, k)] = v;
                            a[(k, j)] = v;
                        }
                    }
                    a
                }
            };
            pack_into(&a, data.column_mut(i).as_mut_slice());
        }
        Ok(Self::from_parts(n, m, seed, ensemble, data))
    }

    /// Builds an operator from explicit measurement matrices. Each matrix
    /// must be exactly symmetric.
    pub fn from_matrices(matrices: &[DMatrix<f64>]) -> Result<Self> {
        let m = matrices.len();
        if m == 0 {
            return Err(Error::InvalidArgument("need at least one measurement matrix".into()));
        }
        let n = matrices[0].nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("measurement matrices must be non-empty".into()));
        }
        let mut data = DMatrix::zeros(packed_len(n), m);
        for (i, a) in matrices.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::dims("measurement matrix", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
            }
            if a != &a.transpose() {
                return Err(Error::NotSymmetric { asymmetry: linalg::asymmetry(a), tolerance: 0.0 });
            }
            if !linalg::is_finite(a) {
                return Err(Error::InvalidArgument(format!("measurement matrix {i} has non-finite entries")));
            }
            pack_into(a, data.column_mut(i).as_mut_slice());
        }
        Ok(Self::from_parts(n, m, 0, Ensemble::Symmetrized, data))
    }

    fn from_parts(n: usize, m: usize, seed: u64, ensemble: Ensemble, data: DMatrix<f64>) -> Self {
        Self { n, m, seed, ensemble, data, scale: 1.0 / (m as f64).sqrt() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    /// Copy of the `i`-th measurement matrix.
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        unpack(self.n, self.data.column(i).as_slice())
    }

    /// `[A(Z)]_i = (1/sqrt(m)) Tr(A_i Z)`.
    ///
    /// `Z` must be symmetric up to a relative Frobenius asymmetry of
    /// [`SYMMETRY_TOL`]; it is symmetrized before use.
    pub fn apply(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_square(z)?;
        let asym = linalg::asymmetry(z);
        if asym > SYMMETRY_TOL || !asym.is_finite() {
            return Err(Error::NotSymmetric { asymmetry: asym, tolerance: SYMMETRY_TOL });
        }
        Ok(self.apply_unchecked(&linalg::symmetrize(z)))
    }

    /// Measurement map without shape or symmetry validation. Since every
    /// `A_i` is symmetric this equals the map applied to the symmetric part
    /// of `z`.
    pub(crate) fn apply_unchecked(&self, z: &DMatrix<f64>) -> DVector<f64> {
        // Off-diagonal entries appear twice in the trace inner product.
        let mut weighted = Vec::with_capacity(packed_len(self.n));
        for j in 0..self.n {
            for i in 0..j {
                weighted.push(z[(i, j)] + z[(j, i)]);
            }
            weighted.push(z[(j, j)]);
        }
        let zcol = DVector::from_vec(weighted);
        let mut out = DVector::zeros(self.m);
        out.as_mut_slice()
            .par_chunks_mut(MEASUREMENT_CHUNK)
            .enumerate()
            .for_each(|(chunk, dst)| {
                let start = chunk * MEASUREMENT_CHUNK;
                for (k, slot) in dst.iter_mut().enumerate() {
                    *slot = self.scale * self.data.column(start + k).dot(&zcol);
                }
            });
        out
    }

    /// `A*(y) = (1/sqrt(m)) sum_i y_i A_i`, exactly symmetric.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        if y.len() != self.m {
            return Err(Error::dims("measurement vector", self.m, y.len()));
        }
        Ok(self.adjoint_unchecked(y))
    }

    /// Each output entry is accumulated over `i = 0..m` in order, whatever
    /// the row partition, so the result does not depend on the thread count.
    pub(crate) fn adjoint_unchecked(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let p = packed_len(self.n);
        let data = self.data.as_slice();
        let mut out = vec![0.0; p];
        out.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(chunk, dst)| {
            let start = chunk * ROW_CHUNK;
            let len = dst.len();
            for (i, &yi) in y.iter().enumerate() {
                if yi == 0.0 {
                    continue;
                }
                let col = &data[i * p + start..i * p + start + len];
                for (d, a) in dst.iter_mut().zip(col) {
                    *d += yi * a;
                }
            }
        });
        for v in &mut out {
            *v *= self.scale;
        }
        unpack(self.n, &out)
    }

    /// `A*(A(Z))`.
    pub fn normal_map(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let y = self.apply(z)?;
        Ok(self.adjoint_unchecked(&y))
    }

    /// Spectral norm of `Z - A*(A(Z))`.
    pub fn spectral_deviation(&self, z: &DMatrix<f64>) -> Result<f64> {
        let residual = self.deviation_residual(z)?;
        Ok(linalg::sym_spectral_norm(&residual))
    }

    /// `Z - A*(A(Z))`, the symmetric matrix whose norm is the deviation.
    pub fn deviation_residual(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let az = self.normal_map(z)?;
        Ok(linalg::symmetrize(z) - az)
    }

    /// Sampling lower bound on the rank-`rank` RIP constant.
    ///
    /// Trial `k` draws `Z = G G^T - H H^T` with `G` of width `ceil(rank/2)`
    /// and `H` of width `floor(rank/2)` (so `rank(Z) <= rank`), normalizes it
    /// to unit Frobenius norm and records `| ||A(Z)||^2 - 1 |`.
    pub fn estimate_rip(&self, rank: usize, trials: usize, seed: u64) -> Result<RipEstimate> {
        if rank == 0 || rank > self.n {
            return Err(Error::InvalidArgument(format!(
                "RIP rank must satisfy 1 <= rank <= n = {} (got {rank})",
                self.n
            )));
        }
        if trials == 0 {
            return Err(Error::InvalidArgument("RIP estimate needs at least one trial".into()));
        }
        let mut best = (f64::NEG_INFINITY, 0_u64);
        for k in 0..trials {
            let trial_seed = derive_seed(seed, k as u64);
            let value = self.rip_trial(rank, trial_seed);
            if value > best.0 {
                best = (value, trial_seed);
            }
        }
        Ok(RipEstimate {
            rank,
            trials,
            delta_lower: best.0.max(0.0),
            seed,
            worst_case_sample_seed: best.1,
        })
    }

    /// Distortion of a single trial; `estimate_rip` reports the maximum.
    pub fn rip_trial(&self, rank: usize, trial_seed: u64) -> f64 {
        let z = rip_sample(self.n, rank, trial_seed);
        let az = self.apply_unchecked(&z);
        (az.norm_squared() - 1.0).abs()
    }

    fn check_square(&self, z: &DMatrix<f64>) -> Result<()> {
        if z.shape() != (self.n, self.n) {
            return Err(Error::dims(
                "symmetric input",
                format!("{0}x{0}", self.n),
                format!("{}x{}", z.nrows(), z.ncols()),
            ));
        }
        Ok(())
    }
}

fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Upper triangle, column by column.
fn pack_into(a: &DMatrix<f64>, dst: &mut [f64]) {
    let mut k = 0;
    for j in 0..a.ncols() {
        for i in 0..=j {
            dst[k] = a[(i, j)];
            k += 1;
        }
    }
}

fn unpack(n: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            a[(i, j)] = packed[k];
            a[(j, i)] = packed[k];
            k += 1;
        }
    }
    a
}

/// Unit-Frobenius symmetric test matrix of rank at most `rank`.
pub fn rip_sample(n: usize, rank: usize, trial_seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(trial_seed);
    let pos = rank.div_ceil(2);
    let neg = rank / 2;
    let g = gaussian_matrix(n, pos, 1.0, &mut rng);
    let h = gaussian_matrix(n, neg, 1.0, &mut rng);
    let mut z = &g * g.transpose() - &h * h.transpose();
    z = linalg::symmetrize(&z);
    let norm = z.norm();
    if norm > 0.0 {
        z /= norm;
    }
    z
}
