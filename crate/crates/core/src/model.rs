//! Planted low-rank instances, the factorized objective and its gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::rng_from_seed;
use crate::sensing::SensingOperator;

/// Spectrum of the planted factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthKind {
    /// `X^T X = I`, so every singular value is 1.
    Orthonormal,
    /// Singular values geometric from 1 down to `1/kappa`.
    Conditioned { kappa: f64 },
}

impl Default for TruthKind {
    fn default() -> Self {
        TruthKind::Orthonormal
    }
}

/// The planted factor `X` (`n x r_star`) with its cached basis and spectrum.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    x: DMatrix<f64>,
    basis: DMatrix<f64>,
    sigmas: Vec<f64>,
    kappa: f64,
    kind: TruthKind,
    seed: u64,
    gram: DMatrix<f64>,
}

impl GroundTruth {
    pub fn generate(n: usize, r_star: usize, kind: TruthKind, seed: u64) -> Result<Self> {
        if r_star == 0 || r_star > n {
            return Err(Error::InvalidArgument(format!(
                "planted rank must satisfy 1 <= r_star <= n (got r_star = {r_star}, n = {n})"
            )));
        }
        let mut rng = rng_from_seed(seed);
        match kind {
            TruthKind::Orthonormal => {
                let x = linalg::random_orthonormal(n, r_star, &mut rng);
                Ok(Self::assemble(x.clone(), x, vec![1.0; r_star], kind, seed))
            }
            TruthKind::Conditioned { kappa } => {
                if !(kappa >= 1.0) || !kappa.is_finite() {
                    return Err(Error::InvalidArgument(format!("condition number must be >= 1 (got {kappa})")));
                }
                if r_star == 1 && kappa != 1.0 {
                    return Err(Error::InvalidArgument("a rank-1 truth always has kappa = 1".into()));
                }
                let sigmas = geometric_profile(r_star, kappa);
                let left = linalg::random_orthonormal(n, r_star, &mut rng);
                let right = linalg::random_orthonormal(r_star, r_star, &mut rng);
                let diag = DMatrix::from_diagonal(&DVector::from_vec(sigmas.clone()));
                let x = &left * diag * right.transpose();
                Ok(Self::assemble(x, left, sigmas, kind, seed))
            }
        }
    }

    /// Wraps an explicit full-column-rank factor.
    pub fn from_factor(x: DMatrix<f64>) -> Result<Self> {
        let (n, r_star) = x.shape();
        if r_star == 0 || r_star > n {
            return Err(Error::InvalidArgument(format!("factor must be n x r_star with 1 <= r_star <= n (got {n}x{r_star})")));
        }
        if !linalg::is_finite(&x) {
            return Err(Error::InvalidArgument("factor has non-finite entries".into()));
        }
        let dec = linalg::svd(&x);
        let top = dec.sigma(0);
        let bottom = dec.sigma(r_star - 1);
        if !(bottom > 1e-12 * top) {
            return Err(Error::InvalidArgument(format!(
                "factor is rank deficient (sigma_min / sigma_max = {:.3e})",
                bottom / top
            )));
        }
        let kind = TruthKind::Conditioned { kappa: top / bottom };
        Ok(Self::assemble(x, dec.u, dec.s, kind, 0))
    }

    fn assemble(x: DMatrix<f64>, basis: DMatrix<f64>, sigmas: Vec<f64>, kind: TruthKind, seed: u64) -> Self {
        let kappa = sigmas[0] / sigmas[sigmas.len() - 1];
        let gram = &x * x.transpose();
        Self { x, basis, sigmas, kappa, kind, seed, gram }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn r_star(&self) -> usize {
        self.x.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Orthonormal basis `V_X` of the column span of `X`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigmas[self.sigmas.len() - 1]
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kind(&self) -> TruthKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `X X^T`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

fn geometric_profile(r_star: usize, kappa: f64) -> Vec<f64> {
    if r_star == 1 {
        return vec![1.0];
    }
    let mut s: Vec<f64> = (0..r_star)
        .map(|i| kappa.powf(-(i as f64) / (r_star - 1) as f64))
        .collect();
    s[0] = 1.0;
    s[r_star - 1] = 1.0 / kappa;
    s
}

/// Measurements of a planted truth plus the cached spectral data of
/// `M = A*(A(X X^T))`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    truth: GroundTruth,
    op: SensingOperator,
    y: DVector<f64>,
    m_matrix: DMatrix<f64>,
    m_eigen: linalg::SymEigen,
    v_l: DMatrix<f64>,
    gram_fro: f64,
}

/// JSON-friendly description of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetadata {
    pub n: usize,
    pub m: usize,
    pub r_star: usize,
    pub operator_seed: u64,
    pub truth_seed: u64,
    pub truth: TruthKind,
    pub kappa: f64,
    pub sigmas: Vec<f64>,
    pub lambda_1: f64,
    pub lambda_rstar: f64,
    pub lambda_rstar_plus1: Option<f64>,
}

impl ProblemInstance {
    pub fn new(truth: GroundTruth, op: SensingOperator) -> Result<Self> {
        if truth.n() != op.n() {
            return Err(Error::dims("instance dimension", op.n(), truth.n()));
        }
        let y = op.apply_unchecked(truth.gram());
        let m_matrix = op.adjoint_unchecked(&y);
        let m_eigen = linalg::sym_eigen(&m_matrix);
        let v_l = m_eigen.vectors.columns(0, truth.r_star()).into_owned();
        let gram_fro = truth.gram().norm();
        Ok(Self { truth, op, y, m_matrix, m_eigen, v_l, gram_fro })
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn operator(&self) -> &SensingOperator {
        &self.op
    }

    pub fn n(&self) -> usize {
        self.truth.n()
    }

    pub fn r_star(&self) -> usize {
        self.truth.r_star()
    }

    pub fn measurements(&self) -> &DVector<f64> {
        &self.y
    }

    /// `M = A*(A(X X^T))`.
    pub fn m_matrix(&self) -> &DMatrix<f64> {
        &self.m_matrix
    }

    /// Descending eigenvalues of `M`.
    pub fn m_eigenvalues(&self) -> &[f64] {
        &self.m_eigen.values
    }

    /// Eigenvectors of `M`, columns ordered like [`Self::m_eigenvalues`].
    pub fn m_eigenvectors(&self) -> &DMatrix<f64> {
        &self.m_eigen.vectors
    }

    /// Leading `r_star` eigenvectors of `M` (the spectral-initialization
    /// subspace `L`). Only defined up to rotation if `lambda_{r*} = lambda_{r*+1}`.
    pub fn spectral_basis(&self) -> &DMatrix<f64> {
        &self.v_l
    }

    /// `||X X^T||_F`, the normalizer of the relative test error.
    pub fn gram_fro(&self) -> f64 {
        self.gram_fro
    }

    pub fn metadata(&self) -> InstanceMetadata {
        let eig = self.m_eigenvalues();
        let rs = self.r_star();
        InstanceMetadata {
            n: self.n(),
            m: self.op.m(),
            r_star: rs,
            operator_seed: self.op.seed(),
            truth_seed: self.truth.seed(),
            truth: self.truth.kind(),
            kappa: self.truth.kappa(),
            sigmas: self.truth.sigmas().to_vec(),
            lambda_1: eig[0],
            lambda_rstar: eig[rs - 1],
            lambda_rstar_plus1: eig.get(rs).copied(),
        }
    }

    fn check_factor(&self, u: &DMatrix<f64>) -> Result<()> {
        if u.nrows() != self.n() || u.ncols() == 0 {
            return Err(Error::dims("factor rows", self.n(), format!("{}x{}", u.nrows(), u.ncols())));
        }
        Ok(())
    }

    /// `y - A(U U^T)`.
    pub fn residual(&self, u: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_factor(u)?;
        Ok(self.residual_unchecked(u))
    }

    pub(crate) fn residual_unchecked(&self, u: &DMatrix<f64>) -> DVector<f64> {
        let uut = u * u.transpose();
        &self.y - self.op.apply_unchecked(&uut)
    }

    /// `f(U) = 1/4 ||A(U U^T - X X^T)||^2`.
    pub fn loss(&self, u: &DMatrix<f64>) -> Result<f64> {
        let r = self.residual(u)?;
        Ok(0.25 * r.norm_squared())
    }

    /// `grad f(U) = -[A*(y - A(U U^T))] U`.
    pub fn gradient(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let r = self.residual(u)?;
        let g = self.op.adjoint_unchecked(&r);
        Ok(-(g * u))
    }

    /// `||U U^T - X X^T||_F`.
    pub fn test_error(&self, u: &DMatrix<f64>) -> Result<f64> {
        self.check_factor(u)?;
        Ok((u * u.transpose() - self.truth.gram()).norm())
    }
}
