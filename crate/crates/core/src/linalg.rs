//! Dense linear-algebra helpers. Matrices are `nalgebra` types; singular
//! value and symmetric eigen decompositions are computed with `faer`.
//!
//! Decompositions here are post-processed into a canonical form: values
//! sorted in descending order (stable), and every eigen/singular vector
//! flipped so that its first significant component is positive. Singular
//! vector pairs are flipped together so `U diag(s) V^T` is preserved.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a component is "nonzero"
/// for the sign convention.
const SIGN_TOL: f64 = 1e-8;

/// Thin singular value decomposition in canonical form.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k` left singular vectors, `k = min(rows, cols)`.
    pub u: DMatrix<f64>,
    /// Descending singular values.
    pub s: Vec<f64>,
    /// `cols x k` right singular vectors (not transposed).
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn sigma(&self, i: usize) -> f64 {
        self.s.get(i).copied().unwrap_or(0.0)
    }

    pub fn spectral_norm(&self) -> f64 {
        self.sigma(0)
    }
}

/// Symmetric eigendecomposition in canonical form.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Columns are unit eigenvectors ordered like `values`.
    pub vectors: DMatrix<f64>,
}

fn first_significant_sign(col: &[f64]) -> f64 {
    let scale = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 1.0;
    }
    col.iter()
        .find(|x| x.abs() > SIGN_TOL * scale)
        .map_or(1.0, |x| x.signum())
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD. Non-finite input yields NaN factors.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let Ok(raw) = to_faer(a).thin_svd() else {
        return Svd {
            u: DMatrix::from_element(rows, k, f64::NAN),
            s: vec![f64::NAN; k],
            v: DMatrix::from_element(cols, k, f64::NAN),
        };
    };
    let (u_raw, s_raw, v_raw) = (raw.U(), raw.S(), raw.V());
    let values: Vec<f64> = (0..k).map(|i| s_raw[i]).collect();
    let order = descending_order(&values);
    let mut u = DMatrix::zeros(rows, k);
    let mut v = DMatrix::zeros(cols, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let ucol: Vec<f64> = (0..rows).map(|i| u_raw[(i, src)]).collect();
        let sign = first_significant_sign(&ucol);
        for (i, x) in ucol.iter().enumerate() {
            u[(i, dst)] = x * sign;
        }
        for i in 0..cols {
            v[(i, dst)] = v_raw[(i, src)] * sign;
        }
        s.push(values[src].max(0.0));
    }
    Svd { u, s, v }
}

/// Descending singular values; NaN for non-finite input.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = match to_faer(a).singular_values() {
        Ok(s) => s.into_iter().map(|x| x.max(0.0)).collect(),
        Err(_) => return vec![f64::NAN; k],
    };
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Uses the lower triangle of `a`.
pub fn sym_eigen(a: &DMatrix<f64>) -> SymEigen {
    let n = a.nrows();
    let Ok(raw) = to_faer(a).self_adjoint_eigen(Side::Lower) else {
        return SymEigen { values: vec![f64::NAN; n], vectors: DMatrix::from_element(n, n, f64::NAN) };
    };
    let (vec_raw, val_raw) = (raw.U(), raw.S());
    let eig: Vec<f64> = (0..n).map(|i| val_raw[i]).collect();
    let order = descending_order(&eig);
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| vec_raw[(i, src)]).collect();
        let sign = first_significant_sign(&col);
        for (i, x) in col.iter().enumerate() {
            vectors[(i, dst)] = x * sign;
        }
        values.push(eig[src]);
    }
    SymEigen { values, vectors }
}

/// Spectral norm of a symmetric matrix, `max |lambda_i|`.
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    match to_faer(a).self_adjoint_eigenvalues(Side::Lower) {
        Ok(vals) => vals.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        Err(_) => f64::NAN,
    }
}

/// Orthonormal `r x (r - k)` basis of the orthogonal complement of the
/// column span of an orthonormal `r x k` matrix, taken from the leading
/// singular vectors of `I - B B^T`.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, k) = basis.shape();
    if k >= r {
        return DMatrix::zeros(r, 0);
    }
    let projector = DMatrix::identity(r, r) - basis * basis.transpose();
    let dec = svd(&projector);
    dec.u.columns(0, r - k).into_owned()
}

/// Haar-distributed `n x k` matrix with orthonormal columns (QR of a
/// Gaussian matrix with the `diag(R) > 0` sign fix).
pub fn random_orthonormal(n: usize, k: usize, rng: &mut crate::rng::SeededRng) -> DMatrix<f64> {
    assert!(k <= n, "random_orthonormal needs k <= n");
    let g = crate::rng::gaussian_matrix(n, k, 1.0, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Largest entrywise deviation of `V^T V` from the identity.
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let k = v.ncols();
    let gram = v.transpose() * v;
    (gram - DMatrix::<f64>::identity(k, k)).amax()
}

pub fn check_orthonormal(v: &DMatrix<f64>, tol: f64) -> Result<()> {
    let defect = orthonormality_defect(v);
    if defect > tol || !defect.is_finite() {
        return Err(Error::NotOrthonormal(defect));
    }
    Ok(())
}

/// Relative asymmetry `||A - A^T||_F / ||A||_F` (0 for the zero matrix).
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn is_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Frobenius inner product of two equally shaped matrices.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

pub fn vector_from(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}
