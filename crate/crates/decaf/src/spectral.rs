//! Dense spectral utilities: eigenvalue bounds, Kronecker-sum spectra, and
//! nullspace bases.
//!
//! Problem sizes in this crate are desk scale (a few hundred rows at most),
//! so everything uses dense symmetric eigendecompositions. Operators with
//! exact kernels in exact arithmetic (Laplacians, rank-deficient Gram
//! matrices) only have *numerical* kernels here, so all rank decisions go
//! through a relative zero threshold.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Default relative threshold below which eigenvalues count as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
const SYMMETRY_TOL: f64 = 1e-10;

/// Relative dip below zero tolerated before a matrix is rejected as not PSD.
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (max asymmetry {0:.3e} relative)")]
    NonSymmetric(f64),
    #[error("matrix is not positive semi-definite (min eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),
    #[error("matrix has a numerically zero spectrum")]
    AllZeroSpectrum,
    #[error("operand must have a nontrivial kernel (min singular value {0:.3e})")]
    HypothesisViolated(f64),
    #[error("matrix has full column rank; kernel is trivial")]
    TrivialKernel,
}

/// Extremal spectrum summary of a symmetric PSD operator.
///
/// `lambda_min_plus` is the smallest eigenvalue strictly above the zero
/// threshold, so `chi()` is the condition number restricted to the range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
    pub rank: usize,
}

impl SpectralBounds {
    pub fn chi(&self) -> f64 {
        self.lambda_max / self.lambda_min_plus
    }
}

fn check_symmetric(m: &Matrix) -> Result<(), SpectralError> {
    if m.nrows() != m.ncols() {
        return Err(SpectralError::NotSquare(m.nrows(), m.ncols()));
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok(());
    }
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(SpectralError::NonSymmetric(worst / scale));
    }
    Ok(())
}

/// Sorted eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut eigs: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

/// Extremal eigenvalue bounds of a symmetric PSD matrix.
///
/// Eigenvalues at or below `zero_tol_rel * lambda_max` are treated as exact
/// zeros; `lambda_min_plus` is the smallest eigenvalue above that threshold.
pub fn spectral_bounds(m: &Matrix, zero_tol_rel: f64) -> Result<SpectralBounds, SpectralError> {
    check_symmetric(m)?;
    let eigs = symmetric_eigenvalues(m);
    let lambda_max = *eigs.last().expect("empty matrix");
    if lambda_max <= 0.0 {
        if eigs[0] >= -f64::MIN_POSITIVE {
            return Err(SpectralError::AllZeroSpectrum);
        }
        return Err(SpectralError::NotPositiveSemidefinite(eigs[0]));
    }
    if eigs[0] < -PSD_TOL * lambda_max {
        return Err(SpectralError::NotPositiveSemidefinite(eigs[0]));
    }
    let tol = zero_tol_rel * lambda_max;
    let positive: Vec<f64> = eigs.iter().copied().filter(|&l| l > tol).collect();
    if positive.is_empty() {
        return Err(SpectralError::AllZeroSpectrum);
    }
    Ok(SpectralBounds {
        lambda_max,
        lambda_min_plus: positive[0],
        rank: positive.len(),
    })
}

/// Extremal singular values of `P (x) I + I (x) Q` without forming the
/// Kronecker matrices.
///
/// Both operands must be symmetric PSD with a nontrivial kernel; the
/// singular values of the sum are then exactly the pairwise sums of the
/// operands' singular values, which gives
/// `sigma_max = sigma_max(P) + sigma_max(Q)` and
/// `sigma_min_plus = min(sigma_min_plus(P), sigma_min_plus(Q))`.
pub fn kronecker_sum_bounds(p: &Matrix, q: &Matrix) -> Result<SpectralBounds, SpectralError> {
    let bp = psd_bounds_allowing_zero(p)?;
    let bq = psd_bounds_allowing_zero(q)?;
    let (np, nq) = (p.nrows(), q.nrows());
    for (b, n) in [(&bp, np), (&bq, nq)] {
        if b.rank == n {
            return Err(SpectralError::HypothesisViolated(b.lambda_min_plus));
        }
    }
    let lambda_min_plus = match (bp.rank, bq.rank) {
        (0, 0) => return Err(SpectralError::AllZeroSpectrum),
        (0, _) => bq.lambda_min_plus,
        (_, 0) => bp.lambda_min_plus,
        _ => bp.lambda_min_plus.min(bq.lambda_min_plus),
    };
    // A pair (i, j) is in the kernel of the sum iff both factors are.
    let rank = np * nq - (np - bp.rank) * (nq - bq.rank);
    Ok(SpectralBounds {
        lambda_max: bp.lambda_max + bq.lambda_max,
        lambda_min_plus,
        rank,
    })
}

/// Like `spectral_bounds` but a numerically zero matrix yields rank 0
/// instead of an error (a zero Kronecker summand is legitimate).
fn psd_bounds_allowing_zero(m: &Matrix) -> Result<SpectralBounds, SpectralError> {
    match spectral_bounds(m, DEFAULT_ZERO_TOL) {
        Ok(b) => Ok(b),
        Err(SpectralError::AllZeroSpectrum) => Ok(SpectralBounds {
            lambda_max: 0.0,
            lambda_min_plus: f64::INFINITY,
            rank: 0,
        }),
        Err(e) => Err(e),
    }
}

/// Orthonormal basis of `ker B` as columns of a `d x (d - rank B)` matrix.
///
/// Computed from the eigendecomposition of the Gram matrix `B^T B`; the
/// threshold is relative in Gram-eigenvalue space (eigenvalues at or below
/// `zero_tol_rel * sigma_max(B)^2` count as zero), since squaring leaves
/// only half the significant digits for a singular-value comparison.
/// Columns have their largest-magnitude entry positive so the result is
/// deterministic. The kernel must be nontrivial.
pub fn nullspace_basis(b: &Matrix, zero_tol_rel: f64) -> Result<Matrix, SpectralError> {
    let d = b.ncols();
    if b.iter().all(|&v| v == 0.0) {
        return Ok(Matrix::identity(d, d));
    }
    let gram = b.transpose() * b;
    let eig = SymmetricEigen::new(gram);
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l));
    let tol = zero_tol_rel * lambda_max;

    let mut kernel: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l <= tol)
        .map(|(idx, &l)| (l, idx))
        .collect();
    if kernel.is_empty() {
        return Err(SpectralError::TrivialKernel);
    }
    kernel.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut basis = Matrix::zeros(d, kernel.len());
    for (col, (_, idx)) in kernel.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(*idx).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if v[lead] < 0.0 {
            for e in &mut v {
                *e = -*e;
            }
        }
        basis.set_column(col, &nalgebra::DVector::from_vec(v));
    }
    Ok(basis)
}
