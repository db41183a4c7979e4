//! Linear operator abstraction.
//!
//! Solvers only ever *apply* the consensus and constraint operators, so they
//! are modeled as a trait over flat slices (a `BlockVector` dereferences to
//! one). Implementations tick the run context as they go: a gossip operator
//! counts a communication round, a constraint operator counts matrix
//! multiplications. Wrappers such as the Chebyshev polynomial inherit the
//! accounting of their base automatically.

use crate::context::RunContext;
use crate::spectral::Matrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OperatorError {
    #[error("dimension mismatch: operator expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A square linear map on flat vectors, with oracle accounting.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// Apply to `v`, ticking whatever meters the operator represents.
    /// Callers guarantee `v.len() == self.dim()`.
    fn apply(&self, v: &[f64], ctx: &RunContext) -> Vec<f64>;

    fn check_dim(&self, v: &[f64]) -> Result<(), OperatorError> {
        if v.len() != self.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Dense symmetric matrix as an operator. No meters; used for small dense
/// operators and in validation paths.
#[derive(Debug, Clone)]
pub struct DenseSymOperator {
    matrix: Matrix,
}

impl DenseSymOperator {
    pub fn new(matrix: Matrix) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator must be square");
        Self { matrix }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

impl LinearOperator for DenseSymOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, v: &[f64], _ctx: &RunContext) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim());
        let x = nalgebra::DVectorView::from_slice(v, v.len());
        (&self.matrix * x).data.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_operator_applies_matrix() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let op = DenseSymOperator::new(m);
        let ctx = RunContext::new();
        assert_eq!(op.apply(&[1.0, 1.0], &ctx), vec![3.0, 4.0]);
        assert!(op.check_dim(&[1.0]).is_err());
    }
}
