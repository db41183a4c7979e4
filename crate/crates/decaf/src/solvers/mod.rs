//! The three iterative solvers.
//!
//! * [`apdg::apdg_run`] — accelerated primal-dual gradient method on the
//!   saddle reformulation; one primal gradient per iteration.
//! * [`dual::globally_dual_run`] — accelerated gradient on the dual of the
//!   full constraint stack; one dual-oracle solve per iteration.
//! * [`dual::locally_dual_run`] — the constraint `B x = 0` eliminated per
//!   node through the nullspace basis, then accelerated gradient on the
//!   dual of the consensus-only problem.
//!
//! All three support Chebyshev acceleration of the constraint/consensus
//! operators and share the stopping and divergence conventions below.

pub mod apdg;
pub mod dual;

use thiserror::Error;

pub use apdg::{apdg_default_params, apdg_run, apdg_run_from, ApdgParams};
pub use dual::{accelerated_gradient, globally_dual_run, locally_dual_run, AcceleratedGradient};

use crate::trace::IterateMetrics;

/// Metrics above this are treated as divergence (parameter misconfiguration
/// rather than silent NaN propagation).
pub const DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver parameters: {0}")]
    BadParams(String),
    #[error("invalid stop criterion: {0}")]
    BadStop(String),
    #[error(transparent)]
    Problem(#[from] crate::problem::ProblemError),
}

/// Runtime stopping thresholds. At least one rule must be active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriterion {
    /// Stop when `|A x| < eps_cons`.
    pub eps_cons: Option<f64>,
    /// Stop when the recorded function error drops below `eps_f`
    /// (requires ground truth, which every run carries).
    pub eps_f: Option<f64>,
    /// Hard iteration budget.
    pub max_iters: u64,
}

impl StopCriterion {
    pub fn cons_threshold(eps_cons: f64, max_iters: u64) -> Self {
        Self { eps_cons: Some(eps_cons), eps_f: None, max_iters }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.eps_cons.is_none() && self.eps_f.is_none() && self.max_iters == 0 {
            return Err(SolverError::BadStop("no stopping rule is active".into()));
        }
        for (name, eps) in [("eps_cons", self.eps_cons), ("eps_f", self.eps_f)] {
            if let Some(e) = eps {
                if !(e > 0.0) {
                    return Err(SolverError::BadStop(format!("{name} must be positive, got {e}")));
                }
            }
        }
        Ok(())
    }

    pub fn met_by(&self, m: &IterateMetrics) -> bool {
        if let Some(eps) = self.eps_cons {
            if m.cons_viol < eps {
                return true;
            }
        }
        if let Some(eps) = self.eps_f {
            if m.f_err < eps {
                return true;
            }
        }
        false
    }
}

pub(crate) fn diverged(m: &IterateMetrics) -> bool {
    !m.is_finite() || m.cons_viol > DIVERGENCE_GUARD || m.f_err > DIVERGENCE_GUARD
}
