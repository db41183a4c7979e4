//! Accelerated primal-dual gradient method on the saddle reformulation
//!
//! ```text
//! min_x max_y  F(x) + <y, A x>,    A = [B; gamma W]
//! ```
//!
//! using only primal gradient calls. Each iteration runs the eleven-line
//! loop
//!
//! ```text
//! y_m  = y^k + theta_m (y^k - y^{k-1})
//! x_g  = tau_x x^k + (1 - tau_x) x_f^k
//! y_g  = tau_y y^k + (1 - tau_y) y_f^k
//! x^{k+1} = x^k + eta_x alpha_x (x_g - x^k) - eta_x beta_x A^T A x^k
//!           - eta_x (grad F(x_g) + A^T y_m)
//! y^{k+1} = y^k - eta_y beta_y A (A^T y^k + grad F(x_g)) + eta_y A x^{k+1}
//! x_f^{k+1} = x_g + sigma_x (x^{k+1} - x^k)
//! y_f^{k+1} = y_g + sigma_y (y^{k+1} - y^k)
//! ```
//!
//! with one gradient evaluation per iteration (`grad F(x_g)` is reused).
//! Zero initialization keeps `x` in `range(A^T)` and `y` in `range(A)`,
//! where the convergence constants are valid. Metrics are recorded on the
//! averaged sequence `x_f`.
//!
//! The default parameter schedule is expressed solely through `mu`, `L`,
//! `lambda_max(A^T A)` and `lambda_min_plus(A^T A)`; see
//! [`apdg_default_params`] for the exact formulas. [`apdg_run_auto`] wraps
//! the run in a conservative fallback that halves both step sizes and
//! retries when the divergence guard trips.

use crate::block::BlockVector;
use crate::context::RunContext;
use crate::problem::{ConstraintOperator, DualPair, ProblemInstance};
use crate::spectral::SpectralBounds;
use crate::trace::{MetricRecorder, Reference, SolverKind, SolverTrace, Termination};

use super::{diverged, SolverError, StopCriterion};

/// Step sizes and averaging weights of the primal-dual loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApdgParams {
    pub eta_x: f64,
    pub eta_y: f64,
    pub alpha_x: f64,
    pub beta_x: f64,
    pub beta_y: f64,
    pub tau_x: f64,
    pub tau_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub theta_m: f64,
}

impl ApdgParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("eta_x", self.eta_x),
            ("eta_y", self.eta_y),
            ("alpha_x", self.alpha_x),
            ("beta_x", self.beta_x),
            ("beta_y", self.beta_y),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::BadParams(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("tau_x", self.tau_x),
            ("tau_y", self.tau_y),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(SolverError::BadParams(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if !(self.theta_m > 0.0 && self.theta_m < 1.0) {
            return Err(SolverError::BadParams(format!(
                "theta_m must be in (0, 1), got {}",
                self.theta_m
            )));
        }
        Ok(())
    }

    /// Both step sizes scaled by `s` (the divergence fallback).
    pub fn scaled_steps(&self, s: f64) -> Self {
        Self { eta_x: self.eta_x * s, eta_y: self.eta_y * s, ..*self }
    }
}

/// Default schedule from the objective constants and the spectrum of
/// `A^T A`.
///
/// With `kappa = L / mu` and `chi = lambda_max / lambda_min_plus`, the
/// target per-iteration contraction is
///
/// ```text
/// rho = min( 1 / (4 sqrt(kappa chi)), 1 / (4 chi) )
/// ```
///
/// and the parameters are
///
/// ```text
/// theta_m = 1 - rho                     sigma_x = min(1, 2 rho sqrt(chi))
/// tau_x   = min(1, 4 rho)               sigma_y = min(1, 2 rho sqrt(chi))
/// tau_y   = min(1, 4 rho)
/// alpha_x = mu                          eta_x   = 1 / (4 tau_x L)
/// beta_x  = tau_x L / (2 lambda_max)    eta_y   = mu / (4 lambda_max)
/// beta_y  = 1 / (2 mu)
/// ```
///
/// These reproduce Nesterov-type behavior in each block (`tau ~ rho`, big
/// primal steps `eta_x ~ 1/(tau_x L)`) while keeping every operator factor
/// a contraction (`eta_x beta_x lambda_max <= 1/8`,
/// `eta_y beta_y lambda_max = 1/8`).
pub fn apdg_params_for(mu: f64, l_smooth: f64, ata: &SpectralBounds) -> ApdgParams {
    let kappa = l_smooth / mu;
    let chi = ata.chi();
    let rho = (0.25 / (kappa * chi).sqrt()).min(0.25 / chi);
    let tau_x = (4.0 * rho).min(1.0);
    let tau_y = (4.0 * rho).min(1.0);
    let sigma = (2.0 * rho * chi.sqrt()).min(1.0);
    ApdgParams {
        eta_x: 1.0 / (4.0 * tau_x * l_smooth),
        eta_y: mu / (4.0 * ata.lambda_max),
        alpha_x: mu,
        beta_x: tau_x * l_smooth / (2.0 * ata.lambda_max),
        beta_y: 1.0 / (2.0 * mu),
        tau_x,
        tau_y,
        sigma_x: sigma,
        sigma_y: sigma,
        theta_m: 1.0 - rho,
    }
}

/// Default schedule for an instance, matching the operator form that will
/// actually run (the Chebyshev substitution changes the spectrum).
pub fn apdg_default_params(inst: &ProblemInstance, cheby: bool) -> ApdgParams {
    let bounds = if cheby {
        ConstraintOperator::chebyshev(inst).ata_bounds()
    } else {
        inst.ata_bounds()
    };
    apdg_params_for(inst.mu(), inst.l_smooth(), &bounds)
}

/// Run from the zero initial point (which lies in `range(A^T)`).
pub fn apdg_run(
    inst: &ProblemInstance,
    reference: &Reference,
    params: &ApdgParams,
    stop: &StopCriterion,
    cheby: bool,
) -> Result<SolverTrace, SolverError> {
    let x0 = BlockVector::zeros(inst.m(), inst.d());
    apdg_run_from(inst, reference, params, stop, cheby, x0)
}

/// Run from an explicit initial primal point.
pub fn apdg_run_from(
    inst: &ProblemInstance,
    reference: &Reference,
    params: &ApdgParams,
    stop: &StopCriterion,
    cheby: bool,
    x0: BlockVector,
) -> Result<SolverTrace, SolverError> {
    params.validate()?;
    stop.validate()?;
    let op = if cheby {
        ConstraintOperator::chebyshev(inst)
    } else {
        ConstraintOperator::plain(inst)
    };
    let ctx = RunContext::new();
    let mut rec = MetricRecorder::new(inst, reference);

    let (m, d) = (inst.m(), inst.d());
    let pu = op.dual_block_dim();
    let mut x = x0;
    let mut x_f = x.clone();
    let mut y = DualPair::zeros(m, pu, d);
    let mut y_prev = y.clone();
    let mut y_f = y.clone();

    let p = *params;
    let termination = loop {
        let k = rec.len() as u64;
        let metrics = rec.record(k, &x_f);
        if diverged(&metrics) {
            break Termination::Diverged;
        }
        // The zero start is feasible by construction, so threshold checks
        // only engage once the iterates have moved.
        if k >= 1 && stop.met_by(&metrics) {
            break Termination::Converged;
        }
        if k >= stop.max_iters {
            break Termination::MaxIters;
        }

        let y_m = DualPair::combine(1.0 + p.theta_m, &y, -p.theta_m, &y_prev);
        let x_g = BlockVector::combine(p.tau_x, &x, 1.0 - p.tau_x, &x_f);
        let y_g = DualPair::combine(p.tau_y, &y, 1.0 - p.tau_y, &y_f);

        let grad = inst.grad_f(&x_g, &ctx)?;
        let ata_x = op.apply_ata(&x, &ctx);
        let at_ym = op.apply_at(&y_m, &ctx);

        let mut x_next = x.clone();
        let exa = p.eta_x * p.alpha_x;
        let exb = p.eta_x * p.beta_x;
        for i in 0..x_next.len() {
            x_next[i] += exa * (x_g[i] - x[i]) - exb * ata_x[i] - p.eta_x * (grad[i] + at_ym[i]);
        }

        let at_y = op.apply_at(&y, &ctx);
        let mut inner = at_y;
        inner.axpy(1.0, &grad);
        let a_inner = op.apply_a(&inner, &ctx);
        let a_xnext = op.apply_a(&x_next, &ctx);

        let eyb = p.eta_y * p.beta_y;
        let mut y_next = y.clone();
        y_next.axpy(-eyb, &a_inner);
        y_next.axpy(p.eta_y, &a_xnext);

        let mut x_f_next = x_g;
        x_f_next.axpy(p.sigma_x, &x_next);
        x_f_next.axpy(-p.sigma_x, &x);
        let mut y_f_next = y_g;
        y_f_next.axpy(p.sigma_y, &y_next);
        y_f_next.axpy(-p.sigma_y, &y);

        y_prev = std::mem::replace(&mut y, y_next);
        x = x_next;
        x_f = x_f_next;
        y_f = y_f_next;
    };

    Ok(SolverTrace {
        solver: SolverKind::Apdg,
        rows: rec.rows(),
        counters: ctx.snapshot(),
        termination,
    })
}

/// Run with the default schedule, halving both step sizes and retrying if
/// the divergence guard trips. Returns the trace and the step scale used.
pub fn apdg_run_auto(
    inst: &ProblemInstance,
    reference: &Reference,
    stop: &StopCriterion,
    cheby: bool,
) -> Result<(SolverTrace, f64), SolverError> {
    let base = apdg_default_params(inst, cheby);
    let mut scale = 1.0;
    for _ in 0..4 {
        let trace = apdg_run(inst, reference, &base.scaled_steps(scale), stop, cheby)?;
        if trace.termination != Termination::Diverged {
            return Ok((trace, scale));
        }
        scale *= 0.5;
    }
    let trace = apdg_run(inst, reference, &base.scaled_steps(scale), stop, cheby)?;
    Ok((trace, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Graph;
    use crate::problem::{reduce, GammaChoice, QuadraticLocalObjective};
    use crate::spectral::Matrix;
    use approx::assert_relative_eq;

    #[test]
    fn default_params_respect_ranges() {
        // kappa = 1, chi = 1 is the best-conditioned corner.
        let bounds = SpectralBounds { lambda_max: 2.0, lambda_min_plus: 2.0, rank: 1 };
        let p = apdg_params_for(1.0, 1.0, &bounds);
        p.validate().unwrap();

        let bounds = SpectralBounds { lambda_max: 500.0, lambda_min_plus: 0.01, rank: 7 };
        let p = apdg_params_for(0.05, 900.0, &bounds);
        p.validate().unwrap();
    }

    #[test]
    fn default_params_step_homogeneity() {
        // Scaling every f_i by c and A by sqrt(c) leaves kappa and chi
        // unchanged, so eta_x scales by 1/c and the dimensionless weights
        // are untouched.
        let bounds = SpectralBounds { lambda_max: 80.0, lambda_min_plus: 0.4, rank: 11 };
        let p1 = apdg_params_for(0.3, 21.0, &bounds);
        let c = 7.5;
        let scaled = SpectralBounds {
            lambda_max: c * bounds.lambda_max,
            lambda_min_plus: c * bounds.lambda_min_plus,
            rank: bounds.rank,
        };
        let p2 = apdg_params_for(c * 0.3, c * 21.0, &scaled);
        assert_relative_eq!(p2.eta_x, p1.eta_x / c, max_relative = 1e-12);
        assert_relative_eq!(p2.tau_x, p1.tau_x, max_relative = 1e-12);
        assert_relative_eq!(p2.tau_y, p1.tau_y, max_relative = 1e-12);
        assert_relative_eq!(p2.sigma_x, p1.sigma_x, max_relative = 1e-12);
        assert_relative_eq!(p2.theta_m, p1.theta_m, max_relative = 1e-12);
        assert_relative_eq!(p2.alpha_x, c * p1.alpha_x, max_relative = 1e-12);
    }

    #[test]
    fn hand_stepped_degenerate_single_node() {
        // One node, d = 1, C = 1, d = 0, theta = 1, B = 0 and W = 0: every
        // A-term vanishes and the update collapses to a plain gradient step
        // x^1 = x^0 - eta_x grad f(x_g^0) with x_g^0 = x^0 (since x_f = x),
        // so from x^0 = 1: x^1 = 1 - 2 eta_x.
        let o = QuadraticLocalObjective::new(Matrix::identity(1, 1), nalgebra::dvector![0.0], 1.0)
            .unwrap();
        let graph = Graph::new(1, vec![]).unwrap();
        let inst = ProblemInstance::new(vec![o], Matrix::zeros(1, 1), &graph, GammaChoice::Explicit(1.0))
            .unwrap();
        let reduced = reduce(&inst).unwrap();
        let reference = Reference::new(&inst, &reduced);

        let params = ApdgParams {
            eta_x: 0.1,
            eta_y: 0.1,
            alpha_x: 1.0,
            beta_x: 0.1,
            beta_y: 0.1,
            tau_x: 0.5,
            tau_y: 0.5,
            sigma_x: 0.5,
            sigma_y: 0.5,
            theta_m: 0.5,
        };
        let stop = StopCriterion { eps_cons: None, eps_f: None, max_iters: 1 };
        let x0 = BlockVector::from_vec(1, 1, vec![1.0]);
        let trace = apdg_run_from(&inst, &reference, &params, &stop, false, x0).unwrap();

        // f_err at iteration 1 is f(x^1_f) with x^1_f = x_g + sigma_x (x^1 - x^0).
        // With x_g = x^0 = 1: x^1 = 1 - 2 * 0.1 = 0.8, x^1_f = 1 + 0.5 * (-0.2) = 0.9.
        // f(x) = x^2 (f* = 0), so the recorded error is 0.81.
        assert_eq!(trace.rows.len(), 2);
        assert_relative_eq!(trace.rows[1].f_err, 0.81, epsilon = 1e-12);
    }

    #[test]
    fn rejects_invalid_params() {
        let p = ApdgParams {
            eta_x: 0.0,
            eta_y: 1.0,
            alpha_x: 1.0,
            beta_x: 1.0,
            beta_y: 1.0,
            tau_x: 0.5,
            tau_y: 0.5,
            sigma_x: 0.5,
            sigma_y: 0.5,
            theta_m: 0.5,
        };
        assert!(p.validate().is_err());
        let p = ApdgParams { eta_x: 1.0, tau_x: 1.5, ..p };
        assert!(p.validate().is_err());
    }
}
