//! Per-iteration solver traces and metric evaluation.
//!
//! Every solver records, at each iteration, the function error against the
//! exact optimum and the constraint violations measured with the *original*
//! operators (Chebyshev substitution never changes what is measured).
//! Metric evaluation is observer-side: it never ticks the oracle meters.
//!
//! The function error is evaluated at the feasible projection of the
//! iterate (consensus mean, then projection onto `ker B`), so the exact
//! optimum is a true lower bound and the recorded value can only dip below
//! zero by rounding. Raw stacked objective values can undershoot the
//! constrained optimum while iterates are infeasible, which would make the
//! error useless for log plots.

use std::time::Instant;

use nalgebra::DVector;

use crate::block::BlockVector;
use crate::problem::{ExactSolution, ProblemInstance, ReducedInstance};
use crate::spectral::Matrix;

/// The three solvers under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Apdg,
    GloballyDual,
    LocallyDual,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] =
        [SolverKind::Apdg, SolverKind::GloballyDual, SolverKind::LocallyDual];

    /// Short name used in CLI flags and output file names.
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Apdg => "apdg",
            SolverKind::GloballyDual => "gdual",
            SolverKind::LocallyDual => "ldual",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "apdg" => Ok(SolverKind::Apdg),
            "gdual" | "globally-dual" | "globally_dual" => Ok(SolverKind::GloballyDual),
            "ldual" | "locally-dual" | "locally_dual" => Ok(SolverKind::LocallyDual),
            other => Err(format!("unknown solver '{other}' (expected apdg, gdual or ldual)")),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// A stopping threshold was met.
    Converged,
    /// The iteration budget ran out first.
    MaxIters,
    /// A recorded metric exceeded the divergence guard (or went non-finite).
    Diverged,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::Diverged => "diverged",
        }
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    /// `F` at the feasible projection of the iterate, minus `F*`.
    pub f_err: f64,
    /// `|A x|` with the original constraint operator.
    pub cons_viol: f64,
    /// `|B x|`.
    pub b_viol: f64,
    /// `|W x|`.
    pub w_viol: f64,
    /// Elapsed nanoseconds since the run started.
    pub wall_ns: u64,
}

/// Full record of one solver run.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub solver: SolverKind,
    pub rows: Vec<TraceRow>,
    pub counters: crate::context::CounterSnapshot,
    pub termination: Termination,
}

impl SolverTrace {
    /// Number of iterations performed (the last recorded iteration index).
    pub fn iterations(&self) -> u64 {
        self.rows.last().map(|r| r.iter).unwrap_or(0)
    }

    pub fn final_cons_viol(&self) -> f64 {
        self.rows.last().map(|r| r.cons_viol).unwrap_or(f64::NAN)
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn wall_seconds(&self) -> f64 {
        self.rows.last().map(|r| r.wall_ns as f64 * 1e-9).unwrap_or(0.0)
    }
}

/// Ground truth shared by all solvers on one instance.
#[derive(Debug, Clone)]
pub struct Reference {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    /// Orthonormal kernel basis of `B`, for the feasible projection.
    pub e_basis: Matrix,
}

impl Reference {
    pub fn new(inst: &ProblemInstance, reduced: &ReducedInstance) -> Self {
        let exact = crate::problem::exact_solution_reduced(inst, reduced);
        Self::from_parts(exact, reduced.e_basis().clone())
    }

    pub fn from_parts(exact: ExactSolution, e_basis: Matrix) -> Self {
        Self { x_star: exact.x_star, f_star: exact.f_star, e_basis }
    }
}

/// Metrics of one iterate, as recorded.
#[derive(Debug, Clone, Copy)]
pub struct IterateMetrics {
    pub f_err: f64,
    pub cons_viol: f64,
}

impl IterateMetrics {
    pub fn is_finite(&self) -> bool {
        self.f_err.is_finite() && self.cons_viol.is_finite()
    }
}

/// Collects rows for one run. Construction starts the wall clock.
pub struct MetricRecorder<'a> {
    inst: &'a ProblemInstance,
    reference: &'a Reference,
    start: Instant,
    rows: Vec<TraceRow>,
}

impl<'a> MetricRecorder<'a> {
    pub fn new(inst: &'a ProblemInstance, reference: &'a Reference) -> Self {
        Self { inst, reference, start: Instant::now(), rows: Vec::new() }
    }

    /// Record metrics of the stacked iterate `x` at iteration `iter`.
    pub fn record(&mut self, iter: u64, x: &BlockVector) -> IterateMetrics {
        let (cons_viol, b_viol, w_viol) = self.inst.violations(x);
        let f_err = self.feasible_f_err(x);
        self.rows.push(TraceRow {
            iter,
            f_err,
            cons_viol,
            b_viol,
            w_viol,
            wall_ns: self.start.elapsed().as_nanos() as u64,
        });
        IterateMetrics { f_err, cons_viol }
    }

    /// `F` at the feasible projection `E E^T mean(x_i)` minus `F*`.
    fn feasible_f_err(&self, x: &BlockVector) -> f64 {
        let mean = DVector::from_vec(x.block_mean());
        let e = &self.reference.e_basis;
        let t = e.transpose() * &mean;
        let feas = e * t;
        self.inst.f_value_shared(feas.as_slice()) - self.reference.f_star
    }

    pub fn rows(self) -> Vec<TraceRow> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
