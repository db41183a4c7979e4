//! Problem model: quadratic local objectives, stacked constraint operators,
//! primal and dual oracles, and exact ground-truth solutions.
//!
//! The problem is `min_x sum_i f_i(x)` subject to `B x = 0`, distributed
//! over the nodes of a communication graph. Lifting to one copy of `x` per
//! node turns it into `min F(X) s.t. W X = 0, B X = 0` with block-diagonal
//! `B = I (x) B` and consensus operator `W = W (x) I`. Solvers couple the
//! two constraint families through the stacked operator `A = [B; gamma W]`,
//! whose spectrum follows from the factors by the Kronecker-sum rule.
//!
//! Objectives are the quadratic family `f_i(x) = |C_i x - d_i|^2 / 2 +
//! theta |x|^2 / 2`: strongly convex with a constant Hessian, which admits
//! an exact dual oracle (one Cholesky back-substitution per call) and an
//! exact constrained optimum through the nullspace reduction. The oracle
//! interface (gradient, dual argmin) is what the solvers consume, so other
//! smooth strongly convex families could slot in, but only quadratics ship.

use nalgebra::{Cholesky, DVector, DVectorView, Dyn, SymmetricEigen};

use crate::block::BlockVector;
use crate::chebyshev::{chebyshev_build, chebyshev_degree, chebyshev_scalar, ChebyshevOperator};
use crate::context::RunContext;
use crate::network::{Graph, GossipOperator, MixingMatrix};
use crate::operator::LinearOperator;
use crate::rng::Rng;
use crate::spectral::{
    nullspace_basis, spectral_bounds, symmetric_eigenvalues, Matrix, SpectralBounds,
    SpectralError, DEFAULT_ZERO_TOL,
};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("rank of B must satisfy 1 <= rank < d, got rank {rank} for d = {d}")]
    BadRank { rank: usize, d: usize },
    #[error("theta must be positive, got {0}")]
    BadTheta(f64),
    #[error("B has full column rank; the constraint set is {{0}}")]
    TrivialKernel,
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("optimal gamma is undefined for a zero constraint matrix; pass gamma explicitly")]
    OptimalGammaUndefined,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// `f(x) = |C x - d|^2 / 2 + theta |x|^2 / 2` with cached factorization.
#[derive(Debug, Clone)]
pub struct QuadraticLocalObjective {
    c: Matrix,
    d_vec: DVector<f64>,
    theta: f64,
    hessian: Matrix,
    chol: Cholesky<f64, Dyn>,
    /// `C^T d`, the constant part of the gradient.
    rhs0: DVector<f64>,
    lambda_min_ctc: f64,
    lambda_max_ctc: f64,
}

impl QuadraticLocalObjective {
    pub fn new(c: Matrix, d_vec: DVector<f64>, theta: f64) -> Result<Self, ProblemError> {
        if theta <= 0.0 {
            return Err(ProblemError::BadTheta(theta));
        }
        if c.nrows() != d_vec.len() {
            return Err(ProblemError::Dimension(format!(
                "C has {} rows but d has length {}",
                c.nrows(),
                d_vec.len()
            )));
        }
        let dim = c.ncols();
        let ctc = c.transpose() * &c;
        let eigs = symmetric_eigenvalues(&ctc);
        let lambda_min_ctc = eigs.first().copied().unwrap_or(0.0).max(0.0);
        let lambda_max_ctc = eigs.last().copied().unwrap_or(0.0).max(0.0);
        let hessian = &ctc + Matrix::identity(dim, dim) * theta;
        let chol = Cholesky::new(hessian.clone())
            .expect("C^T C + theta I is positive definite for theta > 0");
        let rhs0 = c.transpose() * &d_vec;
        Ok(Self { c, d_vec, theta, hessian, chol, rhs0, lambda_min_ctc, lambda_max_ctc })
    }

    pub fn dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn d_vec(&self) -> &DVector<f64> {
        &self.d_vec
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    /// Strong convexity constant `theta + lambda_min(C^T C)`.
    pub fn strong_convexity(&self) -> f64 {
        self.theta + self.lambda_min_ctc
    }

    /// Smoothness constant `theta + lambda_max(C^T C)`.
    pub fn smoothness(&self) -> f64 {
        self.theta + self.lambda_max_ctc
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let x = DVectorView::from_slice(x, self.dim());
        let r = &self.c * x - &self.d_vec;
        0.5 * r.norm_squared() + 0.5 * self.theta * x.norm_squared()
    }

    /// `grad f(x) = H x - C^T d`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let x = DVectorView::from_slice(x, self.dim());
        let g = &self.hessian * x - &self.rhs0;
        out.copy_from_slice(g.as_slice());
    }

    /// Solve `H x = C^T d + q` via the cached factorization.
    pub fn solve_shifted(&self, q: &[f64], out: &mut [f64]) {
        let q = DVectorView::from_slice(q, self.dim());
        let rhs = &self.rhs0 + q;
        let x = self.chol.solve(&rhs);
        out.copy_from_slice(x.as_slice());
    }

    /// Zero the data term (used to build fixed-point test instances).
    pub fn with_zero_data(&self) -> Self {
        let mut o = self.clone();
        o.d_vec.fill(0.0);
        o.rhs0.fill(0.0);
        o
    }
}

/// Stacked dual vector in `R^{m p} x R^{m d}`: one multiplier block per
/// constraint family.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPair {
    pub u: BlockVector,
    pub v: BlockVector,
}

impl DualPair {
    pub fn zeros(m: usize, p: usize, d: usize) -> Self {
        Self { u: BlockVector::zeros(m, p), v: BlockVector::zeros(m, d) }
    }

    pub fn axpy(&mut self, c: f64, other: &Self) {
        self.u.axpy(c, &other.u);
        self.v.axpy(c, &other.v);
    }

    pub fn combine(ca: f64, a: &Self, cb: f64, b: &Self) -> Self {
        Self {
            u: BlockVector::combine(ca, &a.u, cb, &b.u),
            v: BlockVector::combine(ca, &a.v, cb, &b.v),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.u.dot(&self.u) + self.v.dot(&self.v)).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.u.dot(&other.u) + self.v.dot(&other.v)
    }
}

/// How the coupling weight between the two constraint families is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    /// `gamma = sqrt(lambda_min_plus(B^T B)) / lambda_min_plus(W)`, which
    /// minimizes the condition number of `A^T A`.
    Optimal,
    Explicit(f64),
}

/// A full problem instance: `m` objectives, constraint matrix, graph, and
/// derived constants. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    objectives: Vec<QuadraticLocalObjective>,
    b: Matrix,
    btb: Matrix,
    btb_bounds: Option<SpectralBounds>,
    mixing: MixingMatrix,
    gamma: f64,
    mu: f64,
    l: f64,
    theta: f64,
    seed: Option<u64>,
}

impl ProblemInstance {
    pub fn new(
        objectives: Vec<QuadraticLocalObjective>,
        b: Matrix,
        graph: &Graph,
        gamma: GammaChoice,
    ) -> Result<Self, ProblemError> {
        assert!(!objectives.is_empty());
        let d = objectives[0].dim();
        if objectives.iter().any(|o| o.dim() != d) {
            return Err(ProblemError::Dimension("objectives disagree on dimension".into()));
        }
        if objectives.len() != graph.node_count() {
            return Err(ProblemError::Dimension(format!(
                "{} objectives for a graph on {} nodes",
                objectives.len(),
                graph.node_count()
            )));
        }
        if b.ncols() != d {
            return Err(ProblemError::Dimension(format!(
                "B has {} columns but the decision variable has dimension {}",
                b.ncols(),
                d
            )));
        }
        let btb = b.transpose() * &b;
        let btb_bounds = match spectral_bounds(&btb, DEFAULT_ZERO_TOL) {
            Ok(bounds) => {
                if bounds.rank == d {
                    return Err(ProblemError::TrivialKernel);
                }
                Some(bounds)
            }
            Err(SpectralError::AllZeroSpectrum) => None,
            Err(e) => return Err(e.into()),
        };
        let mixing = MixingMatrix::laplacian(graph);
        let gamma = match gamma {
            GammaChoice::Explicit(g) if g > 0.0 => g,
            GammaChoice::Explicit(g) => return Err(ProblemError::BadGamma(g)),
            GammaChoice::Optimal => match &btb_bounds {
                Some(bounds) => bounds.lambda_min_plus.sqrt() / mixing.bounds().lambda_min_plus,
                None => return Err(ProblemError::OptimalGammaUndefined),
            },
        };
        let mu = objectives.iter().map(|o| o.strong_convexity()).fold(f64::INFINITY, f64::min);
        let l = objectives.iter().map(|o| o.smoothness()).fold(0.0, f64::max);
        let theta = objectives[0].theta();
        Ok(Self { objectives, b, btb, btb_bounds, mixing, gamma, mu, l, theta, seed: None })
    }

    /// Random instance: square `C_i` with i.i.d. standard normal entries,
    /// standard normal `d_i`, and `B = U diag(s) V^T` with random orthogonal
    /// factors and `rank_b` singular values drawn uniformly from `[1, 2]`.
    ///
    /// Draw order (one generator seeded with `seed`): for each node, the
    /// entries of `C_i` row-major then `d_i`; then the singular values; then
    /// the Gaussian seeds of `U` and `V`.
    pub fn random(
        m: usize,
        d: usize,
        rank_b: usize,
        theta: f64,
        seed: u64,
        graph: &Graph,
    ) -> Result<Self, ProblemError> {
        if rank_b < 1 || rank_b >= d {
            return Err(ProblemError::BadRank { rank: rank_b, d });
        }
        if theta <= 0.0 {
            return Err(ProblemError::BadTheta(theta));
        }
        let mut rng = Rng::new(seed);
        let mut objectives = Vec::with_capacity(m);
        for _ in 0..m {
            // Entries drawn row-major so the stream layout is documented.
            let mut c = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    c[(i, j)] = rng.standard_normal();
                }
            }
            let d_vec = DVector::from_fn(d, |_, _| rng.standard_normal());
            objectives.push(QuadraticLocalObjective::new(c, d_vec, theta)?);
        }
        let mut singulars = vec![0.0; d];
        for s in singulars.iter_mut().take(rank_b) {
            *s = rng.uniform(1.0, 2.0);
        }
        let u = random_orthogonal(d, &mut rng);
        let v = random_orthogonal(d, &mut rng);
        let b = &u * Matrix::from_diagonal(&DVector::from_vec(singulars)) * v.transpose();
        let mut inst = Self::new(objectives, b, graph, GammaChoice::Optimal)?;
        inst.seed = Some(seed);
        Ok(inst)
    }

    /// Copy of this instance with all data vectors zeroed, so the optimum is
    /// the origin and zero-initialized solvers sit at a fixed point.
    pub fn with_zero_data(&self) -> Self {
        let mut inst = self.clone();
        inst.objectives = self.objectives.iter().map(|o| o.with_zero_data()).collect();
        inst
    }

    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    pub fn d(&self) -> usize {
        self.objectives[0].dim()
    }

    /// Number of rows of `B`.
    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub(crate) fn set_seed(&mut self, seed: Option<u64>) {
        self.seed = seed;
    }

    pub fn objectives(&self) -> &[QuadraticLocalObjective] {
        &self.objectives
    }

    pub fn b_matrix(&self) -> &Matrix {
        &self.b
    }

    pub fn btb(&self) -> &Matrix {
        &self.btb
    }

    /// `None` when `B` is numerically zero.
    pub fn btb_bounds(&self) -> Option<&SpectralBounds> {
        self.btb_bounds.as_ref()
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Strong convexity constant of every local objective (minimum over nodes).
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Smoothness constant of every local objective (maximum over nodes).
    pub fn l_smooth(&self) -> f64 {
        self.l
    }

    /// Bounds of `A^T A = I (x) B^T B + gamma^2 W^2 (x) I` by the
    /// Kronecker-sum rule applied to the cached factor spectra.
    pub fn ata_bounds(&self) -> SpectralBounds {
        let w = self.mixing.bounds();
        let gw_max = self.gamma * self.gamma * w.lambda_max * w.lambda_max;
        let gw_min = self.gamma * self.gamma * w.lambda_min_plus * w.lambda_min_plus;
        let (b_max, b_min, b_rank) = match &self.btb_bounds {
            Some(b) => (b.lambda_max, b.lambda_min_plus, b.rank),
            None => (0.0, f64::INFINITY, 0),
        };
        SpectralBounds {
            lambda_max: b_max + gw_max,
            lambda_min_plus: b_min.min(gw_min),
            rank: self.m() * self.d() - (self.d() - b_rank),
        }
    }

    /// Stacked objective value `F(X) = sum_i f_i(x_i)`.
    pub fn f_value(&self, x: &BlockVector) -> f64 {
        self.objectives.iter().zip(x.blocks()).map(|(o, b)| o.value(b)).sum()
    }

    /// Objective value at a single shared point.
    pub fn f_value_shared(&self, x: &[f64]) -> f64 {
        self.objectives.iter().map(|o| o.value(x)).sum()
    }

    /// Stacked gradient `col(grad f_1(x_1) ... grad f_m(x_m))`.
    /// One tick of the gradient meter per stacked call.
    pub fn grad_f(&self, x: &BlockVector, ctx: &RunContext) -> Result<BlockVector, ProblemError> {
        self.check_stacked(x)?;
        ctx.tick_gradient();
        let mut out = BlockVector::zeros(self.m(), self.d());
        for (i, o) in self.objectives.iter().enumerate() {
            o.gradient(x.block(i), out.block_mut(i));
        }
        Ok(out)
    }

    /// Dual oracle: per node solve `(C_i^T C_i + theta I) x_i = C_i^T d_i + q_i`,
    /// i.e. `x(q) = argmin_x [F(x) - <q, x>]`. One tick of the dual meter.
    pub fn dual_argmin(
        &self,
        q: &BlockVector,
        ctx: &RunContext,
    ) -> Result<BlockVector, ProblemError> {
        self.check_stacked(q)?;
        ctx.tick_dual();
        let mut out = BlockVector::zeros(self.m(), self.d());
        for (i, o) in self.objectives.iter().enumerate() {
            o.solve_shifted(q.block(i), out.block_mut(i));
        }
        Ok(out)
    }

    fn check_stacked(&self, x: &BlockVector) -> Result<(), ProblemError> {
        if x.m() != self.m() || x.block_dim() != self.d() {
            return Err(ProblemError::Dimension(format!(
                "expected {} blocks of dimension {}, got {} of {}",
                self.m(),
                self.d(),
                x.m(),
                x.block_dim()
            )));
        }
        Ok(())
    }

    /// Constraint violations of a stacked iterate, measured with the
    /// *original* operators regardless of any Chebyshev substitution:
    /// `(|A x|, |B x|, |W x|)`. Counter-free.
    pub fn violations(&self, x: &BlockVector) -> (f64, f64, f64) {
        let scratch = RunContext::new();
        let m = self.m();
        let mut b_sq = 0.0;
        for i in 0..m {
            let xi = DVectorView::from_slice(x.block(i), self.d());
            b_sq += (&self.b * xi).norm_squared();
        }
        let w = self
            .mixing
            .apply_gossip(x, &scratch)
            .expect("dimensions checked by caller");
        let w_sq = w.dot(&w);
        let cons = (b_sq + self.gamma * self.gamma * w_sq).sqrt();
        (cons, b_sq.sqrt(), w_sq.sqrt())
    }
}

fn random_orthogonal(n: usize, rng: &mut Rng) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.standard_normal());
    let (mut q, r) = g.qr().unpack();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// The coupling weight minimizing the condition number of `A^T A`, at which
/// `chi(A^T A) = chi(B^T B) + chi(W)^2`.
pub fn optimal_gamma(inst: &ProblemInstance) -> Result<f64, ProblemError> {
    match inst.btb_bounds() {
        Some(b) => Ok(b.lambda_min_plus.sqrt() / inst.mixing().bounds().lambda_min_plus),
        None => Err(ProblemError::OptimalGammaUndefined),
    }
}

/// Locally reduced instance: the constraint `B x = 0` eliminated through an
/// orthonormal kernel basis `E`, objectives composed as `h_i(t) = f_i(E t)`.
#[derive(Debug, Clone)]
pub struct ReducedInstance {
    e: Matrix,
    reduced_hessians: Vec<Matrix>,
    chol: Vec<Cholesky<f64, Dyn>>,
    /// `E^T C_i^T d_i`, the constant reduced gradient parts.
    rhs: Vec<DVector<f64>>,
    mu_t: f64,
    l_t: f64,
}

impl ReducedInstance {
    pub fn e_basis(&self) -> &Matrix {
        &self.e
    }

    pub fn reduced_dim(&self) -> usize {
        self.e.ncols()
    }

    pub fn mu_t(&self) -> f64 {
        self.mu_t
    }

    pub fn l_t(&self) -> f64 {
        self.l_t
    }

    pub fn reduced_hessians(&self) -> &[Matrix] {
        &self.reduced_hessians
    }

    /// Reduced dual oracle: per node solve `G_i t_i = E^T C_i^T d_i + q_i`.
    /// Ticks the dual meter.
    pub fn dual_argmin(&self, q: &BlockVector, ctx: &RunContext) -> BlockVector {
        ctx.tick_dual();
        let dt = self.reduced_dim();
        let mut out = BlockVector::zeros(q.m(), dt);
        for i in 0..q.m() {
            let qi = DVectorView::from_slice(q.block(i), dt);
            let t = self.chol[i].solve(&(&self.rhs[i] + qi));
            out.block_mut(i).copy_from_slice(t.as_slice());
        }
        out
    }

    /// Lift reduced per-node iterates back to the full space: `x_i = E t_i`.
    pub fn lift(&self, t: &BlockVector) -> BlockVector {
        let d = self.e.nrows();
        let mut x = BlockVector::zeros(t.m(), d);
        for i in 0..t.m() {
            let ti = DVectorView::from_slice(t.block(i), self.reduced_dim());
            let xi = &self.e * ti;
            x.block_mut(i).copy_from_slice(xi.as_slice());
        }
        x
    }
}

/// Eliminate `B x = 0` by the nullspace basis. The reduced constants can
/// only improve: `mu_t >= mu` and `L_t <= L`.
pub fn reduce(inst: &ProblemInstance) -> Result<ReducedInstance, ProblemError> {
    let e = nullspace_basis(inst.b_matrix(), DEFAULT_ZERO_TOL)?;
    let mut reduced_hessians = Vec::with_capacity(inst.m());
    let mut chol = Vec::with_capacity(inst.m());
    let mut rhs = Vec::with_capacity(inst.m());
    let mut mu_t = f64::INFINITY;
    let mut l_t = 0.0f64;
    for o in inst.objectives() {
        let g = e.transpose() * o.hessian() * &e;
        let eigs = symmetric_eigenvalues(&g);
        mu_t = mu_t.min(eigs.first().copied().unwrap_or(0.0));
        l_t = l_t.max(eigs.last().copied().unwrap_or(0.0));
        chol.push(Cholesky::new(g.clone()).expect("reduced Hessian is positive definite"));
        rhs.push(e.transpose() * o.c().transpose() * o.d_vec());
        reduced_hessians.push(g);
    }
    assert!(
        mu_t >= inst.mu() - 1e-9 * inst.mu().abs().max(1.0),
        "reduction cannot decrease strong convexity: mu_t = {mu_t}, mu = {}",
        inst.mu()
    );
    assert!(
        l_t <= inst.l_smooth() + 1e-9 * inst.l_smooth().abs().max(1.0),
        "reduction cannot increase smoothness: L_t = {l_t}, L = {}",
        inst.l_smooth()
    );
    Ok(ReducedInstance { e, reduced_hessians, chol, rhs, mu_t, l_t })
}

/// Exact optimum of the constrained problem.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub x_star: DVector<f64>,
    pub f_star: f64,
}

/// Solve `min_x sum_i f_i(x) s.t. B x = 0` exactly through the reduction:
/// `t* = (sum_i G_i)^{-1} sum_i E^T C_i^T d_i`, `x* = E t*`.
pub fn exact_solution(inst: &ProblemInstance) -> Result<ExactSolution, ProblemError> {
    let reduced = reduce(inst)?;
    Ok(exact_solution_reduced(inst, &reduced))
}

/// Same as [`exact_solution`] with a precomputed reduction.
pub fn exact_solution_reduced(inst: &ProblemInstance, reduced: &ReducedInstance) -> ExactSolution {
    let dt = reduced.reduced_dim();
    let mut g_sum = Matrix::zeros(dt, dt);
    for g in &reduced.reduced_hessians {
        g_sum += g;
    }
    let mut rhs_sum = DVector::zeros(dt);
    for r in &reduced.rhs {
        rhs_sum += r;
    }
    let t_star = Cholesky::new(g_sum)
        .expect("sum of positive definite matrices")
        .solve(&rhs_sum);
    let x_star = &reduced.e * t_star;
    let f_star = inst.f_value_shared(x_star.as_slice());
    ExactSolution { x_star, f_star }
}

/// The stacked constraint operator `A = [B; gamma W]`, in plain form or
/// with both factors Chebyshev-accelerated.
///
/// In accelerated form the consensus factor `W` becomes the degree-`K`
/// polynomial `P_K(W)` (applied through `K` gossip rounds) and the
/// constraint factor becomes `Bt = (P_M(B^T B))^{1/2}`, a dense symmetric
/// matrix with the same kernel as `B` built once from the eigendecomposition
/// of `B^T B`. One application of `Bt` stands for `M` multiplications by
/// `B`/`B^T` and ticks the meter accordingly. The coupling weight is
/// re-optimized for the transformed spectra, so `A^T A` keeps condition
/// number O(1).
pub struct ConstraintOperator<'a> {
    inst: &'a ProblemInstance,
    gamma: f64,
    kind: OperatorKind<'a>,
}

enum OperatorKind<'a> {
    Plain,
    Chebyshev {
        gossip: ChebyshevOperator<GossipOperator<'a>>,
        /// Dense `(P_M(B^T B))^{1/2}`; `None` when `B = 0`.
        b_tilde: Option<Matrix>,
        b_degree: usize,
        b_bounds: Option<SpectralBounds>,
        w_bounds: SpectralBounds,
    },
}

impl<'a> ConstraintOperator<'a> {
    pub fn plain(inst: &'a ProblemInstance) -> Self {
        Self { inst, gamma: inst.gamma(), kind: OperatorKind::Plain }
    }

    pub fn chebyshev(inst: &'a ProblemInstance) -> Self {
        let target_chi = 4.0;
        let w_bounds_base = *inst.mixing().bounds();
        let gossip = chebyshev_build(
            GossipOperator::new(inst.mixing(), inst.d()),
            &w_bounds_base,
            target_chi,
        );

        // Exact transformed consensus spectrum from the dense eigenvalues.
        let w_eigs = symmetric_eigenvalues(inst.mixing().matrix());
        let w_tol = DEFAULT_ZERO_TOL * w_bounds_base.lambda_max;
        let transformed_w: Vec<f64> = w_eigs
            .iter()
            .filter(|&&l| l > w_tol)
            .map(|&l| gossip.eval_scalar(l.clamp(w_bounds_base.lambda_min_plus, w_bounds_base.lambda_max)))
            .collect();
        let w_bounds = SpectralBounds {
            lambda_max: transformed_w.iter().copied().fold(0.0, f64::max),
            lambda_min_plus: transformed_w.iter().copied().fold(f64::INFINITY, f64::min),
            rank: w_bounds_base.rank,
        };

        let (b_tilde, b_degree, b_bounds) = match inst.btb_bounds() {
            None => (None, 0, None),
            Some(bb) => {
                let degree = chebyshev_degree(bb, target_chi);
                let eig = SymmetricEigen::new(inst.btb().clone());
                let tol = DEFAULT_ZERO_TOL * bb.lambda_max;
                let d = inst.d();
                let mut vals = DVector::zeros(d);
                let mut transformed: Vec<f64> = Vec::new();
                for i in 0..d {
                    let l = eig.eigenvalues[i];
                    if l > tol {
                        let pl = chebyshev_scalar(
                            l.clamp(bb.lambda_min_plus, bb.lambda_max),
                            bb.lambda_min_plus,
                            bb.lambda_max,
                            degree,
                        );
                        transformed.push(pl);
                        vals[i] = pl.sqrt();
                    }
                }
                let b_tilde = &eig.eigenvectors
                    * Matrix::from_diagonal(&vals)
                    * eig.eigenvectors.transpose();
                let bounds = SpectralBounds {
                    lambda_max: transformed.iter().copied().fold(0.0, f64::max),
                    lambda_min_plus: transformed.iter().copied().fold(f64::INFINITY, f64::min),
                    rank: bb.rank,
                };
                (Some(b_tilde), degree, Some(bounds))
            }
        };

        let gamma = match &b_bounds {
            Some(b) => b.lambda_min_plus.sqrt() / w_bounds.lambda_min_plus,
            None => inst.gamma(),
        };

        Self {
            inst,
            gamma,
            kind: OperatorKind::Chebyshev { gossip, b_tilde, b_degree, b_bounds, w_bounds },
        }
    }

    pub fn inst(&self) -> &ProblemInstance {
        self.inst
    }

    /// Effective coupling weight (re-optimized in Chebyshev form).
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Block dimension of the `u` (constraint-family) dual component.
    pub fn dual_block_dim(&self) -> usize {
        match &self.kind {
            OperatorKind::Plain => self.inst.p(),
            OperatorKind::Chebyshev { .. } => self.inst.d(),
        }
    }

    /// Degree of the consensus polynomial (1 in plain form).
    pub fn consensus_degree(&self) -> usize {
        match &self.kind {
            OperatorKind::Plain => 1,
            OperatorKind::Chebyshev { gossip, .. } => gossip.degree(),
        }
    }

    /// Degree of the constraint polynomial (1 in plain form, 0 if `B = 0`).
    pub fn constraint_degree(&self) -> usize {
        match &self.kind {
            OperatorKind::Plain => usize::from(self.inst.btb_bounds().is_some()),
            OperatorKind::Chebyshev { b_degree, .. } => *b_degree,
        }
    }

    /// `A x = (B x; gamma W x)` blockwise, ticking the meters.
    pub fn apply_a(&self, x: &BlockVector, ctx: &RunContext) -> DualPair {
        let m = self.inst.m();
        match &self.kind {
            OperatorKind::Plain => {
                ctx.tick_b_mults(1);
                let p = self.inst.p();
                let mut u = BlockVector::zeros(m, p);
                for i in 0..m {
                    let xi = DVectorView::from_slice(x.block(i), self.inst.d());
                    let bx = self.inst.b_matrix() * xi;
                    u.block_mut(i).copy_from_slice(bx.as_slice());
                }
                let mut v = self
                    .inst
                    .mixing()
                    .apply_gossip(x, ctx)
                    .expect("dimensions fixed by construction");
                v.scale(self.gamma);
                DualPair { u, v }
            }
            OperatorKind::Chebyshev { gossip, b_tilde, b_degree, .. } => {
                let u = self.apply_b_tilde(x, b_tilde.as_ref(), *b_degree, ctx);
                let mut v = BlockVector::from_vec(m, self.inst.d(), gossip.apply(x, ctx));
                v.scale(self.gamma);
                DualPair { u, v }
            }
        }
    }

    /// `A^T y = B^T u + gamma W v`, ticking the meters.
    pub fn apply_at(&self, y: &DualPair, ctx: &RunContext) -> BlockVector {
        let m = self.inst.m();
        let d = self.inst.d();
        match &self.kind {
            OperatorKind::Plain => {
                ctx.tick_b_mults(1);
                let mut out = BlockVector::zeros(m, d);
                for i in 0..m {
                    let ui = DVectorView::from_slice(y.u.block(i), self.inst.p());
                    let btu = self.inst.b_matrix().transpose() * ui;
                    out.block_mut(i).copy_from_slice(btu.as_slice());
                }
                let wv = self
                    .inst
                    .mixing()
                    .apply_gossip(&y.v, ctx)
                    .expect("dimensions fixed by construction");
                out.axpy(self.gamma, &wv);
                out
            }
            OperatorKind::Chebyshev { gossip, b_tilde, b_degree, .. } => {
                let mut out = self.apply_b_tilde(&y.u, b_tilde.as_ref(), *b_degree, ctx);
                let wv = BlockVector::from_vec(m, d, gossip.apply(&y.v, ctx));
                out.axpy(self.gamma, &wv);
                out
            }
        }
    }

    /// `A^T A x` as the composition of the two halves.
    pub fn apply_ata(&self, x: &BlockVector, ctx: &RunContext) -> BlockVector {
        let y = self.apply_a(x, ctx);
        self.apply_at(&y, ctx)
    }

    fn apply_b_tilde(
        &self,
        x: &BlockVector,
        b_tilde: Option<&Matrix>,
        degree: usize,
        ctx: &RunContext,
    ) -> BlockVector {
        let m = self.inst.m();
        let d = self.inst.d();
        let mut out = BlockVector::zeros(m, d);
        if let Some(bt) = b_tilde {
            ctx.tick_b_mults(degree as u64);
            for i in 0..m {
                let xi = DVectorView::from_slice(x.block(i), d);
                let bx = bt * xi;
                out.block_mut(i).copy_from_slice(bx.as_slice());
            }
        }
        out
    }

    /// Bounds of `A^T A` for the active form, by the Kronecker-sum rule.
    pub fn ata_bounds(&self) -> SpectralBounds {
        match &self.kind {
            OperatorKind::Plain => self.inst.ata_bounds(),
            OperatorKind::Chebyshev { b_bounds, w_bounds, .. } => {
                let g2 = self.gamma * self.gamma;
                let gw_max = g2 * w_bounds.lambda_max * w_bounds.lambda_max;
                let gw_min = g2 * w_bounds.lambda_min_plus * w_bounds.lambda_min_plus;
                let (b_max, b_min, b_rank) = match b_bounds {
                    Some(b) => (b.lambda_max, b.lambda_min_plus, b.rank),
                    None => (0.0, f64::INFINITY, 0),
                };
                SpectralBounds {
                    lambda_max: b_max + gw_max,
                    lambda_min_plus: b_min.min(gw_min),
                    rank: self.inst.m() * self.inst.d() - (self.inst.d() - b_rank),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_instance(seed: u64) -> ProblemInstance {
        let graph = Graph::ring(3).unwrap();
        ProblemInstance::random(3, 5, 2, 0.5, seed, &graph).unwrap()
    }

    #[test]
    fn random_instance_matches_requested_shape() {
        let graph = Graph::ring(5).unwrap();
        let inst = ProblemInstance::random(5, 40, 1, 0.1, 0, &graph).unwrap();
        assert_eq!((inst.m(), inst.d(), inst.p()), (5, 40, 40));
        assert!(inst.mu() > 0.0);
        assert!(inst.mu() <= inst.l_smooth());
        // rank 1 means a 39-dimensional kernel.
        assert_eq!(inst.btb_bounds().unwrap().rank, 1);
        let e = nullspace_basis(inst.b_matrix(), DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(e.ncols(), 39);
    }

    #[test]
    fn random_instance_rejects_bad_rank() {
        let graph = Graph::ring(3).unwrap();
        assert_eq!(
            ProblemInstance::random(3, 4, 4, 0.5, 0, &graph).unwrap_err(),
            ProblemError::BadRank { rank: 4, d: 4 }
        );
        assert_eq!(
            ProblemInstance::random(3, 4, 0, 0.5, 0, &graph).unwrap_err(),
            ProblemError::BadRank { rank: 0, d: 4 }
        );
    }

    #[test]
    fn random_instance_is_deterministic() {
        let graph = Graph::ring(3).unwrap();
        let a = ProblemInstance::random(3, 6, 2, 0.5, 77, &graph).unwrap();
        let b = ProblemInstance::random(3, 6, 2, 0.5, 77, &graph).unwrap();
        assert_eq!(a.b_matrix(), b.b_matrix());
        for (oa, ob) in a.objectives().iter().zip(b.objectives()) {
            assert_eq!(oa.c(), ob.c());
            assert_eq!(oa.d_vec(), ob.d_vec());
        }
        assert_eq!(a.gamma(), b.gamma());
    }

    #[test]
    fn gradient_of_isotropic_quadratic() {
        // C = I, d = 0, theta = 1: f(x) = |x|^2, grad = 2x.
        let o = QuadraticLocalObjective::new(Matrix::identity(3, 3), DVector::zeros(3), 1.0)
            .unwrap();
        let mut g = vec![0.0; 3];
        o.gradient(&[1.0, -2.0, 0.5], &mut g);
        assert_eq!(g, vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn gradient_vanishes_at_unconstrained_minimum() {
        let inst = small_instance(1);
        let ctx = RunContext::new();
        // Per-node minimizer solves H x = C^T d, i.e. the dual oracle at q = 0.
        let q = BlockVector::zeros(inst.m(), inst.d());
        let x = inst.dual_argmin(&q, &ctx).unwrap();
        let g = inst.grad_f(&x, &ctx).unwrap();
        let scale = x.norm().max(1.0);
        assert!(g.norm() <= 1e-10 * scale, "gradient norm {}", g.norm());
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let inst = small_instance(2);
        let ctx = RunContext::new();
        let mut rng = Rng::new(9);
        let mut x = BlockVector::zeros(inst.m(), inst.d());
        for v in x.iter_mut() {
            *v = rng.standard_normal();
        }
        let g = inst.grad_f(&x, &ctx).unwrap();

        let h = 1e-6;
        let mut worst = 0.0f64;
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (inst.f_value(&xp) - inst.f_value(&xm)) / (2.0 * h);
            let rel = (fd - g[k]).abs() / g[k].abs().max(1.0);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "worst relative FD error {worst}");
    }

    #[test]
    fn dual_oracle_on_isotropic_quadratic() {
        // C = I, d = 0, theta = 1: H = 2I so x(q) = q / 2.
        let o = QuadraticLocalObjective::new(Matrix::identity(2, 2), DVector::zeros(2), 1.0)
            .unwrap();
        let mut out = vec![0.0; 2];
        o.solve_shifted(&[3.0, -1.0], &mut out);
        assert_relative_eq!(out[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(out[1], -0.5, epsilon = 1e-14);
    }

    #[test]
    fn conjugate_round_trips() {
        let inst = small_instance(3);
        let ctx = RunContext::new();
        let mut rng = Rng::new(31);
        for _ in 0..100 {
            let mut q = BlockVector::zeros(inst.m(), inst.d());
            for v in q.iter_mut() {
                *v = rng.standard_normal();
            }
            let x = inst.dual_argmin(&q, &ctx).unwrap();
            let g = inst.grad_f(&x, &ctx).unwrap();
            let err = BlockVector::lin(&g, -1.0, &q).norm();
            assert!(err <= 1e-9 * q.norm().max(1.0), "grad(argmin(q)) != q: {err}");

            let mut x2 = BlockVector::zeros(inst.m(), inst.d());
            for v in x2.iter_mut() {
                *v = rng.standard_normal();
            }
            let q2 = inst.grad_f(&x2, &ctx).unwrap();
            let x_rec = inst.dual_argmin(&q2, &ctx).unwrap();
            let err = BlockVector::lin(&x_rec, -1.0, &x2).norm();
            assert!(err <= 1e-9 * x2.norm().max(1.0), "argmin(grad(x)) != x: {err}");
        }
    }

    #[test]
    fn oracle_counters_tick_once_per_stacked_call() {
        let inst = small_instance(4);
        let ctx = RunContext::new();
        let x = BlockVector::zeros(inst.m(), inst.d());
        inst.grad_f(&x, &ctx).unwrap();
        inst.grad_f(&x, &ctx).unwrap();
        inst.dual_argmin(&x, &ctx).unwrap();
        let snap = ctx.snapshot();
        assert_eq!((snap.gradient_calls, snap.dual_calls), (2, 1));
    }

    #[test]
    fn optimal_gamma_formula() {
        // lambda_min_plus(B^T B) = 4 via B = diag(2, 0); path-2 Laplacian has
        // lambda_min_plus(W) = 2, so gamma = sqrt(4) / 2 = 1.
        let graph = Graph::path(2).unwrap();
        let b = Matrix::from_diagonal(&nalgebra::dvector![2.0, 0.0]);
        let objectives: Vec<_> = (0..2)
            .map(|_| {
                QuadraticLocalObjective::new(Matrix::identity(2, 2), DVector::zeros(2), 1.0)
                    .unwrap()
            })
            .collect();
        let inst = ProblemInstance::new(objectives, b, &graph, GammaChoice::Optimal).unwrap();
        assert_relative_eq!(inst.gamma(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(optimal_gamma(&inst).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn optimal_gamma_is_homogeneous_in_b() {
        let graph = Graph::ring(3).unwrap();
        let base = small_instance(5);
        for c in [0.1, 2.0, 25.0] {
            let scaled = ProblemInstance::new(
                base.objectives().to_vec(),
                base.b_matrix() * c,
                &graph,
                GammaChoice::Optimal,
            )
            .unwrap();
            assert_relative_eq!(scaled.gamma(), c * base.gamma(), max_relative = 1e-9);
        }
    }

    #[test]
    fn ata_bounds_match_dense_kronecker_oracle() {
        // chi(A^T A) = chi(B^T B) + chi(W)^2 at the optimal gamma, checked
        // against a dense eigendecomposition of B^T B (x) I + gamma^2 W^2 (x) I.
        for seed in 0..6 {
            let graph = Graph::ring(4).unwrap();
            let inst = ProblemInstance::random(4, 6, 2, 0.3, seed, &graph).unwrap();
            let bounds = inst.ata_bounds();

            let (m, d) = (inst.m(), inst.d());
            let g2 = inst.gamma() * inst.gamma();
            let w2 = inst.mixing().matrix() * inst.mixing().matrix();
            let mut dense = Matrix::zeros(m * d, m * d);
            for i in 0..m {
                for j in 0..d {
                    for k in 0..d {
                        dense[(i * d + j, i * d + k)] += inst.btb()[(j, k)];
                    }
                }
            }
            for i in 0..m {
                for j in 0..m {
                    for k in 0..d {
                        dense[(i * d + k, j * d + k)] += g2 * w2[(i, j)];
                    }
                }
            }
            let dense_bounds = spectral_bounds(&dense, DEFAULT_ZERO_TOL).unwrap();
            assert_relative_eq!(bounds.lambda_max, dense_bounds.lambda_max, max_relative = 1e-8);
            assert_relative_eq!(
                bounds.lambda_min_plus,
                dense_bounds.lambda_min_plus,
                max_relative = 1e-8
            );

            let chi_expected =
                inst.btb_bounds().unwrap().chi() + inst.mixing().chi() * inst.mixing().chi();
            assert_relative_eq!(bounds.chi(), chi_expected, max_relative = 1e-6);
        }
    }

    #[test]
    fn constraint_operator_adjointness() {
        let inst = small_instance(6);
        let op = ConstraintOperator::plain(&inst);
        let ctx = RunContext::new();
        let mut rng = Rng::new(13);
        for _ in 0..20 {
            let mut x = BlockVector::zeros(inst.m(), inst.d());
            for v in x.iter_mut() {
                *v = rng.standard_normal();
            }
            let mut y = DualPair::zeros(inst.m(), inst.p(), inst.d());
            for v in y.u.iter_mut() {
                *v = rng.standard_normal();
            }
            for v in y.v.iter_mut() {
                *v = rng.standard_normal();
            }
            let ax = op.apply_a(&x, &ctx);
            let aty = op.apply_at(&y, &ctx);
            let lhs = ax.dot(&y);
            let rhs = x.dot(&aty);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-11);
        }
    }

    #[test]
    fn constraint_operator_counters() {
        let inst = small_instance(7);
        let op = ConstraintOperator::plain(&inst);
        let ctx = RunContext::new();
        let x = BlockVector::zeros(inst.m(), inst.d());
        op.apply_ata(&x, &ctx);
        let snap = ctx.snapshot();
        // A then A^T: one B multiplication and one communication round each.
        assert_eq!((snap.b_mults, snap.comm_rounds), (2, 2));
    }

    #[test]
    fn chebyshev_operator_preserves_solution_set_and_conditioning() {
        let graph = Graph::path(6).unwrap();
        let inst = ProblemInstance::random(6, 5, 2, 0.5, 11, &graph).unwrap();
        let plain = ConstraintOperator::plain(&inst);
        let cheb = ConstraintOperator::chebyshev(&inst);
        assert!(cheb.consensus_degree() > 1, "path-6 graph is ill-conditioned");

        // Transformed condition is O(1) and no worse than the plain one.
        let chi_plain = plain.ata_bounds().chi();
        let chi_cheb = cheb.ata_bounds().chi();
        assert!(chi_cheb <= 5.0, "chi after acceleration {chi_cheb}");
        assert!(chi_cheb < chi_plain);

        // Same kernel: consensus vectors in ker B map to zero through A.
        let e = nullspace_basis(inst.b_matrix(), DEFAULT_ZERO_TOL).unwrap();
        let kernel_dir: Vec<f64> = e.column(0).iter().copied().collect();
        let x = BlockVector::broadcast(inst.m(), &kernel_dir);
        let ctx = RunContext::new();
        let ax = cheb.apply_a(&x, &ctx);
        assert!(ax.norm() <= 1e-10, "kernel image {}", ax.norm());

        // And adjointness still holds.
        let mut rng = Rng::new(5);
        let mut x = BlockVector::zeros(inst.m(), inst.d());
        for v in x.iter_mut() {
            *v = rng.standard_normal();
        }
        let mut y = DualPair::zeros(inst.m(), cheb.dual_block_dim(), inst.d());
        for v in y.u.iter_mut() {
            *v = rng.standard_normal();
        }
        for v in y.v.iter_mut() {
            *v = rng.standard_normal();
        }
        let lhs = cheb.apply_a(&x, &ctx).dot(&y);
        let rhs = x.dot(&cheb.apply_at(&y, &ctx));
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
    }

    #[test]
    fn reduce_on_zero_b_keeps_constants() {
        let graph = Graph::ring(3).unwrap();
        let objectives: Vec<_> = (0..3)
            .map(|i| {
                let c = Matrix::identity(4, 4) * (1.0 + i as f64);
                QuadraticLocalObjective::new(c, DVector::zeros(4), 1.0).unwrap()
            })
            .collect();
        let inst =
            ProblemInstance::new(objectives, Matrix::zeros(4, 4), &graph, GammaChoice::Explicit(1.0))
                .unwrap();
        let red = reduce(&inst).unwrap();
        assert_eq!(red.reduced_dim(), 4);
        assert_relative_eq!(red.mu_t(), inst.mu(), max_relative = 1e-10);
        assert_relative_eq!(red.l_t(), inst.l_smooth(), max_relative = 1e-10);
    }

    #[test]
    fn reduce_isotropic_scalar_case() {
        // d = 2, B = [1 1], C = I, theta = 1: H = 2I and any unit direction
        // gives the scalar reduced Hessian 2.
        let graph = Graph::ring(3).unwrap();
        let objectives: Vec<_> = (0..3)
            .map(|_| {
                QuadraticLocalObjective::new(Matrix::identity(2, 2), DVector::zeros(2), 1.0)
                    .unwrap()
            })
            .collect();
        let b = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let inst = ProblemInstance::new(objectives, b, &graph, GammaChoice::Optimal).unwrap();
        let red = reduce(&inst).unwrap();
        assert_eq!(red.reduced_dim(), 1);
        for g in red.reduced_hessians() {
            assert_relative_eq!(g[(0, 0)], 2.0, epsilon = 1e-12);
        }
        assert_relative_eq!(red.mu_t(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(red.l_t(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn reduced_constants_bracket_originals() {
        for seed in 0..20 {
            let graph = Graph::ring(4).unwrap();
            let inst = ProblemInstance::random(4, 8, 1 + (seed as usize % 6), 0.05, seed, &graph)
                .unwrap();
            let red = reduce(&inst).unwrap();
            assert!(inst.mu() <= red.mu_t() + 1e-9);
            assert!(red.mu_t() <= red.l_t());
            assert!(red.l_t() <= inst.l_smooth() + 1e-9);
        }
    }

    #[test]
    fn exact_solution_zero_data_is_origin() {
        let inst = small_instance(8).with_zero_data();
        let sol = exact_solution(&inst).unwrap();
        assert!(sol.x_star.norm() <= 1e-12);
        assert!(sol.f_star.abs() <= 1e-12);
    }

    #[test]
    fn exact_solution_single_node_unconstrained() {
        // B = 0, one node: x* solves the normal equations H x = C^T d.
        let mut rng = Rng::new(21);
        let c = Matrix::from_fn(3, 3, |_, _| rng.standard_normal());
        let d_vec = DVector::from_fn(3, |_, _| rng.standard_normal());
        let o = QuadraticLocalObjective::new(c.clone(), d_vec.clone(), 0.7).unwrap();
        let graph = Graph::new(1, vec![]).unwrap();
        let inst = ProblemInstance::new(vec![o], Matrix::zeros(3, 3), &graph, GammaChoice::Explicit(1.0))
            .unwrap();
        let sol = exact_solution(&inst).unwrap();
        let h = c.transpose() * &c + Matrix::identity(3, 3) * 0.7;
        let want = Cholesky::new(h).unwrap().solve(&(c.transpose() * d_vec));
        assert_relative_eq!((sol.x_star - want).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_solution_matches_kkt_oracle() {
        // Brute-force KKT solve of [sum H, B^T; B, 0] [x; nu] = [sum C^T d; 0].
        for seed in 0..5 {
            let graph = Graph::ring(3).unwrap();
            let inst = ProblemInstance::random(3, 6, 2, 0.4, seed, &graph).unwrap();
            let sol = exact_solution(&inst).unwrap();

            let d = inst.d();
            let p = inst.p();
            let mut h_sum = Matrix::zeros(d, d);
            let mut rhs = DVector::zeros(d);
            for o in inst.objectives() {
                h_sum += o.hessian();
                rhs += o.c().transpose() * o.d_vec();
            }
            let mut kkt = Matrix::zeros(d + p, d + p);
            kkt.view_mut((0, 0), (d, d)).copy_from(&h_sum);
            kkt.view_mut((0, d), (d, p)).copy_from(&inst.b_matrix().transpose());
            kkt.view_mut((d, 0), (p, d)).copy_from(inst.b_matrix());
            let mut full_rhs = DVector::zeros(d + p);
            full_rhs.rows_mut(0, d).copy_from(&rhs);
            // B is rank deficient, so the KKT matrix is singular; use a
            // pseudoinverse solve through SVD.
            let svd = kkt.svd(true, true);
            let x_nu = svd.solve(&full_rhs, 1e-10).unwrap();
            let x_kkt = x_nu.rows(0, d).into_owned();

            assert!(
                (&sol.x_star - &x_kkt).norm() <= 1e-9 * sol.x_star.norm().max(1.0),
                "seed {seed}: reduction and KKT disagree"
            );
        }
    }

    #[test]
    fn exact_solution_is_feasible_and_stationary() {
        for seed in 0..10 {
            let graph = Graph::ring(3).unwrap();
            let inst = ProblemInstance::random(3, 6, 2, 0.4, seed, &graph).unwrap();
            let sol = exact_solution(&inst).unwrap();

            let sigma_max = inst.btb_bounds().unwrap().lambda_max.sqrt();
            let bx = (inst.b_matrix() * &sol.x_star).norm();
            assert!(bx <= 1e-9 * sigma_max * sol.x_star.norm().max(1.0));

            // Stationarity: the summed gradient is orthogonal to ker B.
            let mut grad_sum = DVector::zeros(inst.d());
            for o in inst.objectives() {
                let mut g = vec![0.0; inst.d()];
                o.gradient(sol.x_star.as_slice(), &mut g);
                grad_sum += DVector::from_vec(g);
            }
            let e = nullspace_basis(inst.b_matrix(), DEFAULT_ZERO_TOL).unwrap();
            let proj = e.transpose() * grad_sum;
            assert!(proj.norm() <= 1e-8 * sol.f_star.abs().max(1.0), "seed {seed}");
        }
    }

    #[test]
    fn violations_relate_parts_to_whole() {
        let inst = small_instance(9);
        let mut rng = Rng::new(3);
        let mut x = BlockVector::zeros(inst.m(), inst.d());
        for v in x.iter_mut() {
            *v = rng.standard_normal();
        }
        let (cons, b, w) = inst.violations(&x);
        let expect = (b * b + inst.gamma() * inst.gamma() * w * w).sqrt();
        assert_relative_eq!(cons * cons, expect * expect, max_relative = 1e-9);

        // Consensus iterate in ker B: both parts vanish.
        let e = nullspace_basis(inst.b_matrix(), DEFAULT_ZERO_TOL).unwrap();
        let dir: Vec<f64> = e.column(0).iter().copied().collect();
        let x = BlockVector::broadcast(inst.m(), &dir);
        let (cons, _, _) = inst.violations(&x);
        assert!(cons <= 1e-10);
    }
}
