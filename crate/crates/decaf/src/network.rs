//! Communication graphs and mixing matrices.
//!
//! Nodes exchange information along the edges of an undirected connected
//! graph. Consensus is encoded by a mixing matrix `W`: symmetric PSD,
//! supported on the graph (off-diagonal entries only on edges), with kernel
//! exactly the all-ones direction. The graph Laplacian is the canonical
//! choice and the only one constructed here. Applying `W (x) I` to stacked
//! per-node state is one communication round; the gossip operator sums over
//! neighbors only and ticks the communication meter.

use crate::block::BlockVector;
use crate::context::RunContext;
use crate::operator::{LinearOperator, OperatorError};
use crate::rng::Rng;
use crate::spectral::{spectral_bounds, Matrix, SpectralBounds, DEFAULT_ZERO_TOL};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least {min} nodes, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("edge probability must be in (0, 1], got {0}")]
    BadProbability(f64),
    #[error("edge ({0}, {1}) is invalid for {2} nodes")]
    BadEdge(usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("no connected sample found after {0} attempts")]
    RetriesExhausted(usize),
}

/// Undirected connected graph on nodes `0..m`.
///
/// Edges are stored as `(i, j)` with `i < j`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Build from an edge list, validating simplicity and connectivity.
    pub fn new(m: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b || a >= m || b >= m {
                return Err(GraphError::BadEdge(a, b, m));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        for w in norm.windows(2) {
            if w[0] == w[1] {
                return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
            }
        }
        let g = Self { m, edges: norm };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    /// Ring on `m >= 3` nodes.
    pub fn ring(m: usize) -> Result<Self, GraphError> {
        if m < 3 {
            return Err(GraphError::TooSmall { min: 3, got: m });
        }
        let edges = (0..m).map(|i| (i, (i + 1) % m)).collect();
        Self::new(m, edges)
    }

    /// Path on `m >= 2` nodes.
    pub fn path(m: usize) -> Result<Self, GraphError> {
        if m < 2 {
            return Err(GraphError::TooSmall { min: 2, got: m });
        }
        let edges = (0..m - 1).map(|i| (i, i + 1)).collect();
        Self::new(m, edges)
    }

    /// Connected Erdos-Renyi sample, deterministic in `(m, p, seed)`.
    ///
    /// Each pair `(i, j)`, `i < j`, in lexicographic order is included with
    /// probability `p`. Disconnected samples are rejected and redrawn with
    /// the seed advanced by the retry count, so the result is still a pure
    /// function of the inputs.
    pub fn erdos_renyi_connected(m: usize, p: f64, seed: u64) -> Result<Self, GraphError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GraphError::BadProbability(p));
        }
        if m < 2 {
            return Err(GraphError::TooSmall { min: 2, got: m });
        }
        const MAX_RETRIES: usize = 1000;
        for retry in 0..MAX_RETRIES {
            let mut rng = Rng::new(seed.wrapping_add(retry as u64));
            let mut edges = Vec::new();
            for i in 0..m {
                for j in (i + 1)..m {
                    if rng.bernoulli(p) {
                        edges.push((i, j));
                    }
                }
            }
            let g = Self { m, edges };
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(GraphError::RetriesExhausted(MAX_RETRIES))
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.m as f64
    }

    pub fn is_connected(&self) -> bool {
        if self.m == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.m];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphJson { m: self.m, edges: self.edges.clone() })
            .expect("graph serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let raw: GraphJson = serde_json::from_str(s).map_err(|e| e.to_string())?;
        Self::new(raw.m, raw.edges).map_err(|e| e.to_string())
    }
}

/// Graph Laplacian mixing matrix with cached spectrum and adjacency.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: Matrix,
    graph: Graph,
    bounds: SpectralBounds,
    /// Per-node `(neighbor, weight)` lists including the diagonal entry.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Laplacian of `g`: degree on the diagonal, -1 on edges.
    pub fn laplacian(g: &Graph) -> Self {
        let m = g.node_count();
        let mut w = Matrix::zeros(m, m);
        for &(a, b) in g.edges() {
            w[(a, b)] = -1.0;
            w[(b, a)] = -1.0;
            w[(a, a)] += 1.0;
            w[(b, b)] += 1.0;
        }
        let bounds = if m == 1 {
            // Single node: W = 0, consensus is vacuous. Degenerate bounds so
            // the rest of the machinery can treat the operator as absent.
            SpectralBounds { lambda_max: 0.0, lambda_min_plus: f64::INFINITY, rank: 0 }
        } else {
            let b = spectral_bounds(&w, DEFAULT_ZERO_TOL)
                .expect("Laplacian of a connected graph is PSD with rank m-1");
            debug_assert_eq!(b.rank, m - 1);
            b
        };
        let neighbors = neighbor_lists(&w);
        Self { w, graph: g.clone(), bounds, neighbors }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn bounds(&self) -> &SpectralBounds {
        &self.bounds
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn chi(&self) -> f64 {
        self.bounds.chi()
    }

    /// One gossip round: `(W (x) I) x`, summing over neighbors and self only.
    /// Ticks the communication meter once.
    pub fn apply_gossip(
        &self,
        x: &BlockVector,
        ctx: &RunContext,
    ) -> Result<BlockVector, OperatorError> {
        if x.m() != self.node_count() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.node_count(),
                got: x.m(),
            });
        }
        let op = GossipOperator::new(self, x.block_dim());
        Ok(BlockVector::from_vec(x.m(), x.block_dim(), op.apply(x, ctx)))
    }
}

fn neighbor_lists(w: &Matrix) -> Vec<Vec<(usize, f64)>> {
    let m = w.nrows();
    (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| w[(i, j)] != 0.0)
                .map(|j| (j, w[(i, j)]))
                .collect()
        })
        .collect()
}

/// `W (x) I` on stacked per-node vectors. One application = one
/// communication round.
pub struct GossipOperator<'a> {
    mixing: &'a MixingMatrix,
    block_dim: usize,
}

impl<'a> GossipOperator<'a> {
    pub fn new(mixing: &'a MixingMatrix, block_dim: usize) -> Self {
        Self { mixing, block_dim }
    }
}

impl LinearOperator for GossipOperator<'_> {
    fn dim(&self) -> usize {
        self.mixing.node_count() * self.block_dim
    }

    fn apply(&self, v: &[f64], ctx: &RunContext) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim());
        ctx.tick_comm();
        let d = self.block_dim;
        let mut out = vec![0.0; v.len()];
        for (i, nbrs) in self.mixing.neighbors.iter().enumerate() {
            let oi = &mut out[i * d..(i + 1) * d];
            for &(j, wij) in nbrs {
                let xj = &v[j * d..(j + 1) * d];
                for (o, x) in oi.iter_mut().zip(xj) {
                    *o += wij * x;
                }
            }
        }
        out
    }
}

/// Per-clause result of checking a candidate mixing matrix against a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixingReport {
    pub symmetric: bool,
    pub positive_semidefinite: bool,
    pub network_compatible: bool,
    pub kernel_is_consensus: bool,
}

impl MixingReport {
    pub fn all_pass(&self) -> bool {
        self.symmetric
            && self.positive_semidefinite
            && self.network_compatible
            && self.kernel_is_consensus
    }

    pub fn failed_clauses(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.symmetric {
            out.push("symmetry");
        }
        if !self.positive_semidefinite {
            out.push("positive semidefiniteness");
        }
        if !self.network_compatible {
            out.push("network compatibility (sparsity)");
        }
        if !self.kernel_is_consensus {
            out.push("kernel = consensus subspace");
        }
        out
    }
}

/// Check the mixing-matrix requirements clause by clause.
pub fn validate_mixing(w: &Matrix, g: &Graph) -> MixingReport {
    let m = g.node_count();
    let scale = w.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);

    let mut symmetric = w.nrows() == m && w.ncols() == m;
    if symmetric {
        'outer: for i in 0..m {
            for j in (i + 1)..m {
                if (w[(i, j)] - w[(j, i)]).abs() > 1e-10 * scale {
                    symmetric = false;
                    break 'outer;
                }
            }
        }
    }

    let mut network_compatible = w.nrows() == m && w.ncols() == m;
    if network_compatible {
        'outer: for i in 0..m {
            for j in (i + 1)..m {
                if !g.has_edge(i, j) && (w[(i, j)].abs() > 1e-12 * scale || w[(j, i)].abs() > 1e-12 * scale) {
                    network_compatible = false;
                    break 'outer;
                }
            }
        }
    }

    let (positive_semidefinite, kernel_is_consensus) = if symmetric {
        match spectral_bounds(w, DEFAULT_ZERO_TOL) {
            Ok(b) => {
                let ones = nalgebra::DVector::from_element(m, 1.0);
                let w1 = w * ones;
                let w1_ok = w1.iter().all(|v| v.abs() <= 1e-10 * scale);
                (true, b.rank == m - 1 && w1_ok)
            }
            Err(crate::spectral::SpectralError::AllZeroSpectrum) => (true, false),
            Err(_) => (false, false),
        }
    } else {
        (false, false)
    };

    MixingReport { symmetric, positive_semidefinite, network_compatible, kernel_is_consensus }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ring_shapes() {
        let g = Graph::ring(3).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        for i in 0..3 {
            assert_eq!(g.degree(i), 2);
        }

        let g5 = Graph::ring(5).unwrap();
        assert_eq!(g5.edge_count(), 5);
        assert!(g5.is_connected());

        assert_eq!(Graph::ring(2), Err(GraphError::TooSmall { min: 3, got: 2 }));
    }

    #[test]
    fn erdos_renyi_p1_is_complete() {
        for seed in [0, 1, 99] {
            let g = Graph::erdos_renyi_connected(6, 1.0, seed).unwrap();
            assert_eq!(g.edge_count(), 15);
        }
    }

    #[test]
    fn erdos_renyi_is_deterministic() {
        let a = Graph::erdos_renyi_connected(10, 0.3, 1234).unwrap();
        let b = Graph::erdos_renyi_connected(10, 0.3, 1234).unwrap();
        assert_eq!(a, b);
        // Note adjacent seeds may coincide: a rejected sample retries with
        // the seed advanced by one, which is the next seed's first attempt.
        let c = Graph::erdos_renyi_connected(10, 0.3, 998877).unwrap();
        assert!(a != c, "distant seeds should essentially never collide");
    }

    #[test]
    fn erdos_renyi_mean_degree_monte_carlo() {
        // Conditioning on connectivity biases the mean degree slightly above
        // (m - 1) p = 2.7.
        let mut total = 0.0;
        let n_seeds = 1000u64;
        for seed in 0..n_seeds {
            let g = Graph::erdos_renyi_connected(10, 0.3, seed).unwrap();
            total += g.mean_degree();
        }
        let mean = total / n_seeds as f64;
        assert!((mean - 2.7).abs() <= 0.3, "mean degree {mean}");
    }

    #[test]
    fn erdos_renyi_rejects_bad_probability() {
        assert!(matches!(
            Graph::erdos_renyi_connected(5, 0.0, 0),
            Err(GraphError::BadProbability(_))
        ));
    }

    #[test]
    fn graph_json_round_trip() {
        let g = Graph::erdos_renyi_connected(8, 0.4, 3).unwrap();
        let s = g.to_json();
        assert_eq!(Graph::from_json(&s).unwrap(), g);
        assert!(s.starts_with("{\"m\":8,\"edges\":[["));
    }

    #[test]
    fn laplacian_of_ring3() {
        let g = Graph::ring(3).unwrap();
        let w = MixingMatrix::laplacian(&g);
        let want =
            Matrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        assert_eq!(w.matrix(), &want);
    }

    #[test]
    fn laplacian_of_path2() {
        let g = Graph::path(2).unwrap();
        let w = MixingMatrix::laplacian(&g);
        assert_eq!(w.matrix(), &Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_relative_eq!(w.bounds().lambda_max, 2.0, epsilon = 1e-12);
        assert_relative_eq!(w.bounds().lambda_min_plus, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_annihilates_ones_exactly() {
        for g in [Graph::ring(7).unwrap(), Graph::erdos_renyi_connected(9, 0.5, 2).unwrap()] {
            let w = MixingMatrix::laplacian(&g);
            let ones = nalgebra::DVector::from_element(g.node_count(), 1.0);
            let out = w.matrix() * ones;
            assert!(out.iter().all(|&v| v == 0.0), "integer row sums must cancel exactly");
        }
    }

    #[test]
    fn validate_mixing_clauses() {
        let g = Graph::ring(3).unwrap();
        let lap = MixingMatrix::laplacian(&g);
        assert!(validate_mixing(lap.matrix(), &g).all_pass());

        // Identity: symmetric, PSD, compatible, but trivial kernel.
        let report = validate_mixing(&Matrix::identity(3, 3), &g);
        assert!(report.symmetric && report.positive_semidefinite && report.network_compatible);
        assert!(!report.kernel_is_consensus);
        assert_eq!(report.failed_clauses(), vec!["kernel = consensus subspace"]);

        // Asymmetric perturbation.
        let mut bad = lap.matrix().clone();
        bad[(0, 2)] = 0.0;
        let report = validate_mixing(&bad, &g);
        assert!(!report.symmetric);

        // Entry off the edge set.
        let g_path = Graph::path(3).unwrap();
        let report = validate_mixing(lap.matrix(), &g_path);
        assert!(!report.network_compatible, "(0,2) is not an edge of the path");
    }

    #[test]
    fn gossip_kernel_and_small_cases() {
        let g = Graph::ring(4).unwrap();
        let w = MixingMatrix::laplacian(&g);
        let ctx = RunContext::new();

        let x = BlockVector::broadcast(4, &[3.0, -1.0]);
        let out = w.apply_gossip(&x, &ctx).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));

        let g2 = Graph::path(2).unwrap();
        let w2 = MixingMatrix::laplacian(&g2);
        let x = BlockVector::from_vec(2, 1, vec![5.0, 2.0]);
        let out = w2.apply_gossip(&x, &ctx).unwrap();
        assert_eq!(&*out, &[3.0, -3.0]);
    }

    #[test]
    fn gossip_matches_dense_kronecker_oracle() {
        let g = Graph::ring(3).unwrap();
        let w = MixingMatrix::laplacian(&g);
        let d = 4;
        let mut rng = crate::rng::Rng::new(8);
        let x = BlockVector::from_vec(3, d, (0..3 * d).map(|_| rng.standard_normal()).collect());

        // Dense W (x) I.
        let mut dense = Matrix::zeros(3 * d, 3 * d);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..d {
                    dense[(i * d + k, j * d + k)] = w.matrix()[(i, j)];
                }
            }
        }
        let want = &dense * nalgebra::DVector::from_column_slice(&x);

        let ctx = RunContext::new();
        let got = w.apply_gossip(&x, &ctx).unwrap();
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn gossip_ticks_communication_counter() {
        let g = Graph::ring(5).unwrap();
        let w = MixingMatrix::laplacian(&g);
        let ctx = RunContext::new();
        let x = BlockVector::zeros(5, 3);
        for _ in 0..7 {
            w.apply_gossip(&x, &ctx).unwrap();
        }
        assert_eq!(ctx.snapshot().comm_rounds, 7);

        let wrong = BlockVector::zeros(4, 3);
        assert!(w.apply_gossip(&wrong, &ctx).is_err());
        assert_eq!(ctx.snapshot().comm_rounds, 7, "failed calls must not tick");
    }

    #[test]
    fn chebyshev_over_gossip_ticks_k_rounds() {
        let g = Graph::path(8).unwrap();
        let w = MixingMatrix::laplacian(&g);
        let op = crate::chebyshev::chebyshev_build(GossipOperator::new(&w, 2), w.bounds(), 4.0);
        let k = op.degree() as u64;
        assert!(k > 1);
        let ctx = RunContext::new();
        let v = vec![0.5; 16];
        let _ = op.apply(&v, &ctx);
        assert_eq!(ctx.snapshot().comm_rounds, k);
    }
}
