//! Experiment orchestration: seeded instance construction, solver fan-out,
//! aggregation, and trace emission.
//!
//! A configuration names either one of the three benchmark cases or an
//! explicit parameter set. Each seed produces one instance (graph and data
//! both derived from the seed), the exact solution is computed once, and
//! every selected solver runs with a fresh oracle-meter context. Seeds fan
//! out to a worker pool; aggregation joins in seed order, so results are
//! independent of scheduling.
//!
//! Failures (divergence or iteration-budget exhaustion) are excluded from
//! the aggregate means and surface in the success rate instead.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Graph, GraphError};
use crate::problem::{reduce, ProblemError, ProblemInstance};
use crate::solvers::{
    apdg_default_params, apdg_run, globally_dual_run, locally_dual_run, SolverError,
    StopCriterion,
};
use crate::trace::{Reference, SolverKind, SolverTrace, Termination, TraceRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown case {0} (known cases: 1, 2, 3)")]
    UnknownCase(u32),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("all {n_seeds} seeds failed for solver {solver}")]
    AllFailed { solver: SolverKind, n_seeds: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Communication topology of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Ring,
    /// Connected Erdos-Renyi sample with the given edge probability.
    ErdosRenyi { p: f64 },
}

impl GraphSpec {
    pub fn build(&self, m: usize, seed: u64) -> Result<Graph, GraphError> {
        match self {
            GraphSpec::Ring => Graph::ring(m),
            GraphSpec::ErdosRenyi { p } => Graph::erdos_renyi_connected(m, *p, seed),
        }
    }
}

/// Full description of one experiment batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: usize,
    pub d: usize,
    pub rank_b: usize,
    pub theta: f64,
    pub graph: GraphSpec,
    pub solvers: Vec<String>,
    pub seeds: Vec<u64>,
    pub eps_cons: Option<f64>,
    pub eps_f: Option<f64>,
    pub max_iters: u64,
    #[serde(default)]
    pub cheby: bool,
    /// Override of the coupling weight; optimal when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl ExperimentConfig {
    /// The three benchmark cases. `theta` is this crate's default data
    /// regularizer for the case (the generator's free parameter).
    pub fn case(case_id: u32) -> Result<Self, HarnessError> {
        let (m, d, rank_b, graph, eps_cons) = match case_id {
            1 => (5, 40, 1, GraphSpec::Ring, 1e-2),
            2 => (5, 40, 3, GraphSpec::Ring, 1e-1),
            3 => (10, 100, 1, GraphSpec::ErdosRenyi { p: 0.3 }, 1e1),
            other => return Err(HarnessError::UnknownCase(other)),
        };
        Ok(Self {
            m,
            d,
            rank_b,
            theta: DEFAULT_CASE_THETA,
            graph,
            solvers: SolverKind::ALL.iter().map(|s| s.name().to_string()).collect(),
            seeds: (0..20).collect(),
            eps_cons: Some(eps_cons),
            eps_f: None,
            max_iters: 200_000,
            cheby: false,
            gamma: None,
        })
    }

    pub fn stop(&self) -> StopCriterion {
        StopCriterion { eps_cons: self.eps_cons, eps_f: self.eps_f, max_iters: self.max_iters }
    }

    /// Parse and validate the solver selection before any computation.
    pub fn solver_kinds(&self) -> Result<Vec<SolverKind>, HarnessError> {
        if self.solvers.is_empty() {
            return Err(HarnessError::Config("no solvers selected".into()));
        }
        let mut kinds = Vec::with_capacity(self.solvers.len());
        for name in &self.solvers {
            let kind: SolverKind = name.parse().map_err(HarnessError::Config)?;
            if kinds.contains(&kind) {
                return Err(HarnessError::Config(format!("solver {kind} listed twice")));
            }
            kinds.push(kind);
        }
        Ok(kinds)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.solver_kinds()?;
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seed list is empty".into()));
        }
        if self.rank_b < 1 || self.rank_b >= self.d {
            return Err(HarnessError::Config(format!(
                "rank_b must be in [1, d), got {} for d = {}",
                self.rank_b, self.d
            )));
        }
        self.stop().validate()?;
        Ok(())
    }

    pub fn build_instance(&self, seed: u64) -> Result<ProblemInstance, HarnessError> {
        let graph = self.graph.build(self.m, seed)?;
        let mut inst =
            ProblemInstance::random(self.m, self.d, self.rank_b, self.theta, seed, &graph)?;
        if let Some(g) = self.gamma {
            inst = ProblemInstance::new(
                inst.objectives().to_vec(),
                inst.b_matrix().clone(),
                graph_ref(&inst),
                crate::problem::GammaChoice::Explicit(g),
            )?;
            inst.set_seed(Some(seed));
        }
        Ok(inst)
    }
}

fn graph_ref(inst: &ProblemInstance) -> &Graph {
    inst.mixing().graph()
}

/// The generator regularizer used by the named cases. The reported
/// iteration counts track the conditioning this induces; see the README.
pub const DEFAULT_CASE_THETA: f64 = 0.05;

/// Traces of all selected solvers for one seed.
#[derive(Debug)]
pub struct SingleRun {
    pub seed: u64,
    pub traces: BTreeMap<SolverKind, Result<SolverTrace, SolverError>>,
}

/// Build the instance for `seed`, solve with every selected solver, and
/// return the traces. Solver errors are kept per solver so one failure
/// does not abort the others.
pub fn run_single(config: &ExperimentConfig, seed: u64) -> Result<SingleRun, HarnessError> {
    let kinds = config.solver_kinds()?;
    let inst = config.build_instance(seed)?;
    let reduced = reduce(&inst)?;
    let reference = Reference::new(&inst, &reduced);
    let stop = config.stop();

    let mut traces = BTreeMap::new();
    for kind in kinds {
        let result = match kind {
            SolverKind::Apdg => {
                let params = apdg_default_params(&inst, config.cheby);
                apdg_run(&inst, &reference, &params, &stop, config.cheby)
            }
            SolverKind::GloballyDual => {
                globally_dual_run(&inst, &reference, &stop, config.cheby)
            }
            SolverKind::LocallyDual => {
                locally_dual_run(&inst, &reduced, &reference, &stop, config.cheby)
            }
        };
        traces.insert(kind, result);
    }
    Ok(SingleRun { seed, traces })
}

/// Aggregate over seeds for one solver.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverAggregate {
    pub mean_iters: Option<f64>,
    pub mean_time_s: Option<f64>,
    pub success_rate: f64,
    pub n_seeds: usize,
}

/// Aggregates for every selected solver, joined in seed order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateResult {
    pub case: Option<u32>,
    pub solvers: BTreeMap<String, SolverAggregate>,
}

impl AggregateResult {
    pub fn get(&self, kind: SolverKind) -> Option<&SolverAggregate> {
        self.solvers.get(kind.name())
    }
}

/// Run every seed (in parallel when `jobs != 1`) and average per solver
/// over converged runs.
pub fn run_batch(
    config: &ExperimentConfig,
    jobs: Option<usize>,
) -> Result<(Vec<SingleRun>, AggregateResult), HarnessError> {
    config.validate()?;
    let runs = fan_out(config, jobs)?;
    let aggregate = aggregate(config, &runs, None)?;
    Ok((runs, aggregate))
}

fn fan_out(config: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<SingleRun>, HarnessError> {
    use rayon::prelude::*;
    let seeds = config.seeds.clone();
    let worker = |seed: u64| run_single(config, seed);
    let results: Vec<Result<SingleRun, HarnessError>> = match jobs {
        Some(1) => seeds.into_iter().map(worker).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(|| seeds.into_par_iter().map(worker).collect()),
        None => seeds.into_par_iter().map(worker).collect(),
    };
    results.into_iter().collect()
}

fn aggregate(
    config: &ExperimentConfig,
    runs: &[SingleRun],
    case: Option<u32>,
) -> Result<AggregateResult, HarnessError> {
    let kinds = config.solver_kinds()?;
    let mut solvers = BTreeMap::new();
    for kind in kinds {
        let mut iters = Vec::new();
        let mut times = Vec::new();
        let mut n = 0usize;
        for run in runs {
            let Some(result) = run.traces.get(&kind) else { continue };
            n += 1;
            if let Ok(trace) = result {
                if trace.termination == Termination::Converged {
                    iters.push(trace.iterations() as f64);
                    times.push(trace.wall_seconds());
                }
            }
        }
        if iters.is_empty() {
            return Err(HarnessError::AllFailed { solver: kind, n_seeds: n });
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        solvers.insert(
            kind.name().to_string(),
            SolverAggregate {
                mean_iters: Some(mean(&iters)),
                mean_time_s: Some(mean(&times)),
                success_rate: iters.len() as f64 / n as f64,
                n_seeds: n,
            },
        );
    }
    Ok(AggregateResult { case, solvers })
}

/// Run a named benchmark case and emit one CSV per (solver, seed) plus an
/// aggregate JSON into `out_dir`.
pub fn reproduce_case(
    case_id: u32,
    seeds: &[u64],
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<AggregateResult, HarnessError> {
    let mut config = ExperimentConfig::case(case_id)?;
    if !seeds.is_empty() {
        config.seeds = seeds.to_vec();
    }
    config.validate()?;
    let runs = fan_out(&config, jobs)?;
    let aggregate = aggregate(&config, &runs, Some(case_id))?;

    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    for run in &runs {
        for (kind, result) in &run.traces {
            if let Ok(trace) = result {
                let path = out_dir.join(format!("case{case_id}_{}_seed{}.csv", kind.name(), run.seed));
                emit_trace(trace, &path)?;
            }
        }
    }
    let json_path = out_dir.join(format!("case{case_id}_aggregate.json"));
    let body = serde_json::to_string_pretty(&aggregate).expect("aggregate serializes");
    std::fs::write(&json_path, body).map_err(|e| HarnessError::Io { path: json_path, source: e })?;
    Ok(aggregate)
}

/// Write a trace as CSV with the fixed column set. Deterministic for a
/// given trace; floats use shortest round-trip formatting.
pub fn emit_trace(trace: &SolverTrace, path: &Path) -> Result<(), HarnessError> {
    let io_err = |e: std::io::Error| HarnessError::Io { path: path.to_path_buf(), source: e };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "iter,f_err,cons_viol,b_viol,w_viol,wall_ns")?;
        for r in &trace.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iter, r.f_err, r.cons_viol, r.b_viol, r.w_viol, r.wall_ns
            )?;
        }
        Ok(())
    };
    write().map_err(io_err)
}

/// Parse a CSV produced by [`emit_trace`] back into rows.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != "iter,f_err,cons_viol,b_viol,w_viol,wall_ns" {
        return Err(format!("unexpected header: {header}"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(format!("line {}: expected 6 fields, got {}", i + 2, fields.len()));
        }
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
        let parse_u = |s: &str| s.parse::<u64>().map_err(|e| format!("line {}: {e}", i + 2));
        rows.push(TraceRow {
            iter: parse_u(fields[0])?,
            f_err: parse_f(fields[1])?,
            cons_viol: parse_f(fields[2])?,
            b_viol: parse_f(fields[3])?,
            w_viol: parse_f(fields[4])?,
            wall_ns: parse_u(fields[5])?,
        });
    }
    Ok(rows)
}

/// Least-squares fit of `log10(cons_viol)` over the trailing half of a
/// trace: returns `(slope_per_iter, rms_residual / fitted_range)`.
///
/// Converged linear-rate runs have a negative slope and a small relative
/// residual; momentum oscillation shows up in the residual, not the trend.
pub fn log_linear_fit(rows: &[TraceRow]) -> Option<(f64, f64)> {
    let n = rows.len();
    if n < 8 {
        return None;
    }
    let tail = &rows[n / 2..];
    let points: Vec<(f64, f64)> = tail
        .iter()
        .filter(|r| r.cons_viol > 0.0 && r.cons_viol.is_finite())
        .map(|r| (r.iter as f64, r.cons_viol.log10()))
        .collect();
    if points.len() < 4 {
        return None;
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residuals: f64 = points
        .iter()
        .map(|p| {
            let fit = slope * p.0 + intercept;
            (p.1 - fit) * (p.1 - fit)
        })
        .sum::<f64>();
    let rms = (residuals / n).sqrt();
    let fit_lo = points.iter().map(|p| slope * p.0 + intercept).fold(f64::INFINITY, f64::min);
    let fit_hi = points.iter().map(|p| slope * p.0 + intercept).fold(f64::NEG_INFINITY, f64::max);
    let range = (fit_hi - fit_lo).max(1e-12);
    Some((slope, rms / range))
}

/// Trailing moving minimum of `cons_viol` over `window`-iteration windows.
pub fn moving_min(rows: &[TraceRow], window: usize) -> Vec<f64> {
    let vals: Vec<f64> = rows.iter().map(|r| r.cons_viol).collect();
    (0..vals.len())
        .map(|k| {
            let lo = k.saturating_sub(window - 1);
            vals[lo..=k].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect()
}
