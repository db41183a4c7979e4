//! On-disk instance format.
//!
//! Instances serialize to JSON with matrices embedded as base64 of their
//! row-major little-endian float64 entries:
//!
//! ```json
//! {
//!   "m": 5, "d": 40, "p": 40, "theta": 0.05, "seed": 0,
//!   "C": [ {"rows": 40, "cols": 40, "data": "<base64>"}, ... ],
//!   "d_vec": [ {"rows": 40, "cols": 1, "data": "<base64>"}, ... ],
//!   "B": {"rows": 40, "cols": 40, "data": "<base64>"},
//!   "graph": {"m": 5, "edges": [[0, 1], ...]}
//! }
//! ```
//!
//! The coupling weight is not stored; it is recomputed (optimal by
//! default) on load, so a round trip is exact.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::network::Graph;
use crate::problem::{GammaChoice, ProblemInstance, QuadraticLocalObjective};
use crate::spectral::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid matrix payload: {0}")]
    BadMatrix(String),
    #[error("invalid graph: {0}")]
    BadGraph(String),
    #[error("inconsistent instance: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Problem(#[from] crate::problem::ProblemError),
    #[error("file error on {path}: {source}")]
    File {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: String,
}

impl MatrixJson {
    fn encode(m: &Matrix) -> Self {
        let mut bytes = Vec::with_capacity(8 * m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data: BASE64.encode(bytes) }
    }

    fn decode(&self) -> Result<Matrix, IoError> {
        let bytes = BASE64
            .decode(&self.data)
            .map_err(|e| IoError::BadMatrix(e.to_string()))?;
        if bytes.len() != 8 * self.rows * self.cols {
            return Err(IoError::BadMatrix(format!(
                "expected {} bytes for {}x{}, got {}",
                8 * self.rows * self.cols,
                self.rows,
                self.cols,
                bytes.len()
            )));
        }
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let k = 8 * (i * self.cols + j);
                let v = f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
                if !v.is_finite() {
                    return Err(IoError::BadMatrix(format!("non-finite entry at ({i}, {j})")));
                }
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    m: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    m: usize,
    d: usize,
    p: usize,
    theta: f64,
    seed: Option<u64>,
    #[serde(rename = "C")]
    c: Vec<MatrixJson>,
    d_vec: Vec<MatrixJson>,
    #[serde(rename = "B")]
    b: MatrixJson,
    graph: GraphJson,
}

/// Serialize an instance to the JSON format above.
pub fn instance_to_json(inst: &ProblemInstance) -> String {
    let graph = inst.mixing().graph();
    let doc = InstanceJson {
        m: inst.m(),
        d: inst.d(),
        p: inst.p(),
        theta: inst.theta(),
        seed: inst.seed(),
        c: inst.objectives().iter().map(|o| MatrixJson::encode(o.c())).collect(),
        d_vec: inst
            .objectives()
            .iter()
            .map(|o| {
                let col = Matrix::from_column_slice(o.d_vec().len(), 1, o.d_vec().as_slice());
                MatrixJson::encode(&col)
            })
            .collect(),
        b: MatrixJson::encode(inst.b_matrix()),
        graph: GraphJson { m: graph.node_count(), edges: graph.edges().to_vec() },
    };
    serde_json::to_string_pretty(&doc).expect("instance serializes")
}

/// Parse an instance; the coupling weight is the optimal one unless
/// `gamma` overrides it.
pub fn instance_from_json(text: &str, gamma: Option<f64>) -> Result<ProblemInstance, IoError> {
    let doc: InstanceJson = serde_json::from_str(text)?;
    if doc.c.len() != doc.m || doc.d_vec.len() != doc.m {
        return Err(IoError::Inconsistent(format!(
            "m = {} but {} objectives and {} data vectors",
            doc.m,
            doc.c.len(),
            doc.d_vec.len()
        )));
    }
    let graph = Graph::new(doc.graph.m, doc.graph.edges).map_err(|e| IoError::BadGraph(e.to_string()))?;
    let mut objectives = Vec::with_capacity(doc.m);
    for (cj, dj) in doc.c.iter().zip(&doc.d_vec) {
        let c = cj.decode()?;
        let d_col = dj.decode()?;
        if d_col.ncols() != 1 {
            return Err(IoError::BadMatrix("data vector must have one column".into()));
        }
        if c.ncols() != doc.d {
            return Err(IoError::Inconsistent(format!(
                "C has {} columns but d = {}",
                c.ncols(),
                doc.d
            )));
        }
        let d_vec = DVector::from_column_slice(d_col.as_slice());
        objectives.push(QuadraticLocalObjective::new(c, d_vec, doc.theta)?);
    }
    let b = doc.b.decode()?;
    if b.nrows() != doc.p {
        return Err(IoError::Inconsistent(format!("B has {} rows but p = {}", b.nrows(), doc.p)));
    }
    let choice = match gamma {
        Some(g) => GammaChoice::Explicit(g),
        None => GammaChoice::Optimal,
    };
    let mut inst = ProblemInstance::new(objectives, b, &graph, choice)?;
    inst.set_seed(doc.seed);
    Ok(inst)
}

pub fn write_instance(inst: &ProblemInstance, path: &std::path::Path) -> Result<(), IoError> {
    std::fs::write(path, instance_to_json(inst))
        .map_err(|e| IoError::File { path: path.to_path_buf(), source: e })
}

pub fn read_instance(
    path: &std::path::Path,
    gamma: Option<f64>,
) -> Result<ProblemInstance, IoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| IoError::File { path: path.to_path_buf(), source: e })?;
    instance_from_json(&text, gamma)
}
