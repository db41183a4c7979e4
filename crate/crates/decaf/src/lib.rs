//! Decentralized convex optimization with local affine constraints.
//!
//! `m` agents hold smooth strongly convex objectives `f_i` over a shared
//! decision variable and a common affine constraint `B x = 0`. They minimize
//! the sum of their objectives by exchanging information along a connected
//! communication graph. This crate provides:
//!
//! * the stacked problem model (per-node oracles, constraint and consensus
//!   operators, exact ground-truth solutions for quadratic objectives),
//! * three linearly convergent first-order solvers: an accelerated
//!   primal-dual gradient method on the saddle reformulation, an accelerated
//!   method on the global dual, and an accelerated method on the locally
//!   reduced dual,
//! * Chebyshev polynomial acceleration of the communication and constraint
//!   operators,
//! * a benchmark harness reproducing ring and Erdos-Renyi experiment suites
//!   with CSV/JSON trace emission, driven by the `decaf` CLI.

pub mod block;
pub mod chebyshev;
pub mod context;
pub mod harness;
pub mod io;
pub mod network;
pub mod operator;
pub mod problem;
pub mod rng;
pub mod solvers;
pub mod trace;
pub mod spectral;

pub use block::BlockVector;
pub use context::{CounterSnapshot, RunContext};
pub use network::{Graph, MixingMatrix};
pub use spectral::{Matrix, SpectralBounds};
