//! Stacked per-node vectors.
//!
//! Decentralized state is a column of `m` local vectors of equal dimension.
//! `BlockVector` stores the stack contiguously and exposes per-node views so
//! node-local operators can work on their own slice.

use std::ops::{Deref, DerefMut};

/// `m` stacked vectors of dimension `block_dim`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    m: usize,
    block_dim: usize,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(m: usize, block_dim: usize) -> Self {
        Self {
            m,
            block_dim,
            data: vec![0.0; m * block_dim],
        }
    }

    pub fn from_vec(m: usize, block_dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), m * block_dim, "stacked length mismatch");
        Self { m, block_dim, data }
    }

    /// All blocks set to the same local vector.
    pub fn broadcast(m: usize, local: &[f64]) -> Self {
        let mut data = Vec::with_capacity(m * local.len());
        for _ in 0..m {
            data.extend_from_slice(local);
        }
        Self {
            m,
            block_dim: local.len(),
            data,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.block_dim..(i + 1) * self.block_dim]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.block_dim..(i + 1) * self.block_dim]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.block_dim)
    }

    /// Euclidean mean of the blocks.
    pub fn block_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.block_dim];
        for b in self.blocks() {
            for (acc, v) in mean.iter_mut().zip(b) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.m as f64;
        for v in &mut mean {
            *v *= inv;
        }
        mean
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Self) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `a + c * b` as a new vector.
    pub fn lin(a: &Self, c: f64, b: &Self) -> Self {
        let mut out = a.clone();
        out.axpy(c, b);
        out
    }

    /// `ca * a + cb * b` as a new vector.
    pub fn combine(ca: f64, a: &Self, cb: f64, b: &Self) -> Self {
        assert_eq!(a.data.len(), b.data.len());
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| ca * x + cb * y)
            .collect();
        Self {
            m: a.m,
            block_dim: a.block_dim,
            data,
        }
    }
}

impl Deref for BlockVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for BlockVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
