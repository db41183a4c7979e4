//! Per-run oracle accounting.
//!
//! Complexity claims for the solvers are stated in four meters: primal
//! gradient calls, dual-oracle solves, communication rounds (multiplications
//! by the mixing operator), and multiplications by the constraint matrix.
//! Each solver run owns a `RunContext`; operators tick it as they are
//! applied. Metric evaluation bypasses the context entirely so observation
//! never inflates the meters. Contexts are not shared across threads -- each
//! concurrent run constructs its own.

use std::cell::Cell;

/// Counters for one solver run. Reset by constructing a fresh value.
#[derive(Debug, Default)]
pub struct RunContext {
    gradient_calls: Cell<u64>,
    dual_calls: Cell<u64>,
    comm_rounds: Cell<u64>,
    b_mults: Cell<u64>,
}

impl RunContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick_gradient(&self) {
        self.gradient_calls.set(self.gradient_calls.get() + 1);
    }

    pub fn tick_dual(&self) {
        self.dual_calls.set(self.dual_calls.get() + 1);
    }

    pub fn tick_comm(&self) {
        self.comm_rounds.set(self.comm_rounds.get() + 1);
    }

    pub fn tick_b_mults(&self, n: u64) {
        self.b_mults.set(self.b_mults.get() + n);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            gradient_calls: self.gradient_calls.get(),
            dual_calls: self.dual_calls.get(),
            comm_rounds: self.comm_rounds.get(),
            b_mults: self.b_mults.get(),
        }
    }
}

/// Final meter readings attached to a solver trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CounterSnapshot {
    pub gradient_calls: u64,
    pub dual_calls: u64,
    pub comm_rounds: u64,
    pub b_mults: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_accumulate_independently() {
        let ctx = RunContext::new();
        ctx.tick_comm();
        ctx.tick_comm();
        ctx.tick_gradient();
        ctx.tick_b_mults(3);
        let snap = ctx.snapshot();
        assert_eq!(snap.comm_rounds, 2);
        assert_eq!(snap.gradient_calls, 1);
        assert_eq!(snap.dual_calls, 0);
        assert_eq!(snap.b_mults, 3);

        // A fresh context starts from zero.
        assert_eq!(RunContext::new().snapshot(), CounterSnapshot::default());
    }
}
