//! Chebyshev polynomial acceleration of ill-conditioned PSD operators.
//!
//! For a symmetric PSD operator `S` with nonzero spectrum in
//! `[lambda_min_plus, lambda_max]`, the degree-`K` polynomial
//!
//! ```text
//! P_K(x) = 1 - T_K(t(x)) / T_K(t(0)),   t(x) = (2x - a - b) / (b - a)
//! ```
//!
//! (with `T_K` the Chebyshev polynomial of the first kind and
//! `[a, b] = [lambda_min_plus, lambda_max]`) satisfies `P_K(0) = 0`, so the
//! kernel of `S` is preserved, and maps `[a, b]` into
//! `[1 - delta, 1 + delta]` with `delta = 1 / |T_K(t(0))|`. Taking
//! `K = ceil(sqrt(b/a))` makes `delta <= 1/cosh(2) ~ 0.266`, i.e. the
//! transformed operator has condition number below 1.73 on the range of `S`
//! at the price of `K` applications of `S` per application of `P_K(S)`.
//!
//! Applying a consensus operator `K` times means `K` communication rounds;
//! the wrapped base does its own accounting, so the meters inflate by
//! exactly `K` per call.

use crate::context::RunContext;
use crate::operator::{LinearOperator, OperatorError};
use crate::spectral::SpectralBounds;

/// Degree-`K` Chebyshev polynomial of a PSD base operator.
pub struct ChebyshevOperator<Op> {
    base: Op,
    degree: usize,
    spectrum_lo: f64,
    spectrum_hi: f64,
    scale: f64,
}

/// Smallest degree meeting `target_chi`, never below `ceil(sqrt(chi))`.
///
/// `target_chi` must be at least 2 unless the base is already perfectly
/// conditioned; the default of 4 is met by `ceil(sqrt(chi))` alone.
pub fn chebyshev_degree(bounds: &SpectralBounds, target_chi: f64) -> usize {
    let chi = bounds.chi();
    let mut k = chi.sqrt().ceil().max(1.0) as usize;
    while condition_after(bounds, k) > target_chi && k < 64 * 1024 {
        k += 1;
    }
    k
}

/// Condition number of `P_K(S)` on the range of `S`, from the bounds alone.
pub fn condition_after(bounds: &SpectralBounds, degree: usize) -> f64 {
    let delta = chebyshev_delta(bounds.lambda_min_plus, bounds.lambda_max, degree);
    (1.0 + delta) / (1.0 - delta)
}

/// `delta = 1 / |T_K(t(0))|`, the radius of the transformed spectrum
/// around 1. Zero when the input interval is a single point.
fn chebyshev_delta(a: f64, b: f64, degree: usize) -> f64 {
    if b - a <= 0.0 {
        return 0.0;
    }
    // |t(0)| = (b + a) / (b - a) > 1; T_K there via cosh(K acosh).
    let t0 = (b + a) / (b - a);
    let tk = (degree as f64 * t0.acosh()).cosh();
    if tk.is_finite() {
        1.0 / tk
    } else {
        0.0
    }
}

/// Build the Chebyshev acceleration of `base` from its spectral bounds.
///
/// The degree is `ceil(sqrt(chi(base)))` (at least 1), increased if needed
/// until the predicted transformed condition number meets `target_chi`.
pub fn chebyshev_build<Op: LinearOperator>(
    base: Op,
    bounds: &SpectralBounds,
    target_chi: f64,
) -> ChebyshevOperator<Op> {
    assert!(bounds.lambda_min_plus > 0.0 && bounds.lambda_max >= bounds.lambda_min_plus);
    assert!(target_chi >= 1.0, "target condition must be >= 1");
    let degree = chebyshev_degree(bounds, target_chi);
    ChebyshevOperator {
        base,
        degree,
        spectrum_lo: bounds.lambda_min_plus,
        spectrum_hi: bounds.lambda_max,
        scale: 1.0,
    }
}

/// Validated application; the trait method panics on bad dimensions instead.
pub fn chebyshev_apply<Op: LinearOperator>(
    op: &ChebyshevOperator<Op>,
    v: &[f64],
    ctx: &RunContext,
) -> Result<Vec<f64>, OperatorError> {
    op.check_dim(v)?;
    Ok(op.apply(v, ctx))
}

impl<Op> ChebyshevOperator<Op> {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn spectrum_lo(&self) -> f64 {
        self.spectrum_lo
    }

    pub fn spectrum_hi(&self) -> f64 {
        self.spectrum_hi
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Rescale the output spectrum by `s`.
    pub fn with_scale(mut self, s: f64) -> Self {
        assert!(s > 0.0);
        self.scale = s;
        self
    }

    pub fn base(&self) -> &Op {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        chebyshev_delta(self.spectrum_lo, self.spectrum_hi, self.degree)
    }

    /// Spectrum interval of the transformed operator on the range of the
    /// base: `scale * [1 - delta, 1 + delta]`.
    pub fn transformed_bounds(&self, base_rank: usize) -> SpectralBounds {
        let delta = self.delta();
        SpectralBounds {
            lambda_max: self.scale * (1.0 + delta),
            lambda_min_plus: self.scale * (1.0 - delta),
            rank: base_rank,
        }
    }

    /// Scalar value of the applied polynomial at eigenvalue `x`.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        self.scale * chebyshev_scalar(x, self.spectrum_lo, self.spectrum_hi, self.degree)
    }
}

/// `P_K(x)` for the polynomial mapping `[a, b]` to `1 +- delta` with
/// `P_K(0) = 0`, evaluated at a scalar.
pub fn chebyshev_scalar(x: f64, a: f64, b: f64, degree: usize) -> f64 {
    if degree == 1 || b - a <= 0.0 {
        return 2.0 * x / (a + b);
    }
    // Normalized recurrence r_k = T_k(t(x)) / T_k(t0) with the ratio
    // rho_k = T_k(t0) / T_{k+1}(t0) kept in stable form.
    let t0 = -(a + b) / (b - a);
    let tx = (2.0 * x - a - b) / (b - a);
    let mut r_prev = 1.0;
    let mut r = tx / t0;
    let mut rho_prev = 1.0 / t0;
    for _ in 1..degree {
        let rho = 1.0 / (2.0 * t0 - rho_prev);
        let r_next = rho * (2.0 * tx * r - rho_prev * r_prev);
        r_prev = r;
        r = r_next;
        rho_prev = rho;
    }
    1.0 - r
}

impl<Op: LinearOperator> LinearOperator for ChebyshevOperator<Op> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, v: &[f64], ctx: &RunContext) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim());
        let (a, b) = (self.spectrum_lo, self.spectrum_hi);

        // Degree 1 reduces to 2 S v / (a + b); also covers a == b where the
        // affine map to [-1, 1] is degenerate.
        if self.degree == 1 || b - a <= 0.0 {
            let mut out = self.base.apply(v, ctx);
            let c = self.scale * 2.0 / (a + b);
            for o in &mut out {
                *o *= c;
            }
            return out;
        }

        // r_k = T_k(t(S)) v / T_k(t0), computed with one base application per
        // degree. Dividing through by T_k(t0) keeps the kernel component of
        // the iterate equal to v itself (no overflow for huge t0).
        let t0 = -(a + b) / (b - a);
        let c1 = 2.0 / (b - a);
        let c0 = -(a + b) / (b - a);
        let apply_t = |x: &[f64], ctx: &RunContext| -> Vec<f64> {
            let mut out = self.base.apply(x, ctx);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = c1 * *o + c0 * xi;
            }
            out
        };

        let mut r_prev: Vec<f64> = v.to_vec();
        let mut r = apply_t(v, ctx);
        for x in &mut r {
            *x /= t0;
        }
        let mut rho_prev = 1.0 / t0;
        for _ in 1..self.degree {
            let rho = 1.0 / (2.0 * t0 - rho_prev);
            let tr = apply_t(&r, ctx);
            let mut r_next = tr;
            for ((next, prev), _) in r_next.iter_mut().zip(&r_prev).zip(0..) {
                *next = rho * (2.0 * *next - rho_prev * *prev);
            }
            r_prev = r;
            r = r_next;
            rho_prev = rho;
        }

        v.iter()
            .zip(&r)
            .map(|(vi, ri)| self.scale * (vi - ri))
            .collect()
    }
}
