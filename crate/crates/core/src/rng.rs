//! Counter-based SplitMix64 streams.
//!
//! Operator generation must be reproducible across languages, so it uses this
//! small generator rather than `rand`'s ChaCha family. Each operator `k` of a
//! set gets its own substream keyed by `(seed, k + seed_offset)`; normals come
//! from Box-Muller.

use num_complex::Complex64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream `stream` of generator `seed`.
    ///
    /// The initial state is `mix64(seed + GOLDEN * (stream + 1))`, so stream 0
    /// of seed 0 does not start from the all-zero state.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let key = seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(stream.wrapping_add(1)));
        Self { state: mix64(key) }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A pair of independent standard normals (Box-Muller).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Standard complex normal: `E|z|^2 = 1`, real and imaginary parts each
    /// with variance 1/2.
    pub fn complex_normal(&mut self) -> Complex64 {
        let (a, b) = self.normal_pair();
        Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
    }
}
