//! Counter-based random number generation.
//!
//! Every draw is a pure function of `(seed, stream, step, index)`, so
//! trajectories can be generated in any order, on any number of threads,
//! with bit-identical results. A stream corresponds to one trajectory.

/// SplitMix64 finalizer; full 64-bit avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn hash_words(words: [u64; 4]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3_u64;
    for w in words {
        h = mix64(h ^ w.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    }
    mix64(h)
}

/// Keyed counter-based generator for one (seed, stream) pair.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    #[inline]
    pub fn raw(&self, step: u64, index: u32) -> u64 {
        hash_words([self.seed, self.stream, step, index as u64])
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, step: u64, index: u32) -> f64 {
        let bits = self.raw(step, index) >> 11; // 53 bits
        (bits as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Standard normal draw by Box–Muller; consumes uniform indices
    /// `2 * pair` and `2 * pair + 1`.
    #[inline]
    pub fn gaussian(&self, step: u64, pair: u32) -> f64 {
        let u1 = self.uniform(step, 2 * pair);
        let u2 = self.uniform(step, 2 * pair + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
