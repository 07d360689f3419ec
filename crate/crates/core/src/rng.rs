//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream key, counter)`, so the
//! value seen by trial `t` of query `q` does not depend on which worker
//! produced it or in which order trials were requested.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of a string. Stable across platforms and releases,
/// unlike `std::hash::DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// A keyed stream: `at(i)` is the i-th 64-bit output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed ^ GOLDEN) }
    }

    /// Stream for a named sub-key (typically a query id).
    pub fn keyed(seed: u64, stream: &str) -> Self {
        Self {
            key: mix64(mix64(seed ^ GOLDEN) ^ fnv1a(stream.as_bytes())),
        }
    }

    /// Derive an independent child stream.
    pub fn fork(&self, salt: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(salt.wrapping_add(GOLDEN))),
        }
    }

    #[inline]
    pub fn at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.at(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`; `bound` must be non-zero.
    #[inline]
    pub fn below(&self, counter: u64, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((u128::from(self.at(counter)) * u128::from(bound)) >> 64) as u64
    }

    /// Bernoulli(p) draw for the given counter.
    #[inline]
    pub fn bernoulli(&self, counter: u64, p: f64) -> bool {
        self.uniform(counter) < p
    }
}

/// Deterministic Fisher-Yates shuffle driven by a counter stream.
pub fn shuffle<T>(items: &mut [T], seed: u64) {
    let rng = CounterRng::keyed(seed, "shuffle");
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
