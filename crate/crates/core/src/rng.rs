//! Counter-based deterministic randomness.
//!
//! Every random decision is keyed by `(seed, domain, pixel, slice)` so the
//! outcome for one cell never depends on the order in which cells are
//! visited. The generator is SplitMix64, whose output is identical on every
//! platform.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Domain tags keep noise and scene generation from sharing streams.
pub(crate) mod domain {
    pub const NOISE: u64 = 0x6e6f_6973_6501;
    pub const SYNTH: u64 = 0x7379_6e74_6802;
    pub const SEEDS: u64 = 0x7365_6564_7303;
}

/// A short SplitMix64 stream derived from a cell key.
#[derive(Debug, Clone)]
pub(crate) struct CellRng {
    state: u64,
}

impl CellRng {
    pub fn new(seed: u64, domain: u64, a: u64, b: u64) -> Self {
        let mut k = mix64(seed.wrapping_add(GOLDEN));
        k = mix64(k ^ domain);
        k = mix64(k ^ a.wrapping_mul(GOLDEN));
        k = mix64(k ^ b.wrapping_add(0x632B_E59B_D9B4_E019));
        CellRng { state: k }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`; exact for `p == 0` and `p == 1`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform in `[0, n)`, `n > 0`, by multiply-high reduction.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Poisson(`lambda`) by sequential inversion; fine for the small rates
    /// used in scene generation.
    pub fn poisson(&mut self, lambda: f64) -> u32 {
        if lambda <= 0.0 {
            return 0;
        }
        let u = self.next_f64();
        let mut k = 0u32;
        let mut prob = (-lambda).exp();
        let mut cdf = prob;
        while u >= cdf && k < 10_000 {
            k += 1;
            prob *= lambda / k as f64;
            cdf += prob;
            if prob == 0.0 && cdf <= u {
                break;
            }
        }
        k
    }
}

/// Derives the `index`-th child seed of `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    CellRng::new(base, domain::SEEDS, index, 0).next_u64()
}
