//! Seeded SplitMix64 generator shared by every stochastic step.
//!
//! The algorithm is fixed so that other implementations can reproduce the
//! exact streams:
//!
//! ```text
//! next_u64:  state += 0x9E3779B97F4A7C15
//!            z = state
//!            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!            return z ^ (z >> 31)            (all arithmetic mod 2^64)
//! next_f64:  (next_u64 >> 11) * 2^-53        in [0, 1)
//! below(n):  (next_u64 as u128 * n) >> 64    in [0, n)
//! shuffle:   Fisher-Yates, i = len-1 down to 1, swap(i, below(i + 1))
//! child(seed, tag) = SplitMix64(seed ^ (tag * 0xD1B54A32D192ED03)).next_u64()
//! ```
//!
//! Independent streams are derived with [`child_seed`] using small integer
//! tags (or [`tag`] for string tags, FNV-1a 64).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MIX: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator for the stream `tag` below `seed`.
    pub fn stream(seed: u64, tag: u64) -> Self {
        Self::new(child_seed(seed, tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

pub fn child_seed(seed: u64, tag: u64) -> u64 {
    SplitMix64::new(seed ^ tag.wrapping_mul(STREAM_MIX)).next_u64()
}

/// FNV-1a 64 hash of a string tag, for naming streams.
pub fn tag(name: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stream() {
        // Reference values of SplitMix64 seeded with 1234567.
        let mut r = SplitMix64::new(1234567);
        assert_eq!(r.next_u64(), 6457827717110365317);
        assert_eq!(r.next_u64(), 3203168211198807973);
        assert_eq!(r.next_u64(), 9817491932198370423);
    }

    #[test]
    fn unit_interval_and_below() {
        let mut r = SplitMix64::new(9);
        for _ in 0..10_000 {
            let u = r.next_f64();
            assert!((0.0..1.0).contains(&u));
            assert!(r.below(7) < 7);
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut r = SplitMix64::new(3);
        let mut p = r.permutation(100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn streams_differ() {
        let a = SplitMix64::stream(5, 1).next_u64();
        let b = SplitMix64::stream(5, 2).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, SplitMix64::stream(5, 1).next_u64());
    }
}
