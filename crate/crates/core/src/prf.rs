//! Keyed pseudo-random functions for public randomness.
//!
//! Public random objects (sign matrices, hash functions, agent group
//! assignments, lazily materialized Gaussian coordinates) are never stored.
//! They are recomputed from a seed and an index. The mixer is a
//! splitmix-style finalizer: fast and well distributed, not cryptographic,
//! which is enough for a simulator where the adversary is the test suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a labelled sub-purpose.
#[inline]
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(GOLDEN)))
}

/// Independent generator for one agent within one randomizer call.
pub fn agent_rng(call_seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(call_seed);
    rng.set_stream(agent as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prf {
    key: u64,
}

impl Prf {
    pub const fn new(key: u64) -> Self {
        Self { key }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn eval(&self, a: u64) -> u64 {
        mix64(self.key ^ mix64(a.wrapping_mul(GOLDEN).wrapping_add(1)))
    }

    #[inline]
    pub fn eval2(&self, a: u64, b: u64) -> u64 {
        mix64(self.eval(a) ^ b.wrapping_mul(GOLDEN).rotate_left(17))
    }

    /// Digest of a word sequence; the length is mixed in first.
    pub fn hash_words(&self, words: &[u64]) -> u64 {
        let mut h = self.eval(words.len() as u64);
        for w in words {
            h = mix64(h ^ mix64(w.wrapping_add(GOLDEN)));
        }
        h
    }

    /// Public ±1 entry at `(row, column)`.
    #[inline]
    pub fn sign(&self, row: u64, column: u64) -> f64 {
        self.row(row).sign(column)
    }

    /// Row handle for scanning many columns of one row.
    #[inline]
    pub fn row(&self, row: u64) -> SignRow {
        SignRow(self.eval(row))
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn unit(&self, a: u64, b: u64) -> f64 {
        (self.eval2(a, b) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box–Muller.
    pub fn gaussian(&self, a: u64, b: u64) -> f64 {
        let u1 = 1.0 - self.unit(a, b.wrapping_mul(2));
        let u2 = self.unit(a, b.wrapping_mul(2).wrapping_add(1));
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }
}

/// One row of a public sign matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignRow(u64);

impl SignRow {
    #[inline]
    pub fn sign(&self, column: u64) -> f64 {
        if mix64(self.0 ^ column.wrapping_mul(GOLDEN).rotate_left(17)) >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_keyed() {
        let p = Prf::new(5);
        assert_eq!(p.eval2(3, 4), Prf::new(5).eval2(3, 4));
        assert_ne!(p.eval2(3, 4), Prf::new(6).eval2(3, 4));
        assert_ne!(p.hash_words(&[1, 2]), p.hash_words(&[2, 1]));
        assert_ne!(p.hash_words(&[0]), p.hash_words(&[0, 0]));
    }

    #[test]
    fn signs_are_balanced() {
        let p = Prf::new(11);
        let s: f64 = (0..100_000).map(|j| p.sign(42, j)).sum();
        assert!(s.abs() < 4.0 * libm::sqrt(100_000.0));
        // two rows are uncorrelated
        let c: f64 = (0..100_000).map(|j| p.sign(1, j) * p.sign(2, j)).sum();
        assert!(c.abs() < 4.0 * libm::sqrt(100_000.0));
    }

    #[test]
    fn gaussian_moments() {
        let p = Prf::new(3);
        let n = 50_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let x = p.gaussian(9, i);
            s1 += x;
            s2 += x * x;
        }
        assert!((s1 / n as f64).abs() < 0.03);
        assert!((s2 / n as f64 - 1.0).abs() < 0.03);
    }
}
