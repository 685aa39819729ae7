//! Counter-based draws keyed by `(seed, j, k)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every draw is a pure function of `(seed, j, k)`: the ChaCha stream is the
/// scale and the word position is the translation.
#[derive(Clone, Debug)]
pub struct KeyedRng {
    key: <ChaCha8Rng as SeedableRng>::Seed,
}

impl KeyedRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        rand_chacha::ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut key);
        KeyedRng { key }
    }

    pub fn bits(&self, j: u32, k: u64) -> u64 {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(j as u64);
        rng.set_word_pos(2 * k as u128);
        rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&self, j: u32, k: u64) -> f64 {
        (self.bits(j, k) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&self, j: u32, k: u64, p: f64) -> bool {
        p >= 1.0 || self.uniform(j, k) < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_independent() {
        let g = KeyedRng::new(7);
        let forward: Vec<u64> = (0..64).map(|k| g.bits(5, k)).collect();
        let backward: Vec<u64> = (0..64).rev().map(|k| g.bits(5, k)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        assert_ne!(g.bits(5, 0), g.bits(6, 0));
        assert_ne!(g.bits(5, 0), KeyedRng::new(8).bits(5, 0));
    }

    #[test]
    fn roughly_uniform() {
        let g = KeyedRng::new(1);
        let n = 20_000;
        let mean = (0..n).map(|k| g.uniform(3, k)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }
}
