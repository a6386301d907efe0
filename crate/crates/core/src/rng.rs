//! Deterministic random numbers for attacks.
//!
//! Every stochastic attack draws from an [`AttackRng`] seeded from a
//! `(global_seed, sample_index)` pair, so benchmark results are reproducible
//! regardless of scheduling: the stream for sample `i` never depends on how
//! many other samples ran before it or on which thread.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; used to mix seeds so that nearby `(seed, index)` pairs
/// produce unrelated streams.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic, splittable random source.
#[derive(Debug, Clone)]
pub struct AttackRng {
    inner: ChaCha8Rng,
    /// Remembered so substreams can be derived from the original identity
    /// rather than from the evolving stream position.
    base: u64,
}

impl AttackRng {
    /// Stream for sample `sample_index` of a run seeded with `global_seed`.
    pub fn for_sample(global_seed: u64, sample_index: u64) -> Self {
        let mut state = global_seed;
        let a = splitmix64(&mut state);
        let mut state2 = state ^ sample_index.wrapping_mul(0xd1b5_4a32_d192_ed03);
        let b = splitmix64(&mut state2);
        Self::from_base(a ^ b)
    }

    fn from_base(base: u64) -> Self {
        let mut seed = [0u8; 32];
        let mut state = base;
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(seed),
            base,
        }
    }

    /// Derives an independent stream keyed by `key`. Deriving the same key
    /// twice from the same parent yields identical streams, no matter how
    /// much the parent has been consumed in between.
    pub fn substream(&self, key: u64) -> Self {
        let mut state = self.base ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mixed = splitmix64(&mut state);
        Self::from_base(mixed)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal via Box-Muller. Uses exactly two uniform draws.
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] to keep the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `true` with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle of `items`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_stream() {
        let mut a = AttackRng::for_sample(42, 7);
        let mut b = AttackRng::for_sample(42, 7);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn different_sample_different_stream() {
        let mut a = AttackRng::for_sample(42, 0);
        let mut b = AttackRng::for_sample(42, 1);
        let draws_a: Vec<u64> = (0..8).map(|_| a.uniform().to_bits()).collect();
        let draws_b: Vec<u64> = (0..8).map(|_| b.uniform().to_bits()).collect();
        assert_ne!(draws_a, draws_b);
    }

    #[test]
    fn different_seed_different_stream() {
        let mut a = AttackRng::for_sample(1, 0);
        let mut b = AttackRng::for_sample(2, 0);
        assert_ne!(a.uniform().to_bits(), b.uniform().to_bits());
    }

    #[test]
    fn substream_is_position_independent() {
        let parent = AttackRng::for_sample(9, 3);
        let mut fresh = parent.substream(5);

        let mut consumed = parent.clone();
        for _ in 0..17 {
            consumed.uniform();
        }
        let mut later = consumed.substream(5);

        for _ in 0..20 {
            assert_eq!(fresh.uniform().to_bits(), later.uniform().to_bits());
        }
    }

    #[test]
    fn substream_differs_from_parent_and_siblings() {
        let parent = AttackRng::for_sample(9, 3);
        let mut s1 = parent.substream(1);
        let mut s2 = parent.substream(2);
        let mut p = parent.clone();
        assert_ne!(s1.uniform().to_bits(), s2.uniform().to_bits());
        assert_ne!(p.uniform().to_bits(), parent.clone().substream(1).uniform().to_bits());
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = AttackRng::for_sample(0, 0);
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = AttackRng::for_sample(11, 0);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean} too far from 0");
        assert!((var - 1.0).abs() < 0.05, "variance {var} too far from 1");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = AttackRng::for_sample(3, 1);
        let mut items: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(items, (0..50).collect::<Vec<_>>());
    }
}
