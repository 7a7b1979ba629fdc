//! Counter-based random numbers.
//!
//! A draw is a pure function of `(seed, stream, counter)`: ChaCha8 is a
//! counter-mode generator, so seeking to a word position costs one block.
//! Parallel workers can therefore take any slice of the sequence and still
//! reproduce the sequential output bit for bit.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Deterministic stream of uniform variates addressed by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent substream; `(seed, stream)` pairs never overlap.
    pub fn substream(&self, stream: u64) -> Self {
        Self {
            seed: self.seed,
            stream,
        }
    }

    /// Substream keyed by two indices, e.g. `(ω index, orbit index)`.
    pub fn substream2(&self, major: u64, minor: u64) -> Self {
        self.substream(major.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ minor.rotate_left(32) ^ minor)
    }

    /// Substream derived from this one; distinct parents give distinct children.
    pub fn child(&self, index: u64) -> Self {
        self.substream2(self.stream ^ 0xD1B5_4A32_D192_ED03, index)
    }

    fn positioned(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        // two 32-bit words per u64
        rng.set_word_pos(u128::from(counter) * 2);
        rng
    }

    /// Uniform variate in `[0, 1)` at position `counter`.
    pub fn uniform(&self, counter: u64) -> f64 {
        to_unit(self.positioned(counter).next_u64())
    }

    /// Fills `out` with the variates at positions `start, start+1, …`.
    pub fn fill_uniform(&self, start: u64, out: &mut [f64]) {
        let mut rng = self.positioned(start);
        for x in out.iter_mut() {
            *x = to_unit(rng.next_u64());
        }
    }

    pub fn uniforms(&self, start: u64, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_uniform(start, &mut v);
        v
    }
}

#[inline]
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_independent() {
        let rng = CounterRng::new(42);
        let all = rng.uniforms(0, 100);
        let mut parts = rng.uniforms(0, 37);
        parts.extend(rng.uniforms(37, 63));
        assert_eq!(all, parts);
        assert_eq!(all[55], rng.uniform(55));
    }

    #[test]
    fn streams_differ() {
        let rng = CounterRng::new(7);
        assert_ne!(rng.uniforms(0, 4), rng.substream(1).uniforms(0, 4));
        assert_ne!(rng.substream2(0, 1).uniforms(0, 4), rng.substream2(1, 0).uniforms(0, 4));
        assert!(rng.uniforms(0, 1000).iter().all(|x| (0.0..1.0).contains(x)));
    }
}
