//! Counter-based winner streams.
//!
//! The winner of round `n` (0-based) in trial `t` is a pure function of
//! `(seed, t, n)`: the key is derived from `seed`, the ChaCha8 stream id is
//! `t`, and round `n` consumes exactly the `n`-th 64-bit output word of that
//! stream. Trials can therefore be run on any thread in any order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sequential reader over the winners of a single trial.
#[derive(Clone, Debug)]
pub struct WinnerStream {
    rng: ChaCha8Rng,
    m: u64,
}

impl WinnerStream {
    pub fn new(seed: u64, trial: u64, m: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self { rng, m: m as u64 }
    }

    /// Winner of the next round, in `1..=m`.
    #[inline]
    pub fn next_winner(&mut self) -> usize {
        word_to_winner(self.rng.next_u64(), self.m)
    }

    /// Random access to the winner of round `step` without replaying the stream.
    pub fn winner_at(seed: u64, trial: u64, step: u64, m: usize) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        // Positions count 32-bit words.
        rng.set_word_pos(2 * step as u128);
        word_to_winner(rng.next_u64(), m as u64)
    }

    /// Raw 64-bit words, for samplers that do not need a winner index.
    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Multiply-high reduction of a uniform 64-bit word onto `1..=m`; the bias is
/// below `m / 2^64` per draw.
#[inline]
fn word_to_winner(x: u64, m: u64) -> usize {
    (((x as u128) * (m as u128)) >> 64) as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_random_access_agree() {
        let mut s = WinnerStream::new(7, 12, 5);
        for step in 0..200 {
            assert_eq!(s.next_winner(), WinnerStream::winner_at(7, 12, step, 5));
        }
    }

    #[test]
    fn streams_differ_by_trial_and_seed() {
        let a: Vec<_> = (0..64).map(|n| WinnerStream::winner_at(1, 0, n, 4)).collect();
        let b: Vec<_> = (0..64).map(|n| WinnerStream::winner_at(1, 1, n, 4)).collect();
        let c: Vec<_> = (0..64).map(|n| WinnerStream::winner_at(2, 0, n, 4)).collect();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn winners_are_roughly_uniform() {
        let m = 6;
        let mut s = WinnerStream::new(99, 0, m);
        let mut counts = vec![0u32; m];
        let n = 600_000;
        for _ in 0..n {
            let w = s.next_winner();
            assert!((1..=m).contains(&w));
            counts[w - 1] += 1;
        }
        for c in counts {
            let p = c as f64 / n as f64;
            assert!((p - 1.0 / 6.0).abs() < 0.003, "{p}");
        }
    }
}
