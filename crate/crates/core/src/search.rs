//! Shared configuration and RNG plumbing for the randomized searches.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Knobs for the seeded random-restart searches in `regions` and `hyperc`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of independent restarts (each owns a private RNG stream).
    pub restarts: u64,
    /// Local-descent iterations per restart.
    pub iterations: u64,
    /// Override for the auxiliary alphabet size |U|.
    pub u_size: Option<usize>,
    /// Overrides for the per-receiver |S_l| sizes.
    pub s_sizes: Option<Vec<usize>>,
    /// Master seed; restart `r` uses the stream derived from (seed, r).
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 64,
            iterations: 500,
            u_size: None,
            s_sizes: None,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-stream RNG derived from (seed, stream index).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream.wrapping_mul(0xa076_1d64_78bd_642f);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Samples a pmf row of the given length (Dirichlet(1) via exponentials).
pub fn random_simplex(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = row.iter().sum();
    for v in &mut row {
        *v /= sum;
    }
    row
}

/// Samples an output symbol from a pmf row using one uniform draw.
pub fn sample_row(rng: &mut impl Rng, row: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let mut a1 = stream_rng(7, 3);
        let mut a2 = stream_rng(7, 3);
        let mut b = stream_rng(7, 4);
        let x1: u64 = a1.gen();
        let x2: u64 = a2.gen();
        let y: u64 = b.gen();
        assert_eq!(x1, x2);
        assert_ne!(x1, y);
    }

    #[test]
    fn random_simplex_is_normalized() {
        let mut rng = stream_rng(0, 0);
        let row = random_simplex(&mut rng, 5);
        assert!(row.iter().all(|&p| p > 0.0));
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_row_respects_point_mass() {
        let mut rng = stream_rng(1, 1);
        for _ in 0..100 {
            assert_eq!(sample_row(&mut rng, &[0.0, 1.0, 0.0]), 1);
        }
    }
}
