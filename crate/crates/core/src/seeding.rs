//! Seed derivation. Every random stream in an experiment is a pure function
//! of the master seed and the cell coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of repetition `rep` in cell `(n_d, n_b)`.
pub fn derive_seed(master: u64, n_d: usize, n_b: usize, rep: usize) -> u64 {
    [n_d as u64, n_b as u64, rep as u64].iter().fold(splitmix64(master), |h, &v| splitmix64(h ^ v))
}

/// Independent generator `k` of `seed`.
pub fn substream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}
