//! Reproducible stream seeding for parallel Monte Carlo.
//!
//! Every replication derives its own ChaCha stream from `(master_seed,
//! stream_index)` through a SplitMix64 expansion, so results are independent
//! of execution order and parallelism degree.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step; good avalanche, used only for seed derivation.
fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
}

fn splitmix64_next(state: &mut u64) -> u64 {
    splitmix64(state);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent RNG for stream `index` under `master_seed`.
pub fn derive_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut state = master_seed ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64_next(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
