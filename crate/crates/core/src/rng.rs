//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every random stream in the crate is a ChaCha8 generator. An agent's
//! stream is keyed by `(master_seed, agent_id)`: the 256-bit key is expanded
//! from `master_seed` and the ChaCha stream id is the agent id, so agent
//! streams never overlap and their contents do not depend on how many other
//! agents exist or in which order they are advanced. Within a stream, draws
//! are consumed in step order, so the draw for `(agent, step)` is a pure
//! function of the triple.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a parent seed with a child index into a new 64-bit seed.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for one agent of a swarm.
pub fn agent_stream(master_seed: u64, agent: usize) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(agent as u64);
    rng
}
