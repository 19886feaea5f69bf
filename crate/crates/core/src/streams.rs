//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! base seed, with the stream id selecting a purpose (see [`tag`]) and the
//! block counter offset by the replicate index. The stream a replicate sees
//! therefore does not depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Tags are combined with a sub-index via [`tag::with`].
pub mod tag {
    pub const CONFIG: u64 = 1;
    pub const INSERT: u64 = 2;
    pub const EXTERNAL: u64 = 3;
    pub const QUADRATURE: u64 = 4;
    pub const PAIR_DIAGONAL: u64 = 5;
    pub const PAIR_SHELL: u64 = 6;
    pub const CENTERING: u64 = 7;
    pub const SYNTHETIC: u64 = 8;
    pub const PERTURB: u64 = 9;
    pub const INSTANCE: u64 = 10;
    pub const THINNING: u64 = 11;

    /// Combines a purpose tag with a sub-stream number.
    pub const fn with(purpose: u64, sub: u64) -> u64 {
        (purpose << 40) ^ sub
    }
}

// Each replicate owns 2^36 words of the keystream.
const REPLICATE_SHIFT: u32 = 36;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, stream tag, replicate index)`.
pub fn rng_for(seed: u64, stream_tag: u64, replicate: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_tag);
    rng.set_word_pos((replicate as u128) << REPLICATE_SHIFT);
    rng
}

/// Derives a child seed, used when a whole sub-experiment needs its own key.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut s = seed ^ salt.rotate_left(17);
    splitmix64(&mut s)
}
