//! Named, deterministic random substreams.
//!
//! Every stochastic unit (one word in one scan, one document in one scan, the
//! hyperparameter block, ...) draws from its own stream keyed by the master
//! seed and the unit's coordinates, so results do not depend on thread count
//! or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    SimWord = 1,
    SimDoc = 2,
    WordBlock = 3,
    DocBlock = 4,
    Hyper = 5,
    Check = 6,
    Test = 7,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, stream: Stream, a: u64, b: u64) -> StreamRng {
    let mut state = seed;
    let mut mix = splitmix64(&mut state);
    for v in [stream as u64, a, b] {
        state ^= v.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        mix ^= splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).wrapping_add(mix).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
