//! Counter-based random streams.
//!
//! Every random quantity in the toolkit is drawn from a ChaCha8 stream keyed
//! by `(master seed, stream id)`. Stream ids are derived from a structured
//! [`StreamKey`], so a given (purpose, rung, replication, player) always sees
//! the same numbers no matter which thread runs it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct purposes never share numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u64)]
pub enum Purpose {
    Initial = 1,
    Brownian = 2,
    Jumps = 3,
    PushForward = 4,
    Reference = 5,
    Bootstrap = 6,
    OpenLoop = 7,
    Sampling = 8,
    Damping = 9,
    Probe = 10,
}

/// Structured identity of one random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub purpose: Purpose,
    /// Experiment context, e.g. the ladder rung `n` or a Picard iteration tag.
    pub context: u64,
    pub replication: u64,
    pub path: u64,
}

impl StreamKey {
    pub fn new(purpose: Purpose, context: u64, replication: u64, path: u64) -> Self {
        Self {
            purpose,
            context,
            replication,
            path,
        }
    }

    /// 64-bit stream id obtained by chaining splitmix64 over the key fields.
    pub fn stream_id(&self) -> u64 {
        let mut h = splitmix64(self.purpose as u64);
        h = splitmix64(h ^ self.context);
        h = splitmix64(h ^ self.replication.rotate_left(17));
        splitmix64(h ^ self.path.rotate_left(41))
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Opens the stream `key` under `master`.
pub fn stream(master: u64, key: StreamKey) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(key.stream_id());
    rng
}
