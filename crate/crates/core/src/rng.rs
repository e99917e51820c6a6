//! Derivation of independent random streams from one master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed with a
//! 64-bit stream number packed as `trial << 32 | noise << 16 | policy << 8 | purpose`.
//! Streams never overlap, so a trial's truth and measurement noise do not
//! depend on which policy consumes them or on thread scheduling. The
//! simulator keys truth and noise by trial only (noise and policy fields 0),
//! so every noise level and policy sees the same truths and the same
//! standardized noise draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Truth = 1,
    Noise = 2,
    Policy = 3,
    Suggestion = 4,
}

pub fn stream_id(trial: u32, noise_index: u16, policy_index: u8, purpose: Purpose) -> u64 {
    (trial as u64) << 32 | (noise_index as u64) << 16 | (policy_index as u64) << 8 | purpose as u64
}

pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
