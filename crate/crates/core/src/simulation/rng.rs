//! Seeded sub-streams.
//!
//! Every random draw comes from a ChaCha8 generator (`rand_chacha::ChaCha8Rng`)
//! whose 64-bit seed is derived from the tuple
//! `(scenario seed, stream kind, frame index, agent id)`:
//!
//! ```text
//! h = splitmix64(seed)
//! h = splitmix64(h ^ kind)
//! h = splitmix64(h ^ frame)
//! h = splitmix64(h ^ fnv1a64(agent_id))
//! ```
//!
//! Streams are therefore independent of iteration order and thread count, and
//! adding an agent leaves the draws of every other agent untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Scene = 1,
    Agent = 2,
    CalibrationScene = 3,
    CalibrationAgent = 4,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(s: &str) -> u64 {
    s.bytes()
        .fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

pub fn stream_seed(seed: u64, kind: StreamKind, frame: u64, agent: &str) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ kind as u64);
    h = splitmix64(h ^ frame);
    splitmix64(h ^ fnv1a64(agent))
}

pub fn stream(seed: u64, kind: StreamKind, frame: u64, agent: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, kind, frame, agent))
}
