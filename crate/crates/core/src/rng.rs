//! Per-shot random streams.
//!
//! ChaCha is a counter-based generator: the key comes from the run seed and a
//! domain tag, the 64-bit stream id is the shot index. Any shot can be
//! regenerated on its own, so results do not depend on how shots are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream families drawn from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Frames = 0x5354_4f4b_4553,
    Herald = 0x4845_5241_4c44,
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(domain as u64)));
    rng.set_stream(index);
    rng
}

/// Seed for the `k`-th sub-run of a run, e.g. one steering fiber.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    mix(seed ^ mix(k.wrapping_add(0x5355_4252_554e)))
}
