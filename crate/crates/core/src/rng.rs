//! Counter-derived random streams.
//!
//! Every replicate gets its own ChaCha stream keyed by `(master seed, purpose)`
//! and selected by the replicate index, so results never depend on how work
//! is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinct stream families so that, e.g., field noise and rotation draws under
/// the same master seed never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Field = 1,
    Sphere = 2,
    Rotation = 3,
    Tube = 4,
    Poincare = 5,
    Kff = 6,
    Euclid = 7,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(purpose as u64)));
    rng.set_stream(index);
    rng
}

/// Seed for a nested generator (e.g. one Poincaré dimension inside an experiment).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(tag)))
}
