//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a master seed and a stream label, so results never depend on
//! the order in which independent jobs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives an independent seed for the named stream.
pub fn derive_seed(master: u64, stream: &str) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a(stream.as_bytes())))
}

pub fn rng_for(master: u64, stream: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream))
}
