//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed. Child streams are
//! derived by hashing `(seed, tag, index)` with SplitMix64 and feeding the result
//! to a ChaCha8 generator, so replications, folds and sources get independent
//! streams that can be regenerated in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child of `seed` within the namespace `tag`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index))
}

/// Replication seeds: `master ^ hash(r)`, so a coverage run can be resumed at
/// any replication index.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    master ^ splitmix64(replication)
}
