//! Named random sub-streams derived from a single master seed.
//!
//! Every stage draws from its own stream (`"init"`, `"sampling"`, ...), so
//! changing how much randomness one stage consumes never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream `name` indexed by `path`.
pub fn derive_seed(master: u64, name: &str, path: &[u64]) -> u64 {
    let mut h = splitmix(master);
    for b in name.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    for &p in path {
        h = splitmix(h ^ p.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    h
}

pub fn substream(master: u64, name: &str, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, name, path))
}
