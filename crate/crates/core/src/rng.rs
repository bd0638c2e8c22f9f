//! Counter-based random substreams.
//!
//! Every independent unit of work (a scan point, a replica, a transmitted
//! bit) gets its own generator derived from `(seed, domain, index)`, so the
//! result never depends on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates substreams used by different subsystems with the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    ScanPoint = 1,
    Bit = 2,
    RfPhase = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one unit of work.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(domain as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Substream keyed by two indices, e.g. (replica, point).
pub fn substream2(seed: u64, domain: Domain, outer: u64, inner: u64) -> ChaCha8Rng {
    substream(splitmix64(seed ^ outer.rotate_left(17)), domain, inner)
}
