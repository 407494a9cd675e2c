//! Counter-keyed random streams: every `(seed, domain, i, j)` gets its own
//! ChaCha stream, so instances do not depend on generation order or on `n`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Domain {
    Rotation = 0x524f_5441,
    Noise = 0x4e4f_4953,
    Probe = 0x5052_4f42,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: Domain, i: usize, j: usize) -> ChaCha8Rng {
    let key = splitmix(seed ^ splitmix(domain as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(((i as u64) << 32) | (j as u64 & 0xFFFF_FFFF));
    rng
}
