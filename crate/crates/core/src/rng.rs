//! Seed derivation for named, independent random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the name, mixed with the parent seed through splitmix64.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn indexed_seed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(substream_seed(seed, name) ^ splitmix64(index.wrapping_add(1)))
}

pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, name))
}

pub fn indexed_substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(indexed_seed(seed, name, index))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_differ_by_name_and_index() {
        assert_ne!(substream_seed(7, "forest"), substream_seed(7, "speed"));
        assert_ne!(indexed_seed(7, "tree", 0), indexed_seed(7, "tree", 1));
        assert_eq!(indexed_seed(7, "tree", 3), indexed_seed(7, "tree", 3));
    }
}
