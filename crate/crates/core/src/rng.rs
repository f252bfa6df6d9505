//! Named sub-seeds derived from one run seed, so each stage can be re-run on
//! its own and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 over the run seed mixed with an FNV-1a hash of `stage`.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stage_rng(seed: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_differ_and_repeat() {
        assert_eq!(derive_seed(7, "train"), derive_seed(7, "train"));
        assert_ne!(derive_seed(7, "train"), derive_seed(7, "ingest"));
        assert_ne!(derive_seed(7, "train"), derive_seed(8, "train"));
    }
}
