//! Deterministic sub-seeds, so every random stream in a run hangs off the
//! one configured seed.

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for the stream named `tag` under `base`.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    // splitmix64 finalizer over the mixed inputs
    let mut z = base ^ fnv1a(tag.as_bytes()).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
