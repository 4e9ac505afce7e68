//! Stable seed derivation.
//!
//! Seeds must not depend on the standard library's hasher (which is allowed to
//! change between releases), so this mixes bytes with FNV-1a and finishes with
//! the SplitMix64 finalizer.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in base.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix(h)
}

/// Derive a child seed from a base seed, a label and an index.
pub fn derive_indexed_seed(base: u64, label: &str, index: u64) -> u64 {
    splitmix(derive_seed(base, label) ^ splitmix(index))
}
