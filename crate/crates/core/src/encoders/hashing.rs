//! Seeded hashing used by the deterministic encoders.
//!
//! FNV-1a over the input bytes followed by a SplitMix64 finalizer. Stable
//! across platforms and toolchains, unlike `std`'s `DefaultHasher`.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(state, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hash of `(seed, text, index)`.
pub fn seeded_hash(seed: u64, text: &str, index: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a(h, text.as_bytes());
    // separator so ("ab", 1) and ("a", ..) style inputs cannot collide trivially
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &index.to_le_bytes());
    splitmix64(h)
}

/// Maps a hash to `[-1, 1]` using its top 53 bits.
pub(crate) fn unit_interval_signed(h: u64) -> f64 {
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * u - 1.0
}
