//! Stable seed derivation. Results must not depend on the toolchain, so
//! std's randomized hasher is avoided.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes and the little-endian parts, finished with
/// splitmix64 and xored onto `base`.
pub fn derive_seed(base: u64, label: &str, parts: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    };
    for b in label.bytes() {
        feed(b);
    }
    feed(0xff);
    for p in parts {
        for b in p.to_le_bytes() {
            feed(b);
        }
    }
    base ^ splitmix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values_are_stable() {
        // pinned so that a change of hashing silently reshuffling every
        // experiment shows up here
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        let a = derive_seed(0, "scene", &[1, 2]);
        assert_eq!(a, derive_seed(0, "scene", &[1, 2]));
        assert_ne!(a, derive_seed(0, "scene", &[2, 1]));
        assert_ne!(a, derive_seed(0, "noise", &[1, 2]));
        assert_eq!(derive_seed(5, "scene", &[1, 2]), a ^ 5);
    }
}
