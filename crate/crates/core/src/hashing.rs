//! Stable, platform-independent 64-bit hashing used for feature buckets,
//! projection signs and seed derivation.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

fn fnv1a_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer; a bijection on u64 with good avalanche.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 generator. Used where a bit stream must be identical on every
/// platform and across crate upgrades.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }
}

/// `hash64(global_seed, stage, community)`: FNV-1a over the little-endian
/// seed, the stage name, a 0xff separator and the community id, finished
/// with [`mix64`]. Each (stage, community) pair gets an independent seed.
pub fn stage_seed(global_seed: u64, stage: &str, community_id: &str) -> u64 {
    let mut h = fnv1a_extend(FNV_OFFSET, &global_seed.to_le_bytes());
    h = fnv1a_extend(h, stage.as_bytes());
    h = fnv1a_extend(h, &[0xff]);
    h = fnv1a_extend(h, community_id.as_bytes());
    mix64(h)
}
