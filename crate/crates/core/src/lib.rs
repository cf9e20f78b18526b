//! Pretext-task transforms, verifiable rewards and GRPO, with a toy
//! simulator, a dataset builder and a scoring service.

pub mod dataset;
pub mod grammar;
pub mod grpo;
pub mod metrics;
pub mod pretext;
pub mod reward;
pub mod service;
pub mod toy;
pub mod transform;

/// Mixes a list of words into one seed (splitmix64 finalizer per word).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}
