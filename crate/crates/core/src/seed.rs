//! Hierarchical seed derivation.
//!
//! Every random stream in an experiment is keyed by a path
//! `base → trial → episode → clone`, so adding an algorithm or a clone never
//! shifts the randomness seen by anything else.

/// One round of the SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` for the stream labelled `(tag, index)`.
pub fn derive(parent: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(parent ^ mix64(tag)).wrapping_add(mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Stream tags.
pub mod tag {
    pub const TRIAL: u64 = 1;
    pub const EPISODE: u64 = 2;
    pub const CLONE: u64 = 3;
    pub const CLONE_EPISODE: u64 = 4;
    pub const ENV: u64 = 5;
    pub const ORACLE: u64 = 6;
}
