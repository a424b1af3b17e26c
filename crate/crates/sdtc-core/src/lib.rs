//! SDTC: video human pose estimation from masked semantic motion encoding
//! and spatial-motion mutual learning, over synthetic pose-video data.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors with reverse-mode differentiation
//! - [`nn`]: parameter store and neural building blocks
//! - [`mlsme`]: multi-level semantic motion encoder (tube/frame masking,
//!   patch- and frame-level encoders, reconstruction decoder)
//! - [`smml`]: spatial-motion mutual learning (self-refinement,
//!   cross-attention propagation, adaptive gated fusion, detection head)
//! - [`loss`]: heatmap targets, training losses, keypoint accuracy, and the
//!   finite-difference gradient oracle
//! - [`data`]: synthetic articulated-figure sequences, augmentation, and
//!   dataset persistence
//! - [`model`]: the assembled network
//! - [`train`]: AdamW, LR schedule, training/evaluation loops, checkpoints
//! - [`config`]: every tunable knob, addressable by dotted key

pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod mlsme;
pub mod model;
pub mod nn;
pub mod render;
pub mod smml;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

/// Deterministic seed derivation: fold tags into a base seed with splitmix64.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut state = splitmix(base);
    for &t in tags {
        state = splitmix(state ^ t.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    state
}

/// FNV-1a 64-bit hash, used for stable name-derived seeds and file checksums.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
