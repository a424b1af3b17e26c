//! Synthetic pose-video data: generation, cropping, augmentation, and
//! dataset persistence.

pub mod augment;
pub mod io;
pub mod skeleton;
pub mod synth;

pub use augment::{augment, crop_resize, enlarge_bbox, AugmentParams, BBox};
pub use io::{dataset_checksum, parse_dataset, read_dataset, write_dataset};
pub use synth::{generate_sequence, sequence_bbox, CorruptionSpec, GenConfig, Image, SequenceSample};

use crate::error::Result;

/// Standard pipeline from scene to training crop: generate, take the
/// sequence bbox enlarged by 25%, crop and resize.
pub fn generate_crop_sample(
    seed: u64,
    cfg: &GenConfig,
    crop_h: usize,
    crop_w: usize,
) -> Result<SequenceSample> {
    let scene = generate_sequence(seed, cfg)?;
    let (x0, y0, x1, y1) = sequence_bbox(&scene);
    let bbox = BBox::new(x0, y0, x1 - x0, y1 - y0)?;
    let enlarged = enlarge_bbox(&bbox, 0.25)?;
    crop_resize(&scene, &enlarged, crop_h, crop_w)
}
