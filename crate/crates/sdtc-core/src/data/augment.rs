//! Box handling, cropping, and train-time augmentation.
//!
//! One transform is drawn per sequence and applied identically to every
//! frame, preserving the temporal correspondence the model learns from.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::skeleton::flip_index;
use super::synth::{Image, SequenceSample};
use crate::error::{Error, Result};
use crate::loss::JointSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, w: f64, h: f64) -> Result<Self> {
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::contract(format!(
                "bbox extents must be positive, got {w}x{h}"
            )));
        }
        Ok(BBox { x0, y0, w, h })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x0 + self.w / 2.0, self.y0 + self.h / 2.0)
    }
}

/// Grow width and height by `factor`, keeping the center fixed. No clipping
/// here; the crop handles frame bounds.
pub fn enlarge_bbox(b: &BBox, factor: f64) -> Result<BBox> {
    if b.w <= 0.0 || b.h <= 0.0 {
        return Err(Error::contract("bbox extents must be positive"));
    }
    let (cx, cy) = b.center();
    let w = b.w * (1.0 + factor);
    let h = b.h * (1.0 + factor);
    BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
}

/// Crop the same box from every frame and resize bilinearly to
/// (out_h, out_w). Joint coordinates transform accordingly; joints landing
/// outside the crop are marked invisible.
pub fn crop_resize(
    sample: &SequenceSample,
    bbox: &BBox,
    out_h: usize,
    out_w: usize,
) -> Result<SequenceSample> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::contract("crop output extents must be positive"));
    }
    let sx = bbox.w / out_w as f64;
    let sy = bbox.h / out_h as f64;
    let mut frames = Vec::with_capacity(sample.frames.len());
    let mut joints = Vec::with_capacity(sample.joints.len());
    for (img, js) in sample.frames.iter().zip(&sample.joints) {
        let mut out = Image::new(out_h, out_w);
        for y in 0..out_h {
            for x in 0..out_w {
                // half-pixel centers in both spaces
                let src_x = bbox.x0 + (x as f64 + 0.5) * sx - 0.5;
                let src_y = bbox.y0 + (y as f64 + 0.5) * sy - 0.5;
                for c in 0..3 {
                    out.set(c, y, x, img.sample(c, src_x, src_y));
                }
            }
        }
        let mut coords = Vec::with_capacity(js.len());
        let mut visible = Vec::with_capacity(js.len());
        for (k, &[jx, jy]) in js.coords.iter().enumerate() {
            let cx = (jx as f64 - bbox.x0 + 0.5) / sx - 0.5;
            let cy = (jy as f64 - bbox.y0 + 0.5) / sy - 0.5;
            let inside = cx >= 0.0 && cy >= 0.0 && cx < out_w as f64 && cy < out_h as f64;
            coords.push([cx as f32, cy as f32]);
            visible.push(js.visible[k] && inside);
        }
        frames.push(out);
        joints.push(JointSet::new(coords, visible)?);
    }
    Ok(SequenceSample {
        frames,
        joints,
        keyframe: sample.keyframe,
        seed: sample.seed,
    })
}

/// Augmentation parameters shared by all frames of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub scale: f64,
    /// Rotation about the crop center, radians.
    pub rotation: f64,
    pub flip: bool,
    /// Truncation: crop-shift in pixels, may cut body parts.
    pub shift: (f64, f64),
}

impl AugmentParams {
    pub const SCALE_RANGE: (f64, f64) = (0.65, 1.35);
    pub const ROTATION_RANGE_DEG: f64 = 45.0;
    pub const SHIFT_FRACTION: f64 = 0.25;

    pub fn identity() -> Self {
        AugmentParams {
            scale: 1.0,
            rotation: 0.0,
            flip: false,
            shift: (0.0, 0.0),
        }
    }

    pub fn sample(rng: &mut ChaCha8Rng, crop_h: usize, crop_w: usize) -> Self {
        let rot_max = Self::ROTATION_RANGE_DEG.to_radians();
        AugmentParams {
            scale: rng.gen_range(Self::SCALE_RANGE.0..Self::SCALE_RANGE.1),
            rotation: rng.gen_range(-rot_max..rot_max),
            flip: rng.gen::<f64>() < 0.5,
            shift: (
                rng.gen_range(-Self::SHIFT_FRACTION..Self::SHIFT_FRACTION) * crop_w as f64,
                rng.gen_range(-Self::SHIFT_FRACTION..Self::SHIFT_FRACTION) * crop_h as f64,
            ),
        }
    }
}

/// Forward map of a point under the augmentation (flip, then rotate+scale
/// about the crop center, then shift).
fn map_point(p: [f64; 2], params: &AugmentParams, w: usize, h: usize) -> [f64; 2] {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let x0 = if params.flip {
        w as f64 - 1.0 - p[0]
    } else {
        p[0]
    };
    let y0 = p[1];
    let (dx, dy) = (x0 - cx, y0 - cy);
    let (sin, cos) = params.rotation.sin_cos();
    let s = params.scale;
    [
        cx + s * (cos * dx - sin * dy) + params.shift.0,
        cy + s * (sin * dx + cos * dy) + params.shift.1,
    ]
}

/// Apply one shared similarity transform to every frame of the sequence.
/// Out-of-frame joints become invisible; flipped sequences swap left/right
/// joint labels.
pub fn augment(sample: &SequenceSample, params: &AugmentParams) -> Result<SequenceSample> {
    let (h, w) = (sample.frames[0].h, sample.frames[0].w);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = params.rotation.sin_cos();
    let s = params.scale;

    let mut frames = Vec::with_capacity(sample.frames.len());
    let mut joints = Vec::with_capacity(sample.joints.len());
    for (img, js) in sample.frames.iter().zip(&sample.joints) {
        let mut out = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                // invert: unshift, unrotate/unscale, unflip
                let dx = x as f64 - params.shift.0 - cx;
                let dy = y as f64 - params.shift.1 - cy;
                let ux = (cos * dx + sin * dy) / s + cx;
                let uy = (-sin * dx + cos * dy) / s + cy;
                let sx = if params.flip { w as f64 - 1.0 - ux } else { ux };
                for c in 0..3 {
                    out.set(c, y, x, img.sample(c, sx, uy));
                }
            }
        }

        let k = js.len();
        let mut coords = vec![[0.0f32; 2]; k];
        let mut visible = vec![false; k];
        for src in 0..k {
            let dst = if params.flip { flip_index(src) } else { src };
            let p = map_point(
                [js.coords[src][0] as f64, js.coords[src][1] as f64],
                params,
                w,
                h,
            );
            let inside = p[0] >= 0.0 && p[1] >= 0.0 && p[0] < w as f64 && p[1] < h as f64;
            coords[dst] = [p[0] as f32, p[1] as f32];
            visible[dst] = js.visible[src] && inside;
        }
        frames.push(out);
        joints.push(JointSet::new(coords, visible)?);
    }
    Ok(SequenceSample {
        frames,
        joints,
        keyframe: sample.keyframe,
        seed: sample.seed,
    })
}
