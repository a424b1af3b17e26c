//! Qualitative output: PPM frames with skeleton overlays and PGM heatmaps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::skeleton::BONES;
use crate::data::synth::{draw_disc, draw_segment, Image};
use crate::data::SequenceSample;
use crate::error::Result;
use crate::loss::JointSet;
use crate::tensor::{Scalar, Tensor};

pub fn write_ppm(img: &Image, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{} {}\n255\n", img.w, img.h)?;
    let mut bytes = Vec::with_capacity(img.h * img.w * 3);
    for y in 0..img.h {
        for x in 0..img.w {
            for c in 0..3 {
                bytes.push((img.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Grayscale image normalized to the value range of `data`.
pub fn write_pgm(data: &[f32], h: usize, w: usize, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{w} {h}\n255\n")?;
    let max = data.iter().cloned().fold(f32::MIN, f32::max).max(1e-6);
    let min = data.iter().cloned().fold(f32::MAX, f32::min).min(0.0);
    let scale = 255.0 / (max - min).max(1e-6);
    let bytes: Vec<u8> = data
        .iter()
        .map(|&v| (((v - min) * scale).clamp(0.0, 255.0)) as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

const OVERLAY_BONE: [f32; 3] = [0.1, 1.0, 0.2];
const OVERLAY_JOINT: [f32; 3] = [1.0, 0.15, 0.1];
const OVERLAY_HIDDEN: [f32; 3] = [0.55, 0.55, 0.55];

/// Frame copy with the skeleton drawn on top: green bones between visible
/// joints, red discs on visible joints, gray on invisible ones.
pub fn overlay_skeleton(frame: &Image, joints: &JointSet) -> Image {
    let mut img = frame.clone();
    let s = img.h.min(img.w) as f64;
    for &(a, b) in BONES.iter() {
        if joints.visible[a] && joints.visible[b] {
            let pa = [joints.coords[a][0] as f64, joints.coords[a][1] as f64];
            let pb = [joints.coords[b][0] as f64, joints.coords[b][1] as f64];
            draw_segment(&mut img, pa, pb, (s * 0.01).max(0.6), OVERLAY_BONE);
        }
    }
    for (k, &[x, y]) in joints.coords.iter().enumerate() {
        let color = if joints.visible[k] {
            OVERLAY_JOINT
        } else {
            OVERLAY_HIDDEN
        };
        draw_disc(&mut img, [x as f64, y as f64], (s * 0.015).max(1.0), color);
    }
    img
}

/// Write the keyframe of each sample with its skeleton overlay.
pub fn render_keyframes(samples: &[SequenceSample], out_dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let img = overlay_skeleton(&sample.frames[sample.keyframe], &sample.joints[sample.keyframe]);
        let name = format!("sample_{i:04}_keyframe.ppm");
        write_ppm(&img, &out_dir.join(&name))?;
        written.push(name);
    }
    Ok(written)
}

/// Write each channel of a (K, H, W) heatmap tensor as a PGM file.
pub fn render_heatmaps<S: Scalar>(
    heatmaps: &Tensor<S>,
    names: &[&str],
    out_dir: &Path,
    stem: &str,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir)?;
    let dims = heatmaps.dims();
    let (k, h, w) = (dims[0], dims[1], dims[2]);
    let mut written = Vec::new();
    for ki in 0..k {
        let channel: Vec<f32> = heatmaps.data()[ki * h * w..(ki + 1) * h * w]
            .iter()
            .map(|v| v.to_f64() as f32)
            .collect();
        let label = names.get(ki).copied().unwrap_or("joint");
        let name = format!("{stem}_{ki:02}_{label}.pgm");
        write_pgm(&channel, h, w, &out_dir.join(&name))?;
        written.push(name);
    }
    Ok(written)
}
