//! Dataset persistence.
//!
//! Layout (all integers little-endian):
//!   magic "SDTD", version u32, sample count u32, then per sample:
//!   T u32, H u32, W u32, K u32, seed u64,
//!   frames as T*3*H*W bytes (8-bit quantized),
//!   joints as T*K*2 f32 (x, y),
//!   visibility as T*K bytes (0/1).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::synth::{Image, SequenceSample};
use crate::error::{Error, Result};
use crate::loss::JointSet;

pub const DATASET_MAGIC: &[u8; 4] = b"SDTD";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(samples: &[SequenceSample], path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u32).to_le_bytes())?;
    for sample in samples {
        let t = sample.frames.len();
        let (h, wd) = (sample.frames[0].h, sample.frames[0].w);
        let k = sample.joints[0].len();
        w.write_all(&(t as u32).to_le_bytes())?;
        w.write_all(&(h as u32).to_le_bytes())?;
        w.write_all(&(wd as u32).to_le_bytes())?;
        w.write_all(&(k as u32).to_le_bytes())?;
        w.write_all(&sample.seed.to_le_bytes())?;
        for frame in &sample.frames {
            let bytes: Vec<u8> = frame
                .data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            w.write_all(&bytes)?;
        }
        for js in &sample.joints {
            for &[x, y] in &js.coords {
                w.write_all(&x.to_le_bytes())?;
                w.write_all(&y.to_le_bytes())?;
            }
        }
        for js in &sample.joints {
            let bytes: Vec<u8> = js.visible.iter().map(|&v| v as u8).collect();
            w.write_all(&bytes)?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<SequenceSample>> {
    let file = File::open(path)?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes)?;
    parse_dataset(&bytes)
}

pub fn parse_dataset(bytes: &[u8]) -> Result<Vec<SequenceSample>> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {DATASET_MAGIC:?}"),
        });
    }
    let version = c.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let count = c.u32("sample count")? as usize;
    let mut samples = Vec::with_capacity(count);
    for si in 0..count {
        let t = c.u32("T")? as usize;
        let h = c.u32("H")? as usize;
        let w = c.u32("W")? as usize;
        let k = c.u32("K")? as usize;
        let seed = c.u64("seed")?;
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::Parse {
                offset: c.pos as u64,
                message: format!("sample {si} has empty extents ({t}, {h}, {w})"),
            });
        }
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let raw = c.take(3 * h * w, "frame pixels")?;
            frames.push(Image {
                h,
                w,
                data: raw.iter().map(|&b| b as f32 / 255.0).collect(),
            });
        }
        let mut coords = vec![Vec::with_capacity(k); t];
        for frame_coords in coords.iter_mut() {
            for _ in 0..k {
                let x = c.f32("joint x")?;
                let y = c.f32("joint y")?;
                frame_coords.push([x, y]);
            }
        }
        let mut joints = Vec::with_capacity(t);
        for frame_coords in coords {
            let raw = c.take(k, "visibility")?;
            let visible = raw.iter().map(|&b| b != 0).collect();
            joints.push(JointSet::new(frame_coords, visible)?);
        }
        samples.push(SequenceSample {
            frames,
            joints,
            keyframe: t / 2,
            seed,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Parse {
            offset: c.pos as u64,
            message: format!("{} trailing bytes after last sample", bytes.len() - c.pos),
        });
    }
    Ok(samples)
}

/// FNV-1a digest of the file bytes.
pub fn dataset_checksum(path: &Path) -> Result<u64> {
    let file = File::open(path)?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes)?;
    Ok(crate::fnv1a64(&bytes))
}
