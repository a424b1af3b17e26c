//! Multi-Level Semantic Motion Encoder.
//!
//! Training masks feature tokens twice — spatial tubes shared across all
//! frames, then whole frames — and runs masked tokens through a patch-level
//! and a frame-level motion encoder of identical architecture. A small
//! decoder reconstructs feature contexts and pose heatmaps for the masked
//! slots; the two encoder outputs are fused by elementwise addition into the
//! motion representation. Inference applies no masking.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{scoped, Bound, Ffn, Init, Linear, Mhsa, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// Spatial token mask shared by every frame of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TubeMask {
    pub masked: Vec<bool>,
}

impl TubeMask {
    /// Uniformly random subset of `round(r * l)` spatial indices.
    pub fn sample(l: usize, r: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::contract(format!(
                "tube mask ratio must be in [0, 1), got {r}"
            )));
        }
        let count = (r * l as f64).round() as usize;
        Ok(TubeMask {
            masked: sample_subset(l, count, rng),
        })
    }

    pub fn none(l: usize) -> Self {
        TubeMask {
            masked: vec![false; l],
        }
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Whole-frame mask; at least one frame always stays unmasked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMask {
    pub masked: Vec<bool>,
}

impl FrameMask {
    /// `floor(r_f * t)` random frames. With `protect`, that frame index is
    /// never selected.
    pub fn sample(
        t: usize,
        r_f: f64,
        protect: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if r_f < 0.0 {
            return Err(Error::contract(format!(
                "frame mask ratio must be nonnegative, got {r_f}"
            )));
        }
        let count = (r_f * t as f64).floor() as usize;
        if count >= t {
            return Err(Error::contract(format!(
                "frame mask would cover all {t} frames (ratio {r_f})"
            )));
        }
        let candidates: Vec<usize> = (0..t).filter(|&i| Some(i) != protect).collect();
        if count > candidates.len() {
            return Err(Error::contract(format!(
                "frame mask needs {count} of {} unprotected frames",
                candidates.len()
            )));
        }
        let chosen = sample_subset(candidates.len(), count, rng);
        let mut masked = vec![false; t];
        for (slot, &on) in candidates.iter().zip(&chosen) {
            masked[*slot] = on;
        }
        Ok(FrameMask { masked })
    }

    pub fn none(t: usize) -> Self {
        FrameMask {
            masked: vec![false; t],
        }
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// `count` distinct indices out of `0..n` via partial Fisher-Yates.
fn sample_subset(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut mask = vec![false; n];
    for i in 0..count {
        let j = i + rng.gen_range(0..n - i);
        pool.swap(i, j);
        mask[pool[i]] = true;
    }
    mask
}

/// Both masks drawn for one training forward pass.
#[derive(Debug, Clone)]
pub struct MaskPair {
    pub tube: TubeMask,
    pub frame: FrameMask,
}

/// Temporal attention, spatial attention, then FFN, each with a residual.
pub struct DividedBlock {
    temporal: Mhsa,
    spatial: Mhsa,
    ffn: Ffn,
}

impl DividedBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        heads: usize,
        expansion: usize,
    ) -> Result<Self> {
        Ok(DividedBlock {
            temporal: Mhsa::new(store, &scoped(prefix, "temporal"), c, heads)?,
            spatial: Mhsa::new(store, &scoped(prefix, "spatial"), c, heads)?,
            ffn: Ffn::new(store, &scoped(prefix, "ffn"), c, expansion)?,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, tokens: &Tensor<S>) -> Result<Tensor<S>> {
        let (t, l, c) = dims3(tokens)?;
        // temporal attention: tokens at the same spatial location across frames
        let mut cols = Vec::with_capacity(l);
        for li in 0..l {
            let col = tokens.slice(1, li, 1)?.reshape(&[t, c])?;
            cols.push(self.temporal.forward(p, &col)?.reshape(&[t, 1, c])?);
        }
        let refs: Vec<&Tensor<S>> = cols.iter().collect();
        let x = tokens.add(&Tensor::concat(&refs, 1)?)?;
        // spatial attention: tokens within each frame
        let mut rows = Vec::with_capacity(t);
        for ti in 0..t {
            let frame = x.slice(0, ti, 1)?.reshape(&[l, c])?;
            rows.push(self.spatial.forward(p, &frame)?.reshape(&[1, l, c])?);
        }
        let refs: Vec<&Tensor<S>> = rows.iter().collect();
        let x = x.add(&Tensor::concat(&refs, 0)?)?;
        x.add(&self.ffn.forward(p, &x)?)
    }
}

/// Self-attention over all T*L tokens of a sequence at once.
pub fn joint_space_time_attention<S: Scalar>(
    mhsa: &Mhsa,
    p: &Bound<S>,
    tokens: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (t, l, c) = dims3(tokens)?;
    let flat = tokens.reshape(&[t * l, c])?;
    mhsa.forward(p, &flat)?.reshape(&[t, l, c])
}

/// One joint space-time attention layer followed by divided space-time
/// attention blocks. Used for both the patch-level and frame-level encoders.
pub struct MotionEncoder {
    joint: Mhsa,
    divided: Vec<DividedBlock>,
}

impl MotionEncoder {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        heads: usize,
        expansion: usize,
        n_divided: usize,
    ) -> Result<Self> {
        let joint = Mhsa::new(store, &scoped(prefix, "joint"), c, heads)?;
        let mut divided = Vec::with_capacity(n_divided);
        for i in 0..n_divided {
            divided.push(DividedBlock::new(
                store,
                &scoped(prefix, &format!("divided{i}")),
                c,
                heads,
                expansion,
            )?);
        }
        Ok(MotionEncoder { joint, divided })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, tokens: &Tensor<S>) -> Result<Tensor<S>> {
        let mut x = joint_space_time_attention(&self.joint, p, tokens)?;
        for block in &self.divided {
            x = block.forward(p, &x)?;
        }
        Ok(x)
    }
}

/// Reconstructed feature contexts and pose heatmap sequence.
pub struct Reconstruction<S: Scalar> {
    /// (T, L, C)
    pub contexts: Tensor<S>,
    /// (T, K, H', W')
    pub pose_seq: Tensor<S>,
}

/// Two self-attention layers plus separate MLP heads for context and pose
/// reconstruction. The pose head emits per-token heatmap patches which are
/// reassembled into per-frame (K, H', W') maps.
pub struct MotionDecoder {
    attn1: Mhsa,
    attn2: Mhsa,
    ctx_hidden: Linear,
    ctx_out: Linear,
    pose_hidden: Linear,
    pose_out: Linear,
    grid: (usize, usize),
    patch_out: (usize, usize),
    k_joints: usize,
}

impl MotionDecoder {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        heads: usize,
        grid: (usize, usize),
        patch_out: (usize, usize),
        k_joints: usize,
    ) -> Result<Self> {
        let pose_dim = k_joints * patch_out.0 * patch_out.1;
        Ok(MotionDecoder {
            attn1: Mhsa::new(store, &scoped(prefix, "attn1"), c, heads)?,
            attn2: Mhsa::new(store, &scoped(prefix, "attn2"), c, heads)?,
            ctx_hidden: Linear::new(store, &scoped(prefix, "ctx_hidden"), c, c)?,
            ctx_out: Linear::new(store, &scoped(prefix, "ctx_out"), c, c)?,
            pose_hidden: Linear::new(store, &scoped(prefix, "pose_hidden"), c, c)?,
            pose_out: Linear::new(store, &scoped(prefix, "pose_out"), c, pose_dim)?,
            grid,
            patch_out,
            k_joints,
        })
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &Bound<S>,
        tokens: &Tensor<S>,
    ) -> Result<Reconstruction<S>> {
        let (t, l, c) = dims3(tokens)?;
        let (rows, cols) = self.grid;
        if l != rows * cols {
            return Err(Error::dimension(
                "motion_decoder",
                format!("token count {l} does not match grid {rows}x{cols}"),
            ));
        }
        let mut x = tokens.reshape(&[t * l, c])?;
        x = self.attn1.forward(p, &x)?;
        x = self.attn2.forward(p, &x)?;

        let ctx = self
            .ctx_out
            .forward(p, &self.ctx_hidden.forward(p, &x)?.gelu()?)?
            .reshape(&[t, l, c])?;

        let pose = self
            .pose_out
            .forward(p, &self.pose_hidden.forward(p, &x)?.gelu()?)?;
        let (ph, pw) = self.patch_out;
        let k = self.k_joints;
        let (h_out, w_out) = (rows * ph, cols * pw);
        // per-token patches -> (T, K, H', W')
        let mut map = Vec::with_capacity(t * k * h_out * w_out);
        for ti in 0..t {
            for ki in 0..k {
                for y in 0..h_out {
                    for x_ in 0..w_out {
                        let li = (y / ph) * cols + x_ / pw;
                        let (py, px) = (y % ph, x_ % pw);
                        map.push((ti * l + li) * (k * ph * pw) + ki * ph * pw + py * pw + px);
                    }
                }
            }
        }
        let pose_seq = pose.gather(Rc::new(map), &[t, k, h_out, w_out])?;
        Ok(Reconstruction {
            contexts: ctx,
            pose_seq,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MlsmeConfig {
    pub c: usize,
    pub heads: usize,
    pub expansion: usize,
    pub divided_blocks: usize,
    pub mask_ratio: f64,
    pub frame_mask_ratio: f64,
    pub keyframe_maskable: bool,
    /// Frame-level encoder on top of the patch-level one.
    pub frame_level: bool,
    /// Masked reconstruction machinery (mask tokens + decoder). Off for the
    /// plain-encoder baseline, which never masks.
    pub reconstruction: bool,
    /// Token grid (rows, cols); L = rows * cols.
    pub grid: (usize, usize),
    /// Heatmap pixels each token reconstructs, (ph, pw).
    pub patch_out: (usize, usize),
    pub k_joints: usize,
    pub keyframe: usize,
    pub seq_len: usize,
}

/// Output of one MLSME pass: the fused motion representation, plus the
/// reconstruction pair in train mode.
pub struct MlsmeOutput<S: Scalar> {
    /// (T, L, C), `patch_level + frame_level`.
    pub motion: Tensor<S>,
    pub patch_level: Tensor<S>,
    pub frame_level: Option<Tensor<S>>,
    pub reconstruction: Option<Reconstruction<S>>,
}

pub struct Mlsme {
    pub cfg: MlsmeConfig,
    patch_encoder: MotionEncoder,
    frame_encoder: Option<MotionEncoder>,
    decoder: Option<MotionDecoder>,
    tube_token: String,
    frame_token: String,
}

impl Mlsme {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        cfg: MlsmeConfig,
    ) -> Result<Self> {
        let patch_encoder = MotionEncoder::new(
            store,
            &scoped(prefix, "patch_enc"),
            cfg.c,
            cfg.heads,
            cfg.expansion,
            cfg.divided_blocks,
        )?;
        let frame_encoder = if cfg.frame_level {
            Some(MotionEncoder::new(
                store,
                &scoped(prefix, "frame_enc"),
                cfg.c,
                cfg.heads,
                cfg.expansion,
                cfg.divided_blocks,
            )?)
        } else {
            None
        };
        let (decoder, tube_token, frame_token) = if cfg.reconstruction {
            (
                Some(MotionDecoder::new(
                    store,
                    &scoped(prefix, "decoder"),
                    cfg.c,
                    cfg.heads,
                    cfg.grid,
                    cfg.patch_out,
                    cfg.k_joints,
                )?),
                store.add(
                    &scoped(prefix, "tube_token"),
                    &[cfg.c],
                    Init::Uniform { a: 0.02 },
                )?,
                store.add(
                    &scoped(prefix, "frame_token"),
                    &[cfg.c],
                    Init::Uniform { a: 0.02 },
                )?,
            )
        } else {
            (None, String::new(), String::new())
        };
        Ok(Mlsme {
            cfg,
            patch_encoder,
            frame_encoder,
            decoder,
            tube_token,
            frame_token,
        })
    }

    /// Fresh masks for one training step. The frame mask is empty when the
    /// frame-level encoder is disabled (nothing would consume it).
    pub fn sample_masks(&self, rng: &mut ChaCha8Rng) -> Result<MaskPair> {
        if !self.cfg.reconstruction {
            return Err(Error::contract(
                "masks requested but reconstruction is disabled",
            ));
        }
        let l = self.cfg.grid.0 * self.cfg.grid.1;
        let tube = TubeMask::sample(l, self.cfg.mask_ratio, rng)?;
        let frame = if self.cfg.frame_level {
            let protect = if self.cfg.keyframe_maskable {
                None
            } else {
                Some(self.cfg.keyframe)
            };
            FrameMask::sample(self.cfg.seq_len, self.cfg.frame_mask_ratio, protect, rng)?
        } else {
            FrameMask::none(self.cfg.seq_len)
        };
        Ok(MaskPair { tube, frame })
    }

    /// Replace tube-masked spatial slots with the learnable token, in every
    /// frame. Unmasked slots are copied bitwise.
    pub fn apply_tube_mask<S: Scalar>(
        &self,
        p: &Bound<S>,
        tokens: &Tensor<S>,
        mask: &TubeMask,
    ) -> Result<Tensor<S>> {
        tokens.masked_fill_axis(1, &mask.masked, p.get(&self.tube_token)?)
    }

    /// Replace every token of the masked frames with the learnable token.
    pub fn apply_frame_mask<S: Scalar>(
        &self,
        p: &Bound<S>,
        tokens: &Tensor<S>,
        mask: &FrameMask,
    ) -> Result<Tensor<S>> {
        tokens.masked_fill_axis(0, &mask.masked, p.get(&self.frame_token)?)
    }

    /// Train mode passes `Some(masks)` and receives the reconstruction pair;
    /// inference passes `None` and performs no masking at all.
    pub fn forward<S: Scalar>(
        &self,
        p: &Bound<S>,
        tokens: &Tensor<S>,
        masks: Option<&MaskPair>,
    ) -> Result<MlsmeOutput<S>> {
        let patch_in = match masks {
            Some(m) => self.apply_tube_mask(p, tokens, &m.tube)?,
            None => tokens.clone(),
        };
        let patch_level = self.patch_encoder.forward(p, &patch_in)?;

        let frame_level = match &self.frame_encoder {
            Some(enc) => {
                let frame_in = match masks {
                    Some(m) => self.apply_frame_mask(p, &patch_level, &m.frame)?,
                    None => patch_level.clone(),
                };
                Some(enc.forward(p, &frame_in)?)
            }
            None => None,
        };

        let motion = match &frame_level {
            Some(f) => fuse_motion(&patch_level, f)?,
            None => patch_level.clone(),
        };

        let reconstruction = match masks {
            Some(_) => {
                let decoder = self.decoder.as_ref().ok_or_else(|| {
                    Error::contract("masked forward requires the reconstruction decoder")
                })?;
                let decoder_in = frame_level.as_ref().unwrap_or(&patch_level);
                Some(decoder.forward(p, decoder_in)?)
            }
            None => None,
        };

        Ok(MlsmeOutput {
            motion,
            patch_level,
            frame_level,
            reconstruction,
        })
    }
}

/// Elementwise addition of the patch- and frame-level motion features.
pub fn fuse_motion<S: Scalar>(patch: &Tensor<S>, frame: &Tensor<S>) -> Result<Tensor<S>> {
    if patch.shape() != frame.shape() {
        return Err(Error::dimension(
            "fuse_motion",
            format!("shapes differ: {} vs {}", patch.shape(), frame.shape()),
        ));
    }
    patch.add(frame)
}

fn dims3<S: Scalar>(t: &Tensor<S>) -> Result<(usize, usize, usize)> {
    let d = t.dims();
    if d.len() != 3 {
        return Err(Error::dimension(
            "sequence_tokens",
            format!("expected rank-3 (T, L, C), got {}", t.shape()),
        ));
    }
    Ok((d[0], d[1], d[2]))
}
