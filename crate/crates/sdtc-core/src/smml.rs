//! Spatial-Motion Mutual Learning.
//!
//! Token sequences from the spatial and motion paths are aggregated per
//! sequence into C x HW maps, refined within each modality via soft context
//! regions, exchanged across modalities with spatial-motion cross-attention,
//! and fused under sigmoid gates predicted per pixel and channel. A 3x3
//! detection head decodes the fused map into keyframe heatmaps.
//!
//! Simpler fusion baselines (elementwise addition, concat+conv) and
//! per-stage toggles are part of the module contract so ablations stay
//! runnable from configuration.

use crate::error::{Error, Result};
use crate::nn::{scoped, Bound, Conv2dLayer, Init, ParamStore};
use crate::tensor::{Scalar, Tensor};

pub const CHANNEL_NORM_EPS: f64 = 1e-5;

/// Axis the context-map softmax normalizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextAxis {
    /// Normalize across channels: every pixel's channel column sums to 1.
    Channel,
    /// Normalize across spatial positions (the OCR-style variant).
    Spatial,
}

/// Normalization used inside convolutional transforms (batch-of-one "BN").
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Per-channel statistics over spatial positions, learned affine.
    Channel,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Full mutual-learning pipeline.
    Smml,
    /// Elementwise addition of the aggregated maps.
    Add,
    /// Channel concat followed by a 1x1 conv.
    Conv,
}

#[derive(Debug, Clone)]
pub struct SmmlConfig {
    pub c: usize,
    pub seq_len: usize,
    /// Feature grid (rows, cols); HW = rows * cols.
    pub grid: (usize, usize),
    pub k_joints: usize,
    /// Output heatmap size (H', W').
    pub heatmap: (usize, usize),
    pub fusion: FusionMode,
    pub self_refine: bool,
    pub cross_propagate: bool,
    pub adaptive_fuse: bool,
    pub context_axis: ContextAxis,
    pub norm: NormKind,
}

/// 1x1 convolution over a (C, HW) map: per-pixel channel mixing.
struct Conv1x1 {
    w: String,
    b: String,
    c_in: usize,
}

impl Conv1x1 {
    fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        Ok(Conv1x1 {
            w: store.add(
                &scoped(prefix, "w"),
                &[c_out, c_in],
                Init::XavierUniform {
                    fan_in: c_in,
                    fan_out: c_out,
                },
            )?,
            b: store.add(&scoped(prefix, "b"), &[c_out], Init::Zeros)?,
            c_in,
        })
    }

    fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.shape().rank() != 2 || x.dims()[0] != self.c_in {
            return Err(Error::dimension(
                "conv1x1",
                format!("expected ({}, HW), got {}", self.c_in, x.shape()),
            ));
        }
        let w = p.get(&self.w)?;
        let b = p.get(&self.b)?;
        let c_out = w.dims()[0];
        w.matmul(x)?.add(&b.reshape(&[c_out, 1])?)
    }
}

/// Per-channel normalization over spatial positions with learned affine.
struct ChannelNorm {
    gamma: String,
    beta: String,
    kind: NormKind,
}

impl ChannelNorm {
    fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        kind: NormKind,
    ) -> Result<Self> {
        let (gamma, beta) = match kind {
            NormKind::Channel => (
                store.add(&scoped(prefix, "gamma"), &[c], Init::Ones)?,
                store.add(&scoped(prefix, "beta"), &[c], Init::Zeros)?,
            ),
            NormKind::None => (String::new(), String::new()),
        };
        Ok(ChannelNorm { gamma, beta, kind })
    }

    fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        match self.kind {
            NormKind::None => Ok(x.clone()),
            NormKind::Channel => {
                let c = x.dims()[0];
                let mean = x.mean_axis(1)?;
                let centered = x.sub(&mean)?;
                let var = centered.mul(&centered)?.mean_axis(1)?;
                let denom = var.add_scalar(S::from_f64(CHANNEL_NORM_EPS))?.sqrt()?;
                let normed = centered.div(&denom)?;
                let gamma = p.get(&self.gamma)?.reshape(&[c, 1])?;
                let beta = p.get(&self.beta)?.reshape(&[c, 1])?;
                normed.mul(&gamma)?.add(&beta)
            }
        }
    }
}

/// 3x3 conv -> normalization -> ReLU on a (C, HW) map.
struct ConvNormRelu {
    conv: Conv2dLayer,
    norm: ChannelNorm,
    c_in: usize,
    grid: (usize, usize),
}

impl ConvNormRelu {
    fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        grid: (usize, usize),
        kind: NormKind,
    ) -> Result<Self> {
        Ok(ConvNormRelu {
            conv: Conv2dLayer::new(store, &scoped(prefix, "conv"), c_in, c_out, 3)?,
            norm: ChannelNorm::new(store, &scoped(prefix, "norm"), c_out, kind)?,
            c_in,
            grid,
        })
    }

    fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (rows, cols) = self.grid;
        let grid_x = x.reshape(&[self.c_in, rows, cols])?;
        let y = self.conv.forward(p, &grid_x)?;
        let c_out = y.dims()[0];
        let flat = y.reshape(&[c_out, rows * cols])?;
        self.norm.forward(p, &flat)?.relu()
    }
}

/// Soft object regions: softmax over the configured axis of a (C, HW) map.
pub fn context_maps<S: Scalar>(x: &Tensor<S>, axis: ContextAxis) -> Result<Tensor<S>> {
    match axis {
        ContextAxis::Channel => x.softmax(0),
        ContextAxis::Spatial => x.softmax(1),
    }
}

/// Context features OC = X (C x HW) times O^T (HW x C) -> (C, C).
pub fn context_features<S: Scalar>(x: &Tensor<S>, regions: &Tensor<S>) -> Result<Tensor<S>> {
    if x.shape() != regions.shape() {
        return Err(Error::dimension(
            "context_features",
            format!("shapes differ: {} vs {}", x.shape(), regions.shape()),
        ));
    }
    x.matmul(&regions.transpose()?)
}

/// Self-feature refinement: relate each pixel to the C context features and
/// re-project, then mix channels with a 1x1 conv.
pub struct SelfRefine {
    conv: Conv1x1,
    context_axis: ContextAxis,
}

impl SelfRefine {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        context_axis: ContextAxis,
    ) -> Result<Self> {
        Ok(SelfRefine {
            conv: Conv1x1::new(store, &scoped(prefix, "conv"), c, c)?,
            context_axis,
        })
    }

    pub fn forward<S: Scalar>(&self, p: &Bound<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let regions = context_maps(x, self.context_axis)?;
        let oc = context_features(x, &regions)?;
        // relations: (HW, C) rows sum to 1 over the context axis
        let relations = x.transpose()?.matmul(&oc)?.softmax(1)?;
        let projected = relations.matmul(&oc.transpose()?)?.transpose()?;
        self.conv.forward(p, &projected)
    }
}

/// Spatial-Motion Cross-Attention: queries from the source map, keys and
/// values from the guidance map, single head with scale 1/sqrt(C).
pub struct Smca {
    q: Conv1x1,
    k: Conv1x1,
    v: Conv1x1,
    phi: ConvNormRelu,
    c: usize,
}

impl Smca {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        grid: (usize, usize),
        norm: NormKind,
    ) -> Result<Self> {
        Ok(Smca {
            q: Conv1x1::new(store, &scoped(prefix, "q"), c, c)?,
            k: Conv1x1::new(store, &scoped(prefix, "k"), c, c)?,
            v: Conv1x1::new(store, &scoped(prefix, "v"), c, c)?,
            phi: ConvNormRelu::new(store, &scoped(prefix, "phi"), c, c, grid, norm)?,
            c,
        })
    }

    /// source and guidance are (C, HW) maps of identical shape.
    pub fn forward<S: Scalar>(
        &self,
        p: &Bound<S>,
        source: &Tensor<S>,
        guidance: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        if source.shape() != guidance.shape() {
            return Err(Error::dimension(
                "smca",
                format!("shapes differ: {} vs {}", source.shape(), guidance.shape()),
            ));
        }
        let q = self.q.forward(p, source)?;
        let k = self.k.forward(p, guidance)?;
        let v = self.v.forward(p, guidance)?;
        let scale = S::from_f64(1.0 / (self.c as f64).sqrt());
        // columns are tokens: scores (HW, HW), rows sum to 1
        let scores = q.transpose()?.matmul(&k)?.mul_scalar(scale)?;
        let attn = scores.softmax(1)?;
        let mixed = attn.matmul(&v.transpose()?)?.transpose()?;
        self.phi.forward(p, &source.add(&mixed)?)
    }
}

/// Gated fusion of the cross-propagated spatial and motion maps.
pub struct AdaptiveFuse {
    aggregate: ConvNormRelu,
    gate_spatial: Conv1x1,
    gate_motion: Conv1x1,
    value_spatial: Conv1x1,
    value_motion: Conv1x1,
}

/// The gate pair predicted for one fusion pass; every entry is in (0, 1).
pub struct FusionGates<S: Scalar> {
    pub spatial: Tensor<S>,
    pub motion: Tensor<S>,
}

impl AdaptiveFuse {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        grid: (usize, usize),
        norm: NormKind,
    ) -> Result<Self> {
        Ok(AdaptiveFuse {
            aggregate: ConvNormRelu::new(store, &scoped(prefix, "agg"), 2 * c, c, grid, norm)?,
            gate_spatial: Conv1x1::new(store, &scoped(prefix, "gate_s"), c, c)?,
            gate_motion: Conv1x1::new(store, &scoped(prefix, "gate_m"), c, c)?,
            value_spatial: Conv1x1::new(store, &scoped(prefix, "val_s"), c, c)?,
            value_motion: Conv1x1::new(store, &scoped(prefix, "val_m"), c, c)?,
        })
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &Bound<S>,
        spatial: &Tensor<S>,
        motion: &Tensor<S>,
    ) -> Result<(Tensor<S>, FusionGates<S>)> {
        if spatial.shape() != motion.shape() {
            return Err(Error::dimension(
                "adaptive_fuse",
                format!("shapes differ: {} vs {}", spatial.shape(), motion.shape()),
            ));
        }
        let stacked = Tensor::concat(&[spatial, motion], 0)?;
        let a = self.aggregate.forward(p, &stacked)?;
        let gate_s = self.gate_spatial.forward(p, &a)?.sigmoid()?;
        let gate_m = self.gate_motion.forward(p, &a)?.sigmoid()?;
        let vs = self.value_spatial.forward(p, spatial)?;
        let vm = self.value_motion.forward(p, motion)?;
        let fused = gate_s.mul(&vs)?.add(&gate_m.mul(&vm)?)?;
        Ok((
            fused,
            FusionGates {
                spatial: gate_s,
                motion: gate_m,
            },
        ))
    }
}

/// Channel-concat aggregation of a token sequence into one (C, HW) map.
pub struct AggregateFrames {
    conv: Conv2dLayer,
    grid: (usize, usize),
    c: usize,
    seq_len: usize,
}

impl AggregateFrames {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        seq_len: usize,
        grid: (usize, usize),
    ) -> Result<Self> {
        Ok(AggregateFrames {
            conv: Conv2dLayer::new(store, &scoped(prefix, "conv"), seq_len * c, c, 1)?,
            grid,
            c,
            seq_len,
        })
    }

    /// (T, L, C) tokens -> (C, HW).
    pub fn forward<S: Scalar>(&self, p: &Bound<S>, tokens: &Tensor<S>) -> Result<Tensor<S>> {
        let d = tokens.dims();
        if d.len() != 3 || d[0] != self.seq_len || d[2] != self.c {
            return Err(Error::dimension(
                "aggregate_frames",
                format!(
                    "expected ({}, L, {}), got {}",
                    self.seq_len, self.c, tokens.shape()
                ),
            ));
        }
        let (rows, cols) = self.grid;
        if d[1] != rows * cols {
            return Err(Error::contract(format!(
                "token count {} does not form a {}x{} grid",
                d[1], rows, cols
            )));
        }
        let mut frames = Vec::with_capacity(self.seq_len);
        for t in 0..self.seq_len {
            let frame = tokens.slice(0, t, 1)?.reshape(&[rows * cols, self.c])?;
            frames.push(frame.transpose()?.reshape(&[self.c, rows, cols])?);
        }
        let refs: Vec<&Tensor<S>> = frames.iter().collect();
        let stacked = Tensor::concat(&refs, 0)?;
        let mixed = self.conv.forward(p, &stacked)?;
        mixed.reshape(&[self.c, rows * cols])
    }
}

/// 3x3 convolution head decoding the fused map into K heatmaps, with a
/// bilinear upsample when the feature grid differs from the heatmap size.
pub struct DetectionHead {
    conv: Conv2dLayer,
    grid: (usize, usize),
    heatmap: (usize, usize),
    c: usize,
}

impl DetectionHead {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        c: usize,
        k_joints: usize,
        grid: (usize, usize),
        heatmap: (usize, usize),
    ) -> Result<Self> {
        Ok(DetectionHead {
            conv: Conv2dLayer::new(store, &scoped(prefix, "conv"), c, k_joints, 3)?,
            grid,
            heatmap,
            c,
        })
    }

    /// (C, HW) -> (K, H', W').
    pub fn forward<S: Scalar>(&self, p: &Bound<S>, fused: &Tensor<S>) -> Result<Tensor<S>> {
        let (rows, cols) = self.grid;
        if fused.dims() != [self.c, rows * cols] {
            return Err(Error::contract(format!(
                "detection head expects ({}, {}) map, got {}",
                self.c,
                rows * cols,
                fused.shape()
            )));
        }
        let mut x = fused.reshape(&[self.c, rows, cols])?;
        let (h_out, w_out) = self.heatmap;
        if (rows, cols) != (h_out, w_out) {
            x = x.bilinear_resize(h_out, w_out)?;
        }
        self.conv.forward(p, &x)
    }
}

/// Everything SMML produces for one sequence.
pub struct SmmlOutput<S: Scalar> {
    /// (K, H', W') keyframe heatmaps.
    pub heatmaps: Tensor<S>,
    /// (C, HW) fused map fed to the head.
    pub fused: Tensor<S>,
    pub gates: Option<FusionGates<S>>,
}

pub struct Smml {
    pub cfg: SmmlConfig,
    agg_spatial: AggregateFrames,
    agg_motion: AggregateFrames,
    refine_spatial: Option<SelfRefine>,
    refine_motion: Option<SelfRefine>,
    cross_spatial: Option<Smca>,
    cross_motion: Option<Smca>,
    adaptive: Option<AdaptiveFuse>,
    concat_fuse: Option<Conv1x1>,
    head: DetectionHead,
}

impl Smml {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, prefix: &str, cfg: SmmlConfig) -> Result<Self> {
        let c = cfg.c;
        let agg_spatial =
            AggregateFrames::new(store, &scoped(prefix, "agg_s"), c, cfg.seq_len, cfg.grid)?;
        let agg_motion =
            AggregateFrames::new(store, &scoped(prefix, "agg_m"), c, cfg.seq_len, cfg.grid)?;

        let smml_on = cfg.fusion == FusionMode::Smml;
        let mk_refine = |store: &mut ParamStore<S>, name: &str| {
            SelfRefine::new(store, &scoped(prefix, name), c, cfg.context_axis)
        };
        let (refine_spatial, refine_motion) = if smml_on && cfg.self_refine {
            (
                Some(mk_refine(store, "refine_s")?),
                Some(mk_refine(store, "refine_m")?),
            )
        } else {
            (None, None)
        };
        let (cross_spatial, cross_motion) = if smml_on && cfg.cross_propagate {
            (
                Some(Smca::new(store, &scoped(prefix, "smca_s"), c, cfg.grid, cfg.norm)?),
                Some(Smca::new(store, &scoped(prefix, "smca_m"), c, cfg.grid, cfg.norm)?),
            )
        } else {
            (None, None)
        };
        let adaptive = if smml_on && cfg.adaptive_fuse {
            Some(AdaptiveFuse::new(store, &scoped(prefix, "fuse"), c, cfg.grid, cfg.norm)?)
        } else {
            None
        };
        let concat_fuse = if cfg.fusion == FusionMode::Conv {
            Some(Conv1x1::new(store, &scoped(prefix, "concat_fuse"), 2 * c, c)?)
        } else {
            None
        };
        let head = DetectionHead::new(
            store,
            &scoped(prefix, "head"),
            c,
            cfg.k_joints,
            cfg.grid,
            cfg.heatmap,
        )?;
        Ok(Smml {
            cfg,
            agg_spatial,
            agg_motion,
            refine_spatial,
            refine_motion,
            cross_spatial,
            cross_motion,
            adaptive,
            concat_fuse,
            head,
        })
    }

    /// Both cross directions are computed from the pre-update inputs.
    pub fn cross_propagate<S: Scalar>(
        &self,
        p: &Bound<S>,
        spatial: &Tensor<S>,
        motion: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>)> {
        let s = self
            .cross_spatial
            .as_ref()
            .expect("cross_propagate called with cross stage disabled");
        let m = self
            .cross_motion
            .as_ref()
            .expect("cross_propagate called with cross stage disabled");
        let refined_s = s.forward(p, spatial, motion)?;
        let refined_m = m.forward(p, motion, spatial)?;
        Ok((refined_s, refined_m))
    }

    pub fn forward<S: Scalar>(
        &self,
        p: &Bound<S>,
        spatial_tokens: &Tensor<S>,
        motion_tokens: &Tensor<S>,
    ) -> Result<SmmlOutput<S>> {
        let rbar = self.agg_spatial.forward(p, spatial_tokens)?;
        let mbar = self.agg_motion.forward(p, motion_tokens)?;

        let (fused, gates) = match self.cfg.fusion {
            FusionMode::Add => (rbar.add(&mbar)?, None),
            FusionMode::Conv => {
                let stacked = Tensor::concat(&[&rbar, &mbar], 0)?;
                (self.concat_fuse.as_ref().unwrap().forward(p, &stacked)?, None)
            }
            FusionMode::Smml => {
                let (rbb, mbb) = match (&self.refine_spatial, &self.refine_motion) {
                    (Some(rs), Some(rm)) => (rs.forward(p, &rbar)?, rm.forward(p, &mbar)?),
                    _ => (rbar.clone(), mbar.clone()),
                };
                let (rt, mt) = if self.cross_spatial.is_some() {
                    self.cross_propagate(p, &rbb, &mbb)?
                } else {
                    (rbb, mbb)
                };
                match &self.adaptive {
                    Some(fuse) => {
                        let (f, g) = fuse.forward(p, &rt, &mt)?;
                        (f, Some(g))
                    }
                    None => (rt.add(&mt)?, None),
                }
            }
        };

        let heatmaps = self.head.forward(p, &fused)?;
        Ok(SmmlOutput {
            heatmaps,
            fused,
            gates,
        })
    }
}
