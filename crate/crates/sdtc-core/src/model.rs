//! The assembled network: embedding stack, MLSME, SMML, detection head.

use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::Result;
use crate::mlsme::{MaskPair, Mlsme, MlsmeOutput};
use crate::nn::{
    Bound, ParamStore, PatchEmbed, PositionalEncodings, TransformerBlock,
};
use crate::smml::{Smml, SmmlOutput};
use crate::tensor::{Scalar, Tape, Tensor};

/// Everything one forward pass produces.
pub struct ForwardOutput<S: Scalar> {
    /// Spatial feature tokens (T, L, C) after embedding + positional encodings.
    pub spatial: Tensor<S>,
    pub mlsme: MlsmeOutput<S>,
    pub smml: SmmlOutput<S>,
}

impl<S: Scalar> ForwardOutput<S> {
    /// Keyframe heatmaps (K, H', W').
    pub fn heatmaps(&self) -> &Tensor<S> {
        &self.smml.heatmaps
    }
}

pub struct SdtcModel<S: Scalar> {
    pub cfg: Config,
    pub store: ParamStore<S>,
    patch_embed: PatchEmbed,
    backbone: Vec<TransformerBlock>,
    pos_enc: PositionalEncodings,
    pub mlsme: Mlsme,
    pub smml: Smml,
}

impl<S: Scalar> SdtcModel<S> {
    pub fn new(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let mut store: ParamStore<S> = ParamStore::new(cfg.seed);
        let m = &cfg.model;
        let (rows, cols) = cfg.token_grid();

        let patch_embed = PatchEmbed::new(&mut store, "embed.patch", m.patch, m.channels)?;
        let mut backbone = Vec::with_capacity(m.backbone_blocks);
        for i in 0..m.backbone_blocks {
            backbone.push(TransformerBlock::new(
                &mut store,
                &format!("embed.block{i}"),
                m.channels,
                m.heads,
                m.expansion,
            )?);
        }
        let pos_enc = PositionalEncodings::new(
            &mut store,
            "embed.pos",
            rows,
            cols,
            m.channels,
            m.t_max,
            m.spatial_pe_mode,
            m.spatial_pe,
            m.temporal_pe,
        )?;
        let mlsme = Mlsme::new(&mut store, "mlsme", cfg.mlsme_config())?;
        let smml = Smml::new(&mut store, "smml", cfg.smml_config())?;

        Ok(SdtcModel {
            cfg: cfg.clone(),
            store,
            patch_embed,
            backbone,
            pos_enc,
            mlsme,
            smml,
        })
    }

    /// Bind parameters for a training pass (taped) or inference (frozen).
    pub fn bind(&self, tape: Option<&Tape<S>>) -> Bound<S> {
        match tape {
            Some(t) => self.store.bind(t),
            None => self.store.bind_frozen(),
        }
    }

    /// Per-frame tokens, per-frame backbone blocks, then both positional
    /// encodings: the spatial feature sequence (T, L, C).
    pub fn embed(&self, p: &Bound<S>, frames: &[Tensor<S>]) -> Result<Tensor<S>> {
        let mut per_frame = Vec::with_capacity(frames.len());
        let (l, c) = (self.cfg.tokens_per_frame(), self.cfg.model.channels);
        for frame in frames {
            let mut tokens = self.patch_embed.forward(p, frame)?;
            for block in &self.backbone {
                tokens = block.forward(p, &tokens)?;
            }
            per_frame.push(tokens.reshape(&[1, l, c])?);
        }
        let refs: Vec<&Tensor<S>> = per_frame.iter().collect();
        let stacked = Tensor::concat(&refs, 0)?;
        self.pos_enc.add_to(p, &stacked)
    }

    /// Masks for one training step; `None` when MLSME (and with it masked
    /// reconstruction) is disabled.
    pub fn sample_masks(&self, rng: &mut ChaCha8Rng) -> Result<Option<MaskPair>> {
        if !self.cfg.model.mlsme {
            return Ok(None);
        }
        Ok(Some(self.mlsme.sample_masks(rng)?))
    }

    /// Full pipeline: embedding, MLSME (masked when `masks` is given), SMML.
    pub fn forward(
        &self,
        p: &Bound<S>,
        frames: &[Tensor<S>],
        masks: Option<&MaskPair>,
    ) -> Result<ForwardOutput<S>> {
        let spatial = self.embed(p, frames)?;
        let mlsme_out = self.mlsme.forward(p, &spatial, masks)?;
        let smml_out = self.smml.forward(p, &spatial, &mlsme_out.motion)?;
        Ok(ForwardOutput {
            spatial,
            mlsme: mlsme_out,
            smml: smml_out,
        })
    }
}
