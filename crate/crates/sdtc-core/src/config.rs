//! Run configuration: every knob of every module, addressable by dotted key.
//!
//! The file format is UTF-8 lines of `dotted.key = value`, `#` starts a
//! comment. Unknown keys are rejected; `entries()` echoes the full effective
//! configuration in a stable order so any run can be reproduced from its
//! echo.

use std::path::Path;

use crate::data::{CorruptionSpec, GenConfig};
use crate::error::{Error, Result};
use crate::loss::PoseReconFrames;
use crate::mlsme::MlsmeConfig;
use crate::nn::SpatialPeMode;
use crate::smml::{ContextAxis, FusionMode, NormKind, SmmlConfig};

#[derive(Debug, Clone)]
pub struct DataConfig {
    pub delta: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    pub scene_h: usize,
    pub scene_w: usize,
    pub max_step: f64,
    pub sigma: f64,
    pub occluder_count: usize,
    pub occluder_frac: f64,
    pub occluder_frame_prob: f64,
    pub blur_width: usize,
    pub blur_prob: f64,
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub patch: usize,
    pub channels: usize,
    pub heads: usize,
    pub expansion: usize,
    pub backbone_blocks: usize,
    pub divided_blocks: usize,
    pub t_max: usize,
    pub spatial_pe: bool,
    pub temporal_pe: bool,
    pub spatial_pe_mode: SpatialPeMode,
    pub mlsme: bool,
    pub frame_level: bool,
    pub mask_ratio: f64,
    pub frame_mask_ratio: f64,
    pub keyframe_maskable: bool,
    pub fusion: FusionMode,
    pub smml_refine: bool,
    pub smml_cross: bool,
    pub smml_adaptive: bool,
    pub context_axis: ContextAxis,
    pub smml_norm: NormKind,
}

#[derive(Debug, Clone)]
pub struct LossConfig {
    pub lambda: f64,
    pub visibility_masking: bool,
    pub pose_recon_frames: PoseReconFrames,
}

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    pub augment: bool,
    /// Hard cap on optimizer steps; 0 means no cap.
    pub max_steps: usize,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub pck_alpha: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub coords_per_tensor: usize,
    pub step: f64,
    pub tol: f64,
    pub denom_floor: f64,
    /// Test hook: perturb one analytic gradient so the check must fail.
    pub corrupt: bool,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainSettings,
    pub eval: EvalConfig,
    pub grad_check: GradCheckConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            data: DataConfig {
                delta: 2,
                crop_h: 64,
                crop_w: 48,
                scene_h: 128,
                scene_w: 128,
                max_step: 6.0,
                sigma: 2.0,
                occluder_count: 0,
                occluder_frac: 0.25,
                occluder_frame_prob: 1.0,
                blur_width: 0,
                blur_prob: 0.0,
            },
            model: ModelConfig {
                patch: 8,
                channels: 64,
                heads: 4,
                expansion: 4,
                backbone_blocks: 2,
                divided_blocks: 2,
                t_max: 16,
                spatial_pe: true,
                temporal_pe: true,
                spatial_pe_mode: SpatialPeMode::TwoD,
                mlsme: true,
                frame_level: true,
                mask_ratio: 0.5,
                frame_mask_ratio: 0.5,
                keyframe_maskable: true,
                fusion: FusionMode::Smml,
                smml_refine: true,
                smml_cross: true,
                smml_adaptive: true,
                context_axis: ContextAxis::Channel,
                smml_norm: NormKind::Channel,
            },
            loss: LossConfig {
                lambda: 0.01,
                visibility_masking: true,
                pose_recon_frames: PoseReconFrames::All,
            },
            train: TrainSettings {
                epochs: 50,
                batch_size: 4,
                base_lr: 5e-4,
                milestones: vec![20, 40],
                lr_decay: 0.1,
                weight_decay: 1e-4,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                grad_clip: 0.0,
                augment: true,
                max_steps: 0,
            },
            eval: EvalConfig { pck_alpha: 0.2 },
            grad_check: GradCheckConfig {
                coords_per_tensor: 2,
                step: 1e-5,
                tol: 1e-4,
                denom_floor: 1e-3,
                corrupt: false,
            },
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        other => Err(Error::Config(format!(
            "invalid boolean {other:?} for key {key}"
        ))),
    }
}

fn parse_milestones(key: &str, value: &str) -> Result<Vec<usize>> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|part| parse::<usize>(key, part))
        .collect()
}

impl Config {
    /// Sequence length T = 2*delta + 1.
    pub fn seq_len(&self) -> usize {
        2 * self.data.delta + 1
    }

    pub fn keyframe(&self) -> usize {
        self.data.delta
    }

    /// Token grid (rows, cols) of one frame.
    pub fn token_grid(&self) -> (usize, usize) {
        (
            self.data.crop_h / self.model.patch,
            self.data.crop_w / self.model.patch,
        )
    }

    pub fn tokens_per_frame(&self) -> usize {
        let (r, c) = self.token_grid();
        r * c
    }

    /// Heatmap extents (H', W') at quarter input resolution.
    pub fn heatmap_size(&self) -> (usize, usize) {
        (self.data.crop_h / 4, self.data.crop_w / 4)
    }

    /// Heatmap pixels each token covers in the reconstruction head.
    pub fn token_patch_out(&self) -> (usize, usize) {
        (self.model.patch / 4, self.model.patch / 4)
    }

    pub fn k_joints(&self) -> usize {
        crate::data::skeleton::NUM_JOINTS
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let d = &self.data;
        if m.patch == 0 || m.patch % 4 != 0 {
            return Err(Error::Config(format!(
                "model.patch must be a positive multiple of 4, got {}",
                m.patch
            )));
        }
        if d.crop_h % m.patch != 0 || d.crop_w % m.patch != 0 {
            return Err(Error::Config(format!(
                "model.patch {} must divide crop {}x{}",
                m.patch, d.crop_h, d.crop_w
            )));
        }
        if d.crop_h % 4 != 0 || d.crop_w % 4 != 0 {
            return Err(Error::Config("crop extents must be multiples of 4".into()));
        }
        if m.heads == 0 || m.channels % m.heads != 0 {
            return Err(Error::Config(format!(
                "model.channels {} must be divisible by model.heads {}",
                m.channels, m.heads
            )));
        }
        if m.spatial_pe_mode == SpatialPeMode::TwoD && m.channels % 4 != 0 {
            return Err(Error::Config(
                "2d spatial encoding needs channels divisible by 4".into(),
            ));
        }
        if self.seq_len() > m.t_max {
            return Err(Error::Config(format!(
                "sequence length {} exceeds model.t_max {}",
                self.seq_len(),
                m.t_max
            )));
        }
        if !(0.0..1.0).contains(&m.mask_ratio) {
            return Err(Error::Config(format!(
                "model.mask_ratio must be in [0, 1), got {}",
                m.mask_ratio
            )));
        }
        let t = self.seq_len();
        if (m.frame_mask_ratio * t as f64).floor() as usize >= t {
            return Err(Error::Config(format!(
                "model.frame_mask_ratio {} would mask all {t} frames",
                m.frame_mask_ratio
            )));
        }
        if self.loss.lambda < 0.0 {
            return Err(Error::Config("loss.lambda must be nonnegative".into()));
        }
        if !self
            .train
            .milestones
            .windows(2)
            .all(|w| w[0] < w[1])
        {
            return Err(Error::Config(
                "train.milestones must be strictly increasing".into(),
            ));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if d.blur_width % 2 == 0 && d.blur_width != 0 {
            return Err(Error::Config(format!(
                "data.blur_width must be odd or 0, got {}",
                d.blur_width
            )));
        }
        if self.eval.pck_alpha <= 0.0 {
            return Err(Error::Config("eval.pck_alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,

            "data.delta" => self.data.delta = parse(key, v)?,
            "data.crop_h" => self.data.crop_h = parse(key, v)?,
            "data.crop_w" => self.data.crop_w = parse(key, v)?,
            "data.scene_h" => self.data.scene_h = parse(key, v)?,
            "data.scene_w" => self.data.scene_w = parse(key, v)?,
            "data.max_step" => self.data.max_step = parse(key, v)?,
            "data.sigma" => self.data.sigma = parse(key, v)?,
            "data.occluder_count" => self.data.occluder_count = parse(key, v)?,
            "data.occluder_frac" => self.data.occluder_frac = parse(key, v)?,
            "data.occluder_frame_prob" => self.data.occluder_frame_prob = parse(key, v)?,
            "data.blur_width" => self.data.blur_width = parse(key, v)?,
            "data.blur_prob" => self.data.blur_prob = parse(key, v)?,

            "model.patch" => self.model.patch = parse(key, v)?,
            "model.channels" => self.model.channels = parse(key, v)?,
            "model.heads" => self.model.heads = parse(key, v)?,
            "model.expansion" => self.model.expansion = parse(key, v)?,
            "model.backbone_blocks" => self.model.backbone_blocks = parse(key, v)?,
            "model.divided_blocks" => self.model.divided_blocks = parse(key, v)?,
            "model.t_max" => self.model.t_max = parse(key, v)?,
            "model.spatial_pe" => self.model.spatial_pe = parse_bool(key, v)?,
            "model.temporal_pe" => self.model.temporal_pe = parse_bool(key, v)?,
            "model.spatial_pe_mode" => {
                self.model.spatial_pe_mode = match v {
                    "2d" => SpatialPeMode::TwoD,
                    "1d" => SpatialPeMode::OneD,
                    other => {
                        return Err(Error::Config(format!(
                            "model.spatial_pe_mode must be 2d|1d, got {other:?}"
                        )))
                    }
                }
            }
            "model.mlsme" => self.model.mlsme = parse_bool(key, v)?,
            "model.frame_level" => self.model.frame_level = parse_bool(key, v)?,
            "model.mask_ratio" => self.model.mask_ratio = parse(key, v)?,
            "model.frame_mask_ratio" => self.model.frame_mask_ratio = parse(key, v)?,
            "model.keyframe_maskable" => self.model.keyframe_maskable = parse_bool(key, v)?,
            "model.fusion" => {
                self.model.fusion = match v {
                    "smml" => FusionMode::Smml,
                    "add" => FusionMode::Add,
                    "conv" => FusionMode::Conv,
                    other => {
                        return Err(Error::Config(format!(
                            "model.fusion must be smml|add|conv, got {other:?}"
                        )))
                    }
                }
            }
            "model.smml_refine" => self.model.smml_refine = parse_bool(key, v)?,
            "model.smml_cross" => self.model.smml_cross = parse_bool(key, v)?,
            "model.smml_adaptive" => self.model.smml_adaptive = parse_bool(key, v)?,
            "model.context_axis" => {
                self.model.context_axis = match v {
                    "channel" => ContextAxis::Channel,
                    "spatial" => ContextAxis::Spatial,
                    other => {
                        return Err(Error::Config(format!(
                            "model.context_axis must be channel|spatial, got {other:?}"
                        )))
                    }
                }
            }
            "model.smml_norm" => {
                self.model.smml_norm = match v {
                    "channel" => NormKind::Channel,
                    "none" => NormKind::None,
                    other => {
                        return Err(Error::Config(format!(
                            "model.smml_norm must be channel|none, got {other:?}"
                        )))
                    }
                }
            }

            "loss.lambda" => self.loss.lambda = parse(key, v)?,
            "loss.visibility_masking" => self.loss.visibility_masking = parse_bool(key, v)?,
            "loss.pose_recon_frames" => {
                self.loss.pose_recon_frames = match v {
                    "all" => PoseReconFrames::All,
                    "masked" => PoseReconFrames::MaskedOnly,
                    other => {
                        return Err(Error::Config(format!(
                            "loss.pose_recon_frames must be all|masked, got {other:?}"
                        )))
                    }
                }
            }

            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.base_lr" => self.train.base_lr = parse(key, v)?,
            "train.milestones" => self.train.milestones = parse_milestones(key, v)?,
            "train.lr_decay" => self.train.lr_decay = parse(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, v)?,
            "train.beta1" => self.train.beta1 = parse(key, v)?,
            "train.beta2" => self.train.beta2 = parse(key, v)?,
            "train.eps" => self.train.eps = parse(key, v)?,
            "train.grad_clip" => self.train.grad_clip = parse(key, v)?,
            "train.augment" => self.train.augment = parse_bool(key, v)?,
            "train.max_steps" => self.train.max_steps = parse(key, v)?,

            "eval.pck_alpha" => self.eval.pck_alpha = parse(key, v)?,

            "grad_check.coords_per_tensor" => {
                self.grad_check.coords_per_tensor = parse(key, v)?
            }
            "grad_check.step" => self.grad_check.step = parse(key, v)?,
            "grad_check.tol" => self.grad_check.tol = parse(key, v)?,
            "grad_check.denom_floor" => self.grad_check.denom_floor = parse(key, v)?,
            "grad_check.corrupt" => self.grad_check.corrupt = parse_bool(key, v)?,

            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, sorted by key.
    pub fn entries(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let d = &self.data;
        let t = &self.train;
        let g = &self.grad_check;
        let milestones = t
            .milestones
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut entries: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("data.delta".into(), d.delta.to_string()),
            ("data.crop_h".into(), d.crop_h.to_string()),
            ("data.crop_w".into(), d.crop_w.to_string()),
            ("data.scene_h".into(), d.scene_h.to_string()),
            ("data.scene_w".into(), d.scene_w.to_string()),
            ("data.max_step".into(), d.max_step.to_string()),
            ("data.sigma".into(), d.sigma.to_string()),
            ("data.occluder_count".into(), d.occluder_count.to_string()),
            ("data.occluder_frac".into(), d.occluder_frac.to_string()),
            (
                "data.occluder_frame_prob".into(),
                d.occluder_frame_prob.to_string(),
            ),
            ("data.blur_width".into(), d.blur_width.to_string()),
            ("data.blur_prob".into(), d.blur_prob.to_string()),
            ("model.patch".into(), m.patch.to_string()),
            ("model.channels".into(), m.channels.to_string()),
            ("model.heads".into(), m.heads.to_string()),
            ("model.expansion".into(), m.expansion.to_string()),
            (
                "model.backbone_blocks".into(),
                m.backbone_blocks.to_string(),
            ),
            ("model.divided_blocks".into(), m.divided_blocks.to_string()),
            ("model.t_max".into(), m.t_max.to_string()),
            ("model.spatial_pe".into(), m.spatial_pe.to_string()),
            ("model.temporal_pe".into(), m.temporal_pe.to_string()),
            (
                "model.spatial_pe_mode".into(),
                match m.spatial_pe_mode {
                    SpatialPeMode::TwoD => "2d".into(),
                    SpatialPeMode::OneD => "1d".into(),
                },
            ),
            ("model.mlsme".into(), m.mlsme.to_string()),
            ("model.frame_level".into(), m.frame_level.to_string()),
            ("model.mask_ratio".into(), m.mask_ratio.to_string()),
            (
                "model.frame_mask_ratio".into(),
                m.frame_mask_ratio.to_string(),
            ),
            (
                "model.keyframe_maskable".into(),
                m.keyframe_maskable.to_string(),
            ),
            (
                "model.fusion".into(),
                match m.fusion {
                    FusionMode::Smml => "smml".into(),
                    FusionMode::Add => "add".into(),
                    FusionMode::Conv => "conv".into(),
                },
            ),
            ("model.smml_refine".into(), m.smml_refine.to_string()),
            ("model.smml_cross".into(), m.smml_cross.to_string()),
            ("model.smml_adaptive".into(), m.smml_adaptive.to_string()),
            (
                "model.context_axis".into(),
                match m.context_axis {
                    ContextAxis::Channel => "channel".into(),
                    ContextAxis::Spatial => "spatial".into(),
                },
            ),
            (
                "model.smml_norm".into(),
                match m.smml_norm {
                    NormKind::Channel => "channel".into(),
                    NormKind::None => "none".into(),
                },
            ),
            ("loss.lambda".into(), self.loss.lambda.to_string()),
            (
                "loss.visibility_masking".into(),
                self.loss.visibility_masking.to_string(),
            ),
            (
                "loss.pose_recon_frames".into(),
                match self.loss.pose_recon_frames {
                    PoseReconFrames::All => "all".into(),
                    PoseReconFrames::MaskedOnly => "masked".into(),
                },
            ),
            ("train.epochs".into(), t.epochs.to_string()),
            ("train.batch_size".into(), t.batch_size.to_string()),
            ("train.base_lr".into(), t.base_lr.to_string()),
            ("train.milestones".into(), milestones),
            ("train.lr_decay".into(), t.lr_decay.to_string()),
            ("train.weight_decay".into(), t.weight_decay.to_string()),
            ("train.beta1".into(), t.beta1.to_string()),
            ("train.beta2".into(), t.beta2.to_string()),
            ("train.eps".into(), t.eps.to_string()),
            ("train.grad_clip".into(), t.grad_clip.to_string()),
            ("train.augment".into(), t.augment.to_string()),
            ("train.max_steps".into(), t.max_steps.to_string()),
            ("eval.pck_alpha".into(), self.eval.pck_alpha.to_string()),
            (
                "grad_check.coords_per_tensor".into(),
                g.coords_per_tensor.to_string(),
            ),
            ("grad_check.step".into(), g.step.to_string()),
            ("grad_check.tol".into(), g.tol.to_string()),
            ("grad_check.denom_floor".into(), g.denom_floor.to_string()),
            ("grad_check.corrupt".into(), g.corrupt.to_string()),
        ];
        entries.sort();
        entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Apply `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Config::from_text(&text)
    }

    // ── module config projections ──────────────────────────────────────

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            seq_len: self.seq_len(),
            scene_h: self.data.scene_h,
            scene_w: self.data.scene_w,
            max_step: self.data.max_step,
            corruption: CorruptionSpec {
                occluder_count: self.data.occluder_count,
                occluder_frac: self.data.occluder_frac,
                occluder_frame_prob: self.data.occluder_frame_prob,
                blur_width: self.data.blur_width,
                blur_prob: self.data.blur_prob,
            },
        }
    }

    pub fn mlsme_config(&self) -> MlsmeConfig {
        MlsmeConfig {
            c: self.model.channels,
            heads: self.model.heads,
            expansion: self.model.expansion,
            divided_blocks: self.model.divided_blocks,
            mask_ratio: self.model.mask_ratio,
            frame_mask_ratio: self.model.frame_mask_ratio,
            keyframe_maskable: self.model.keyframe_maskable,
            frame_level: self.model.frame_level && self.model.mlsme,
            reconstruction: self.model.mlsme,
            grid: self.token_grid(),
            patch_out: self.token_patch_out(),
            k_joints: self.k_joints(),
            keyframe: self.keyframe(),
            seq_len: self.seq_len(),
        }
    }

    pub fn smml_config(&self) -> SmmlConfig {
        SmmlConfig {
            c: self.model.channels,
            seq_len: self.seq_len(),
            grid: self.token_grid(),
            k_joints: self.k_joints(),
            heatmap: self.heatmap_size(),
            fusion: self.model.fusion,
            self_refine: self.model.smml_refine,
            cross_propagate: self.model.smml_cross,
            adaptive_fuse: self.model.smml_adaptive,
            context_axis: self.model.context_axis,
            norm: self.model.smml_norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_echo_roundtrips() {
        let cfg = Config::default();
        cfg.validate().unwrap();

        let text = cfg.to_text();
        let reparsed = Config::from_text(&text).unwrap();
        assert_eq!(cfg.entries(), reparsed.entries());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut cfg = Config::default();
        assert!(cfg.set("model.bogus", "1").is_err());
        assert!(Config::from_text("nope = 3").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let text = "
# experiment overrides
model.mask_ratio = 0.25   # quarter masking
train.milestones = 5,9
model.fusion = add
";
        let cfg = Config::from_text(text).unwrap();
        assert_eq!(cfg.model.mask_ratio, 0.25);
        assert_eq!(cfg.train.milestones, vec![5, 9]);
        assert!(matches!(cfg.model.fusion, FusionMode::Add));
    }

    #[test]
    fn validation_catches_bad_shapes() {
        let mut cfg = Config::default();
        cfg.model.patch = 6;
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.model.heads = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.model.mask_ratio = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.train.milestones = vec![10, 10];
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.data.delta = 8; // T = 17 > t_max 16
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn derived_extents_at_toy_config() {
        let cfg = Config::default();
        assert_eq!(cfg.seq_len(), 5);
        assert_eq!(cfg.keyframe(), 2);
        assert_eq!(cfg.token_grid(), (8, 6));
        assert_eq!(cfg.tokens_per_frame(), 48);
        assert_eq!(cfg.heatmap_size(), (16, 12));
        assert_eq!(cfg.token_patch_out(), (2, 2));
        assert_eq!(cfg.k_joints(), 15);
    }
}
