//! Optimization and the training/evaluation loops.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, TrainSettings};
use crate::data::{augment, AugmentParams, SequenceSample};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::loss::{
    crop_to_heatmap, decode_joints, gaussian_heatmap, loss_pose, loss_reconstruction, loss_total,
    JointSet, PckReport,
};
use crate::model::{ForwardOutput, SdtcModel};
use crate::nn::ParamStore;
use crate::tensor::{Scalar, Tape, Tensor};

const SEED_AUGMENT: u64 = 0xA06;
const SEED_MASKS: u64 = 0x3A5C;
const SEED_SHUFFLE: u64 = 0x5F0F;

/// Decoupled-weight-decay adaptive-moment optimizer.
pub struct AdamW<S: Scalar> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: BTreeMap<String, Vec<S>>,
    v: BTreeMap<String, Vec<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(store: &ParamStore<S>, settings: &TrainSettings) -> Self {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in store.iter() {
            m.insert(name.to_string(), vec![S::ZERO; t.numel()]);
            v.insert(name.to_string(), vec![S::ZERO; t.numel()]);
        }
        AdamW {
            beta1: settings.beta1,
            beta2: settings.beta2,
            eps: settings.eps,
            weight_decay: settings.weight_decay,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. Every trainable parameter must have a gradient entry.
    pub fn step(
        &mut self,
        params: &mut ParamStore<S>,
        grads: &BTreeMap<String, Tensor<S>>,
        lr: f64,
    ) -> Result<()> {
        for name in params.names() {
            if !grads.contains_key(&name) {
                return Err(Error::contract(format!(
                    "optimizer step missing gradient for parameter {name}"
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (S::from_f64(self.beta1), S::from_f64(self.beta2));
        let one_minus_b1 = S::from_f64(1.0 - self.beta1);
        let one_minus_b2 = S::from_f64(1.0 - self.beta2);
        let eps = S::from_f64(self.eps);
        let lr_s = S::from_f64(lr);
        let wd = S::from_f64(self.weight_decay);
        let inv_bc1 = S::from_f64(1.0 / bc1);
        let inv_bc2 = S::from_f64(1.0 / bc2);

        for name in params.names() {
            let grad = &grads[&name];
            let shape_ok = params.get(&name)?.dims() == grad.dims();
            if !shape_ok {
                return Err(Error::dimension(
                    "optimizer_step",
                    format!(
                        "gradient shape {} does not match parameter {name} {}",
                        grad.shape(),
                        params.get(&name)?.shape()
                    ),
                ));
            }
            let m = self.m.get_mut(&name).expect("moment state");
            let v = self.v.get_mut(&name).expect("moment state");
            let g = grad.data();
            params.update(&name, |p| {
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + one_minus_b1 * g[i];
                    v[i] = b2 * v[i] + one_minus_b2 * g[i] * g[i];
                    let m_hat = m[i] * inv_bc1;
                    let v_hat = v[i] * inv_bc2;
                    p[i] -= lr_s * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
                }
            })?;
        }
        Ok(())
    }
}

/// Piecewise-constant schedule: the base rate decays by `lr_decay` at each
/// milestone epoch.
pub fn lr_at(epoch: usize, settings: &TrainSettings) -> f64 {
    let passed = settings
        .milestones
        .iter()
        .filter(|&&m| epoch >= m)
        .count() as i32;
    settings.base_lr * settings.lr_decay.powi(passed)
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_grads<S: Scalar>(grads: &mut BTreeMap<String, Tensor<S>>, max_norm: f64) {
    let mut total = 0.0f64;
    for g in grads.values() {
        for &v in g.data() {
            let v = v.to_f64();
            total += v * v;
        }
    }
    let norm = total.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = S::from_f64(max_norm / norm);
        for g in grads.values_mut() {
            *g = g.mul_scalar(scale).expect("grad scale");
        }
    }
}

/// Heatmap targets for one frame's joints, in heatmap pixel space.
pub fn heatmap_targets<S: Scalar>(
    joints: &JointSet,
    crop_h: usize,
    crop_w: usize,
    map_h: usize,
    map_w: usize,
    sigma: f64,
) -> Result<Tensor<S>> {
    let coords: Vec<[f32; 2]> = joints
        .coords
        .iter()
        .map(|&[x, y]| {
            [
                crop_to_heatmap(x as f64, crop_w, map_w) as f32,
                crop_to_heatmap(y as f64, crop_h, map_h) as f32,
            ]
        })
        .collect();
    let scaled = JointSet::new(coords, joints.visible.clone())?;
    gaussian_heatmap(&scaled, map_h, map_w, sigma)
}

/// Loss components of one sample, as tape tensors.
pub struct SampleLosses<S: Scalar> {
    pub pose: Tensor<S>,
    pub recon: Tensor<S>,
    pub total: Tensor<S>,
}

/// Compute the full objective for one sample's forward output.
///
/// `context_target` defaults to the detached spatial features of this pass;
/// the gradient check passes a frozen copy instead.
pub fn sample_losses<S: Scalar>(
    cfg: &Config,
    out: &ForwardOutput<S>,
    sample: &SequenceSample,
    masks: Option<&crate::mlsme::MaskPair>,
    context_target: Option<&Tensor<S>>,
) -> Result<SampleLosses<S>> {
    let (crop_h, crop_w) = (cfg.data.crop_h, cfg.data.crop_w);
    let (map_h, map_w) = cfg.heatmap_size();
    let key = sample.keyframe;

    let key_target: Tensor<S> = heatmap_targets(
        &sample.joints[key],
        crop_h,
        crop_w,
        map_h,
        map_w,
        cfg.data.sigma,
    )?;
    let pose = loss_pose(
        out.heatmaps(),
        &key_target,
        &sample.joints[key].visible,
        cfg.loss.visibility_masking,
    )?;

    let recon = match (masks, &out.mlsme.reconstruction) {
        (Some(m), Some(rec)) => {
            let mut frame_targets = Vec::with_capacity(sample.seq_len());
            for js in &sample.joints {
                let t: Tensor<S> =
                    heatmap_targets(js, crop_h, crop_w, map_h, map_w, cfg.data.sigma)?;
                let (k, h, w) = (t.dims()[0], t.dims()[1], t.dims()[2]);
                frame_targets.push(t.reshape(&[1, k, h, w])?);
            }
            let refs: Vec<&Tensor<S>> = frame_targets.iter().collect();
            let pose_target = Tensor::concat(&refs, 0)?;
            let default_target = out.spatial.detach();
            let ctx_target = context_target.unwrap_or(&default_target);
            loss_reconstruction(
                &rec.contexts,
                ctx_target,
                &rec.pose_seq,
                &pose_target,
                &m.tube,
                &m.frame,
                cfg.loss.lambda,
                cfg.loss.pose_recon_frames,
            )?
            .total
        }
        _ => Tensor::scalar(S::ZERO),
    };

    let total = loss_total(&pose, &recon)?;
    Ok(SampleLosses { pose, recon, total })
}

/// Name the first non-finite tensor in the forward pass, if any.
fn first_non_finite<S: Scalar>(out: &ForwardOutput<S>, losses: &SampleLosses<S>) -> Option<String> {
    let candidates: Vec<(&str, &Tensor<S>)> = vec![
        ("spatial_tokens", &out.spatial),
        ("motion_features", &out.mlsme.motion),
        ("fused_features", &out.smml.fused),
        ("predicted_heatmaps", &out.smml.heatmaps),
        ("loss_pose", &losses.pose),
        ("loss_reconstruction", &losses.recon),
        ("loss_total", &losses.total),
    ];
    for (name, t) in candidates {
        if t.data().iter().any(|v| !v.is_finite()) {
            return Some(name.to_string());
        }
    }
    None
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepMetrics {
    pub loss_pose: f64,
    pub loss_recon: f64,
    pub loss_total: f64,
}

/// One optimizer step over a batch: per-sample tapes, index-ordered gradient
/// accumulation, averaged update. Deterministic given (seed, step index).
pub fn train_step(
    model: &mut SdtcModel<f32>,
    opt: &mut AdamW<f32>,
    batch: &[(usize, &SequenceSample)],
    lr: f64,
    step_index: u64,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(Error::contract("train_step needs a nonempty batch"));
    }
    let cfg = model.cfg.clone();
    let mut grad_acc: BTreeMap<String, Vec<f32>> = model
        .store
        .iter()
        .map(|(n, t)| (n.to_string(), vec![0.0f32; t.numel()]))
        .collect();
    let mut metrics = StepMetrics::default();

    for &(sample_index, sample) in batch {
        let sample = if cfg.train.augment {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[SEED_AUGMENT, step_index, sample_index as u64],
            ));
            let params = AugmentParams::sample(&mut rng, cfg.data.crop_h, cfg.data.crop_w);
            augment(sample, &params)?
        } else {
            sample.clone()
        };

        let masks = {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &[SEED_MASKS, step_index, sample_index as u64],
            ));
            model.sample_masks(&mut rng)?
        };

        let tape = Tape::new();
        let bound = model.bind(Some(&tape));
        let frames: Vec<Tensor<f32>> = sample.frames.iter().map(|f| f.to_tensor()).collect();
        let out = model.forward(&bound, &frames, masks.as_ref())?;
        let losses = sample_losses(&cfg, &out, &sample, masks.as_ref(), None)?;

        let total_value = losses.total.item()?;
        if !total_value.is_finite() {
            let culprit =
                first_non_finite(&out, &losses).unwrap_or_else(|| "loss_total".to_string());
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step_index}: first non-finite tensor is {culprit}"
            )));
        }
        metrics.loss_pose += losses.pose.item()?.to_f64();
        metrics.loss_recon += losses.recon.item()?.to_f64();
        metrics.loss_total += total_value.to_f64();

        let grads = losses.total.backward()?;
        let named = bound.collect_grads(&grads);
        for (name, g) in named {
            let acc = grad_acc.get_mut(&name).expect("grad slot");
            for (a, &v) in acc.iter_mut().zip(g.data()) {
                *a += v;
            }
        }
    }

    let inv = 1.0 / batch.len() as f32;
    let mut grads: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    for (name, acc) in grad_acc {
        let dims = model.store.get(&name)?.dims().to_vec();
        let scaled: Vec<f32> = acc.iter().map(|&v| v * inv).collect();
        grads.insert(name, Tensor::from_vec(&dims, scaled)?);
    }
    if cfg.train.grad_clip > 0.0 {
        clip_grads(&mut grads, cfg.train.grad_clip);
    }
    opt.step(&mut model.store, &grads, lr)?;

    let n = batch.len() as f64;
    metrics.loss_pose /= n;
    metrics.loss_recon /= n;
    metrics.loss_total /= n;
    Ok(metrics)
}

/// One pass over the dataset in a seeded shuffle order.
pub fn train_epoch(
    model: &mut SdtcModel<f32>,
    opt: &mut AdamW<f32>,
    data: &[SequenceSample],
    epoch: usize,
) -> Result<StepMetrics> {
    let cfg = model.cfg.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[SEED_SHUFFLE, epoch as u64]));
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let lr = lr_at(epoch, &cfg.train);
    let mut sums = StepMetrics::default();
    let mut steps = 0usize;
    for chunk in order.chunks(cfg.train.batch_size) {
        if cfg.train.max_steps > 0 && opt.step_count() >= cfg.train.max_steps as u64 {
            break;
        }
        let batch: Vec<(usize, &SequenceSample)> =
            chunk.iter().map(|&i| (i, &data[i])).collect();
        let m = train_step(model, opt, &batch, lr, opt.step_count())?;
        sums.loss_pose += m.loss_pose;
        sums.loss_recon += m.loss_recon;
        sums.loss_total += m.loss_total;
        steps += 1;
    }
    if steps > 0 {
        let n = steps as f64;
        sums.loss_pose /= n;
        sums.loss_recon /= n;
        sums.loss_total /= n;
    }
    Ok(sums)
}

/// Inference over a dataset: no masking, no parameter mutation. Returns the
/// accuracy report and the decoded keyframe joints per sample.
pub fn evaluate(
    model: &SdtcModel<f32>,
    data: &[SequenceSample],
) -> Result<(PckReport, Vec<Vec<[f32; 2]>>)> {
    let cfg = &model.cfg;
    let bound = model.bind(None);
    let mut predictions = Vec::with_capacity(data.len());
    for sample in data {
        let frames: Vec<Tensor<f32>> = sample.frames.iter().map(|f| f.to_tensor()).collect();
        let out = model.forward(&bound, &frames, None)?;
        predictions.push(decode_joints(
            out.heatmaps(),
            cfg.data.crop_h,
            cfg.data.crop_w,
        )?);
    }
    let gt: Vec<&JointSet> = data.iter().map(|s| &s.joints[s.keyframe]).collect();
    let report = crate::loss::pck_accuracy(
        &predictions,
        &gt,
        cfg.data.crop_h,
        cfg.data.crop_w,
        cfg.eval.pck_alpha,
    )?;
    Ok((report, predictions))
}

// ── checkpoint container ───────────────────────────────────────────────
//
// magic "SDTC", version u32, entry count u32; per entry:
// name length u16 + UTF-8 name, dtype u8 (0 = f32), rank u8,
// extents u32 each, raw little-endian f32 values.

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SDTC";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

pub fn write_tensors(path: &Path, entries: &[(String, Tensor<f32>)]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::contract(format!("entry name too long: {name}")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[DTYPE_F32])?;
        let dims = tensor.dims();
        w.write_all(&[dims.len() as u8])?;
        for &d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let file = File::open(path)?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Parse {
                offset: *pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let out = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(out)
    };
    let magic = take(&mut pos, 4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"),
        });
    }
    let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let count = u32::from_le_bytes(take(&mut pos, 4, "entry count")?.try_into().unwrap());
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len =
            u16::from_le_bytes(take(&mut pos, 2, "name length")?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len, "name")?.to_vec()).map_err(|_| {
            Error::Parse {
                offset: pos as u64,
                message: "entry name is not UTF-8".into(),
            }
        })?;
        let dtype = take(&mut pos, 1, "dtype")?[0];
        if dtype != DTYPE_F32 {
            return Err(Error::Parse {
                offset: pos as u64 - 1,
                message: format!("unsupported dtype code {dtype}"),
            });
        }
        let rank = take(&mut pos, 1, "rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(take(&mut pos, 4, "extent")?.try_into().unwrap()) as usize);
        }
        let numel: usize = dims.iter().product();
        let raw = take(&mut pos, numel * 4, "values")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor::from_vec(&dims, data)?));
    }
    if pos != bytes.len() {
        return Err(Error::Parse {
            offset: pos as u64,
            message: format!("{} trailing bytes", bytes.len() - pos),
        });
    }
    Ok(entries)
}

pub fn save_params(store: &ParamStore<f32>, path: &Path) -> Result<()> {
    let entries: Vec<(String, Tensor<f32>)> = store
        .iter()
        .map(|(n, t)| (n.to_string(), t.detach()))
        .collect();
    write_tensors(path, &entries)
}

/// Load a parameter checkpoint. Names and shapes must match the store
/// exactly.
pub fn load_params(store: &mut ParamStore<f32>, path: &Path) -> Result<()> {
    let entries = read_tensors(path)?;
    let expected: std::collections::BTreeSet<String> = store.names().into_iter().collect();
    let got: std::collections::BTreeSet<String> =
        entries.iter().map(|(n, _)| n.clone()).collect();
    if expected != got {
        let missing: Vec<_> = expected.difference(&got).cloned().collect();
        let extra: Vec<_> = got.difference(&expected).cloned().collect();
        return Err(Error::contract(format!(
            "checkpoint does not match model: missing {missing:?}, unexpected {extra:?}"
        )));
    }
    for (name, tensor) in entries {
        store.set(&name, tensor)?;
    }
    Ok(())
}

/// Optimizer state sidecar: moment tensors plus step (and epoch) counters.
pub fn save_optimizer(opt: &AdamW<f32>, epochs_done: usize, path: &Path) -> Result<()> {
    let mut entries: Vec<(String, Tensor<f32>)> = Vec::new();
    for (name, m) in &opt.m {
        entries.push((
            format!("m.{name}"),
            Tensor::from_vec(&[m.len()], m.clone())?,
        ));
    }
    for (name, v) in &opt.v {
        entries.push((
            format!("v.{name}"),
            Tensor::from_vec(&[v.len()], v.clone())?,
        ));
    }
    entries.push(("step".into(), Tensor::scalar(opt.step as f32)));
    entries.push(("epoch".into(), Tensor::scalar(epochs_done as f32)));
    write_tensors(path, &entries)
}

/// Restore optimizer state written by [`save_optimizer`]; returns the number
/// of completed epochs.
pub fn load_optimizer(opt: &mut AdamW<f32>, path: &Path) -> Result<usize> {
    let entries = read_tensors(path)?;
    let mut epoch = 0usize;
    for (name, tensor) in entries {
        if name == "step" {
            opt.step = tensor.item()? as u64;
        } else if name == "epoch" {
            epoch = tensor.item()? as usize;
        } else if let Some(param) = name.strip_prefix("m.") {
            let slot = opt.m.get_mut(param).ok_or_else(|| {
                Error::contract(format!("optimizer state has unknown parameter {param}"))
            })?;
            if slot.len() != tensor.numel() {
                return Err(Error::contract(format!(
                    "optimizer state size mismatch for {param}"
                )));
            }
            slot.copy_from_slice(tensor.data());
        } else if let Some(param) = name.strip_prefix("v.") {
            let slot = opt.v.get_mut(param).ok_or_else(|| {
                Error::contract(format!("optimizer state has unknown parameter {param}"))
            })?;
            if slot.len() != tensor.numel() {
                return Err(Error::contract(format!(
                    "optimizer state size mismatch for {param}"
                )));
            }
            slot.copy_from_slice(tensor.data());
        } else {
            return Err(Error::contract(format!(
                "unexpected optimizer state entry {name}"
            )));
        }
    }
    Ok(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn settings() -> TrainSettings {
        Config::default().train
    }

    #[test]
    fn lr_schedule_piecewise() {
        let s = settings();
        assert_eq!(lr_at(0, &s), 5e-4);
        assert_eq!(lr_at(19, &s), 5e-4);
        assert!((lr_at(20, &s) - 5e-5).abs() < 1e-18);
        assert!((lr_at(39, &s) - 5e-5).abs() < 1e-18);
        assert!((lr_at(40, &s) - 5e-6).abs() < 1e-18);
        assert!((lr_at(49, &s) - 5e-6).abs() < 1e-18);
    }

    #[test]
    fn adamw_zero_grads_and_decay() {
        let mut store: ParamStore<f64> = ParamStore::new(0);
        store
            .add("p", &[4], crate::nn::Init::Uniform { a: 1.0 })
            .unwrap();
        let original = store.get("p").unwrap().data().to_vec();
        let mut s = settings();
        s.weight_decay = 0.0;
        let mut opt = AdamW::new(&store, &s);
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::zeros(&[4]).unwrap());
        opt.step(&mut store, &grads, 1e-3).unwrap();
        assert_eq!(store.get("p").unwrap().data(), &original[..]);

        // decoupled decay shrinks by exactly (1 - lr*wd) under zero grads
        let mut s = settings();
        s.weight_decay = 0.01;
        let mut opt = AdamW::new(&store, &s);
        let before = store.get("p").unwrap().data().to_vec();
        opt.step(&mut store, &grads, 0.1).unwrap();
        let after = store.get("p").unwrap().data();
        for (b, a) in before.iter().zip(after) {
            assert!((a - b * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
        }
    }

    #[test]
    fn adamw_first_step_closed_form() {
        // single scalar, g constant: m_hat = g, v_hat = g^2,
        // update = -lr * g / (|g| + eps)
        let mut store: ParamStore<f64> = ParamStore::new(0);
        store.add("p", &[1], crate::nn::Init::Constant(2.0)).unwrap();
        let mut s = settings();
        s.weight_decay = 0.0;
        s.eps = 1e-8;
        let mut opt = AdamW::new(&store, &s);
        let g = -0.75;
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::scalar(g));
        let lr = 1e-2;
        opt.step(&mut store, &grads, lr).unwrap();
        let expected = 2.0 - lr * (g / (g.abs() + 1e-8));
        let got = store.get("p").unwrap().data()[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn adamw_missing_grad_is_contract_error() {
        let mut store: ParamStore<f64> = ParamStore::new(0);
        store.add("p", &[2], crate::nn::Init::Zeros).unwrap();
        store.add("q", &[2], crate::nn::Init::Zeros).unwrap();
        let mut opt = AdamW::new(&store, &settings());
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::zeros(&[2]).unwrap());
        let err = opt.step(&mut store, &grads, 1e-3).unwrap_err();
        assert!(err.to_string().contains('q'), "{err}");
    }

    #[test]
    fn grad_clip_rescales_global_norm() {
        let mut grads: BTreeMap<String, Tensor<f64>> = BTreeMap::new();
        grads.insert("a".into(), Tensor::from_vec(&[2], vec![3.0, 0.0]).unwrap());
        grads.insert("b".into(), Tensor::from_vec(&[1], vec![4.0]).unwrap());
        clip_grads(&mut grads, 1.0); // norm was 5
        let norm = (grads["a"].data()[0].powi(2) + grads["b"].data()[0].powi(2)).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((grads["a"].data()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn tensor_container_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sdtc");
        let entries = vec![
            (
                "alpha".to_string(),
                Tensor::from_vec(&[2, 3], vec![1.0f32, -2.0, 0.5, 3.25, -0.125, 9.0]).unwrap(),
            ),
            ("beta.gamma".to_string(), Tensor::scalar(42.0f32)),
        ];
        write_tensors(&path, &entries).unwrap();
        let back = read_tensors(&path).unwrap();
        assert_eq!(back.len(), 2);
        for ((n0, t0), (n1, t1)) in entries.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0.dims(), t1.dims());
            assert_eq!(t0.data(), t1.data());
        }

        let bytes = std::fs::read(&path).unwrap();
        let err = {
            let trunc = dir.path().join("trunc.sdtc");
            std::fs::write(&trunc, &bytes[..bytes.len() - 3]).unwrap();
            read_tensors(&trunc).unwrap_err()
        };
        assert!(matches!(err, Error::Parse { .. }));
    }
}
