//! Heatmap targets, training losses, keypoint accuracy, and the
//! finite-difference gradient oracle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mlsme::{FrameMask, TubeMask};
use crate::nn::ParamStore;
use crate::tensor::{Scalar, Tensor};
use crate::{derive_seed, fnv1a64};

/// Joint annotations for one person-frame: K coordinates in crop pixels plus
/// per-joint visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    pub coords: Vec<[f32; 2]>,
    pub visible: Vec<bool>,
}

impl JointSet {
    pub fn new(coords: Vec<[f32; 2]>, visible: Vec<bool>) -> Result<Self> {
        if coords.len() != visible.len() {
            return Err(Error::contract(format!(
                "joint coords ({}) and visibility ({}) lengths differ",
                coords.len(),
                visible.len()
            )));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("joint coordinates must be finite".into()));
        }
        Ok(JointSet { coords, visible })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Map a crop-pixel coordinate to heatmap pixels under half-pixel centers.
pub fn crop_to_heatmap(v: f64, crop_extent: usize, map_extent: usize) -> f64 {
    let s = map_extent as f64 / crop_extent as f64;
    (v + 0.5) * s - 0.5
}

/// Inverse of [`crop_to_heatmap`].
pub fn heatmap_to_crop(v: f64, crop_extent: usize, map_extent: usize) -> f64 {
    let s = map_extent as f64 / crop_extent as f64;
    (v + 0.5) / s - 0.5
}

/// Per-joint 2D Gaussian targets, amplitude 1, on an (h, w) grid.
///
/// Coordinates are taken in heatmap pixels. Invisible joints produce all-zero
/// channels; joints outside the grid leave truncated tails.
pub fn gaussian_heatmap<S: Scalar>(
    joints: &JointSet,
    h: usize,
    w: usize,
    sigma: f64,
) -> Result<Tensor<S>> {
    if sigma <= 0.0 {
        return Err(Error::contract(format!("sigma must be positive, got {sigma}")));
    }
    let k = joints.len();
    let mut data = vec![S::ZERO; k * h * w];
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (ki, (&[x, y], &vis)) in joints.coords.iter().zip(&joints.visible).enumerate() {
        if !vis {
            continue;
        }
        let (x, y) = (x as f64, y as f64);
        for v in 0..h {
            for u in 0..w {
                let d2 = (u as f64 - x).powi(2) + (v as f64 - y).powi(2);
                data[ki * h * w + v * w + u] = S::from_f64((-d2 * inv).exp());
            }
        }
    }
    Tensor::from_vec(&[k, h, w], data)
}

/// Mean squared error over visible-joint heatmap channels.
///
/// With `visibility_masking` off, every channel counts. An empty selection
/// yields 0.
pub fn loss_pose<S: Scalar>(
    predicted: &Tensor<S>,
    target: &Tensor<S>,
    visible: &[bool],
    visibility_masking: bool,
) -> Result<Tensor<S>> {
    if predicted.shape() != target.shape() {
        return Err(Error::dimension(
            "loss_pose",
            format!("shapes differ: {} vs {}", predicted.shape(), target.shape()),
        ));
    }
    let dims = predicted.dims();
    let k = dims[0];
    if visible.len() != k {
        return Err(Error::dimension(
            "loss_pose",
            format!("visibility length {} != joint count {k}", visible.len()),
        ));
    }
    let included: Vec<bool> = if visibility_masking {
        visible.to_vec()
    } else {
        vec![true; k]
    };
    let n_included = included.iter().filter(|&&v| v).count();
    if n_included == 0 {
        return Ok(Tensor::scalar(S::ZERO));
    }
    let diff = predicted.sub(target)?;
    let sq = diff.mul(&diff)?;
    let mask_vals: Vec<S> = included
        .iter()
        .map(|&v| if v { S::ONE } else { S::ZERO })
        .collect();
    let mask = Tensor::from_vec(&[k, 1, 1], mask_vals)?;
    let per_value = S::from_f64(1.0 / (n_included * dims[1] * dims[2]) as f64);
    sq.mul(&mask)?.sum_all()?.mul_scalar(per_value)
}

/// Which frames the reconstruction pose term covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseReconFrames {
    All,
    MaskedOnly,
}

/// The two parts of the reconstruction loss, already weighted.
pub struct ReconLoss<S: Scalar> {
    pub context_term: Tensor<S>,
    pub pose_term: Tensor<S>,
    pub total: Tensor<S>,
}

/// Masked context reconstruction (L1, weighted by lambda) plus pose sequence
/// reconstruction (MSE).
///
/// The L1 term runs only over token slots that are tube-masked or belong to
/// frame-masked frames; the caller passes the context target already
/// detached. The pose term covers all frames or only masked ones per
/// `pose_frames`.
#[allow(clippy::too_many_arguments)]
pub fn loss_reconstruction<S: Scalar>(
    contexts: &Tensor<S>,
    context_target: &Tensor<S>,
    pose_seq: &Tensor<S>,
    pose_target: &Tensor<S>,
    tube: &TubeMask,
    frame: &FrameMask,
    lambda: f64,
    pose_frames: PoseReconFrames,
) -> Result<ReconLoss<S>> {
    if contexts.shape() != context_target.shape() {
        return Err(Error::dimension(
            "loss_reconstruction",
            format!(
                "context shapes differ: {} vs {}",
                contexts.shape(),
                context_target.shape()
            ),
        ));
    }
    if pose_seq.shape() != pose_target.shape() {
        return Err(Error::dimension(
            "loss_reconstruction",
            format!(
                "pose shapes differ: {} vs {}",
                pose_seq.shape(),
                pose_target.shape()
            ),
        ));
    }
    let dims = contexts.dims();
    let (t, l, c) = (dims[0], dims[1], dims[2]);
    if tube.masked.len() != l || frame.masked.len() != t {
        return Err(Error::dimension(
            "loss_reconstruction",
            format!(
                "mask lengths ({}, {}) do not match tokens ({t}, {l})",
                tube.masked.len(),
                frame.masked.len()
            ),
        ));
    }

    // L1 over masked slots only
    let mut slot_weights = vec![S::ZERO; t * l];
    let mut n_masked = 0usize;
    for ti in 0..t {
        for li in 0..l {
            if tube.masked[li] || frame.masked[ti] {
                slot_weights[ti * l + li] = S::ONE;
                n_masked += 1;
            }
        }
    }
    let context_term = if n_masked == 0 || lambda == 0.0 {
        Tensor::scalar(S::ZERO)
    } else {
        let weights = Tensor::from_vec(&[t, l, 1], slot_weights)?;
        let abs_diff = contexts.sub(context_target)?.abs()?;
        let mean = S::from_f64(1.0 / (n_masked * c) as f64);
        abs_diff
            .mul(&weights)?
            .sum_all()?
            .mul_scalar(mean)?
            .mul_scalar(S::from_f64(lambda))?
    };

    let pose_term = match pose_frames {
        PoseReconFrames::All => {
            let diff = pose_seq.sub(pose_target)?;
            diff.mul(&diff)?.mean_all()?
        }
        PoseReconFrames::MaskedOnly => {
            let n_frames = frame.count();
            if n_frames == 0 {
                Tensor::scalar(S::ZERO)
            } else {
                let fw: Vec<S> = frame
                    .masked
                    .iter()
                    .map(|&m| if m { S::ONE } else { S::ZERO })
                    .collect();
                let pd = pose_seq.dims();
                let weights = Tensor::from_vec(&[t, 1, 1, 1], fw)?;
                let diff = pose_seq.sub(pose_target)?;
                let mean = S::from_f64(1.0 / (n_frames * pd[1] * pd[2] * pd[3]) as f64);
                diff.mul(&diff)?.mul(&weights)?.sum_all()?.mul_scalar(mean)?
            }
        }
    };

    let total = context_term.add(&pose_term)?;
    Ok(ReconLoss {
        context_term,
        pose_term,
        total,
    })
}

/// Total training objective: pose loss plus reconstruction loss.
pub fn loss_total<S: Scalar>(pose: &Tensor<S>, recon: &Tensor<S>) -> Result<Tensor<S>> {
    pose.add(recon)
}

/// Row-major argmax of each heatmap channel, as (x, y) heatmap coordinates.
pub fn argmax_coords<S: Scalar>(heatmaps: &Tensor<S>) -> Result<Vec<[usize; 2]>> {
    let dims = heatmaps.dims();
    if dims.len() != 3 {
        return Err(Error::dimension(
            "argmax_coords",
            format!("expected (K, H, W), got {}", heatmaps.shape()),
        ));
    }
    let (k, h, w) = (dims[0], dims[1], dims[2]);
    let data = heatmaps.data();
    let mut out = Vec::with_capacity(k);
    for ki in 0..k {
        let base = ki * h * w;
        let mut best = 0usize;
        for i in 1..h * w {
            if data[base + i] > data[base + best] {
                best = i;
            }
        }
        out.push([best % w, best / w]);
    }
    Ok(out)
}

/// Decoded joint positions in crop pixels for one heatmap set.
pub fn decode_joints<S: Scalar>(
    heatmaps: &Tensor<S>,
    crop_h: usize,
    crop_w: usize,
) -> Result<Vec<[f32; 2]>> {
    let dims = heatmaps.dims();
    let (h, w) = (dims[1], dims[2]);
    Ok(argmax_coords(heatmaps)?
        .into_iter()
        .map(|[x, y]| {
            [
                heatmap_to_crop(x as f64, crop_w, w) as f32,
                heatmap_to_crop(y as f64, crop_h, h) as f32,
            ]
        })
        .collect())
}

/// Per-joint percentage of correct keypoints plus the mean over joints that
/// have at least one visible instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PckReport {
    /// Per joint: (correct, visible). Accuracy is only defined when visible > 0.
    pub per_joint: Vec<(usize, usize)>,
    pub alpha: f64,
}

impl PckReport {
    pub fn joint_accuracy(&self, k: usize) -> Option<f64> {
        let (correct, visible) = self.per_joint[k];
        (visible > 0).then(|| 100.0 * correct as f64 / visible as f64)
    }

    /// Mean accuracy (percent) over joints with visible instances; 0 when none.
    pub fn mean(&self) -> f64 {
        let accs: Vec<f64> = (0..self.per_joint.len())
            .filter_map(|k| self.joint_accuracy(k))
            .collect();
        if accs.is_empty() {
            0.0
        } else {
            accs.iter().sum::<f64>() / accs.len() as f64
        }
    }

    /// One "name accuracy" line per joint plus a "mean" line.
    pub fn format(&self, names: &[&str]) -> String {
        let mut out = String::new();
        for (k, name) in names.iter().enumerate() {
            match self.joint_accuracy(k) {
                Some(acc) => out.push_str(&format!("{name} {acc:.2}\n")),
                None => out.push_str(&format!("{name} n/a\n")),
            }
        }
        out.push_str(&format!("mean {:.2}\n", self.mean()));
        out
    }
}

/// A visible joint counts as correct when its predicted position lies within
/// `alpha * max(crop_h, crop_w)` of the ground truth.
pub fn pck_accuracy(
    predictions: &[Vec<[f32; 2]>],
    ground_truth: &[&JointSet],
    crop_h: usize,
    crop_w: usize,
    alpha: f64,
) -> Result<PckReport> {
    if alpha <= 0.0 {
        return Err(Error::contract(format!("pck alpha must be positive, got {alpha}")));
    }
    if predictions.len() != ground_truth.len() {
        return Err(Error::contract(format!(
            "prediction count {} != ground truth count {}",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let k = ground_truth.first().map(|j| j.len()).unwrap_or(0);
    let mut per_joint = vec![(0usize, 0usize); k];
    let threshold = alpha * crop_h.max(crop_w) as f64;
    for (pred, gt) in predictions.iter().zip(ground_truth) {
        if pred.len() != gt.len() {
            return Err(Error::contract(format!(
                "instance joint counts differ: {} vs {}",
                pred.len(),
                gt.len()
            )));
        }
        for ki in 0..gt.len() {
            if !gt.visible[ki] {
                continue;
            }
            per_joint[ki].1 += 1;
            let dx = (pred[ki][0] - gt.coords[ki][0]) as f64;
            let dy = (pred[ki][1] - gt.coords[ki][1]) as f64;
            if (dx * dx + dy * dy).sqrt() <= threshold {
                per_joint[ki].0 += 1;
            }
        }
    }
    Ok(PckReport { per_joint, alpha })
}

// ── finite-difference gradient oracle ─────────────────────────────────

#[derive(Debug, Clone)]
pub struct FdOptions {
    pub step: f64,
    pub tol: f64,
    /// Coordinates sampled per parameter tensor.
    pub coords_per_tensor: usize,
    /// Floor for the relative-error denominator; guards near-zero gradients.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            step: 1e-5,
            tol: 1e-6,
            coords_per_tensor: 32,
            denom_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// (parameter, flat index, analytic, finite-difference) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    pub tol: f64,
    pub pass: bool,
}

impl FdReport {
    pub fn format(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!(
            "gradient check: {status} max_rel_err {:.3e} over {} coords (tol {:.1e})\n",
            self.max_rel_err, self.coords_checked, self.tol
        );
        if let Some((name, idx, a, fd)) = &self.worst {
            s.push_str(&format!(
                "worst: {name}[{idx}] analytic {a:.6e} vs finite-diff {fd:.6e}\n"
            ));
        }
        s
    }
}

/// Verify analytic gradients against central finite differences at 64-bit.
///
/// `loss_fn` must be a deterministic function of the parameter values (fix
/// masks, data, and augmentation outside). `analytic` comes from one backward
/// pass at the unperturbed parameters.
pub fn finite_diff_check(
    params: &ParamStore<f64>,
    analytic: &BTreeMap<String, Tensor<f64>>,
    mut loss_fn: impl FnMut(&ParamStore<f64>) -> Result<f64>,
    opts: &FdOptions,
) -> Result<FdReport> {
    let mut work = params.clone_values();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut checked = 0usize;

    let names = params.names();
    for name in &names {
        let grad = analytic.get(name).ok_or_else(|| {
            Error::contract(format!("analytic gradients missing parameter {name}"))
        })?;
        let n = grad.numel();
        let take = opts.coords_per_tensor.min(n);
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[fnv1a64(name.as_bytes())]));
        let coords = sample_indices(n, take, &mut rng);
        for idx in coords {
            let original = work.get(name)?.data()[idx];
            work.update(name, |d| d[idx] = original + opts.step)?;
            let f_plus = loss_fn(&work)?;
            work.update(name, |d| d[idx] = original - opts.step)?;
            let f_minus = loss_fn(&work)?;
            work.update(name, |d| d[idx] = original)?;

            let fd = (f_plus - f_minus) / (2.0 * opts.step);
            let a = grad.data()[idx];
            let denom = a.abs().max(fd.abs()).max(opts.denom_floor);
            let rel = (a - fd).abs() / denom;
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = Some((name.clone(), idx, a, fd));
            }
        }
    }

    Ok(FdReport {
        max_rel_err: max_rel,
        coords_checked: checked,
        worst,
        tol: opts.tol,
        pass: max_rel <= opts.tol,
    })
}

fn sample_indices(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + rng.gen_range(0..n - i);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;

    fn joints(coords: &[[f32; 2]], visible: &[bool]) -> JointSet {
        JointSet::new(coords.to_vec(), visible.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_peak_and_falloff() {
        let js = joints(&[[3.0, 2.0]], &[true]);
        let maps: Tensor<f64> = gaussian_heatmap(&js, 5, 7, 1.0).unwrap();
        assert_eq!(maps.dims(), &[1, 5, 7]);
        // exactly 1 at the joint pixel
        assert_eq!(maps.data()[2 * 7 + 3], 1.0);
        // e^{-1/2} one pixel away
        let expect = (-0.5f64).exp();
        assert!((maps.data()[2 * 7 + 4] - expect).abs() < 1e-12);
        assert!((maps.data()[1 * 7 + 3] - expect).abs() < 1e-12);

        let hidden = joints(&[[3.0, 2.0]], &[false]);
        let maps: Tensor<f64> = gaussian_heatmap(&hidden, 5, 7, 1.0).unwrap();
        assert!(maps.data().iter().all(|&v| v == 0.0));

        assert!(gaussian_heatmap::<f64>(&js, 5, 7, 0.0).is_err());
    }

    #[test]
    fn pose_loss_contracts() {
        let js = joints(&[[1.0, 1.0], [2.0, 2.0]], &[true, true]);
        let target: Tensor<f64> = gaussian_heatmap(&js, 4, 4, 1.5).unwrap();

        let zero_loss = loss_pose(&target, &target, &js.visible, true).unwrap();
        assert_eq!(zero_loss.item().unwrap(), 0.0);

        let pred = Tensor::zeros(&[2, 4, 4]).unwrap();
        let loss = loss_pose(&pred, &target, &js.visible, true).unwrap();
        let expect: f64 =
            target.data().iter().map(|v| v * v).sum::<f64>() / (2.0 * 16.0);
        assert!((loss.item().unwrap() - expect).abs() < 1e-12);

        // invisible channels excluded under masking
        let half = vec![true, false];
        let loss_half = loss_pose(&pred, &target, &half, true).unwrap();
        let expect_half: f64 =
            target.data()[..16].iter().map(|v| v * v).sum::<f64>() / 16.0;
        assert!((loss_half.item().unwrap() - expect_half).abs() < 1e-12);

        // all invisible -> defined as 0
        let none = vec![false, false];
        assert_eq!(loss_pose(&pred, &target, &none, true).unwrap().item().unwrap(), 0.0);

        let bad = Tensor::zeros(&[2, 4, 5]).unwrap();
        assert!(loss_pose(&bad, &target, &js.visible, true).is_err());
    }

    #[test]
    fn reconstruction_loss_masks_and_linearity() {
        // T=2, L=2, C=2 hand instance
        let contexts = Tensor::from_vec(
            &[2, 2, 2],
            vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        )
        .unwrap();
        let target = Tensor::zeros(&[2, 2, 2]).unwrap();
        let pose = Tensor::zeros(&[2, 1, 2, 2]).unwrap();
        let pose_t = Tensor::zeros(&[2, 1, 2, 2]).unwrap();
        let tube = TubeMask {
            masked: vec![true, false],
        };
        let frame = FrameMask {
            masked: vec![false, false],
        };

        // masked slots: (t, l=0) for both t -> values 1,2,5,6; mean |.| = 3.5
        let out = loss_reconstruction(
            &contexts, &target, &pose, &pose_t, &tube, &frame, 1.0,
            PoseReconFrames::All,
        )
        .unwrap();
        assert!((out.context_term.item().unwrap() - 3.5).abs() < 1e-12);
        assert_eq!(out.pose_term.item().unwrap(), 0.0);

        // lambda linearity is exact
        let double = loss_reconstruction(
            &contexts, &target, &pose, &pose_t, &tube, &frame, 2.0,
            PoseReconFrames::All,
        )
        .unwrap();
        assert_eq!(
            double.context_term.item().unwrap(),
            2.0 * out.context_term.item().unwrap()
        );

        // perturbing an unmasked slot leaves the term unchanged
        let mut data = contexts.data().to_vec();
        data[2] += 100.0; // (t=0, l=1) unmasked
        data[3] -= 50.0;
        let perturbed = Tensor::from_vec(&[2, 2, 2], data).unwrap();
        let out2 = loss_reconstruction(
            &perturbed, &target, &pose, &pose_t, &tube, &frame, 1.0,
            PoseReconFrames::All,
        )
        .unwrap();
        assert_eq!(
            out.context_term.item().unwrap(),
            out2.context_term.item().unwrap()
        );

        // no masked slots -> first term 0
        let none = TubeMask {
            masked: vec![false, false],
        };
        let out3 = loss_reconstruction(
            &contexts, &target, &pose, &pose_t, &none, &frame, 1.0,
            PoseReconFrames::All,
        )
        .unwrap();
        assert_eq!(out3.context_term.item().unwrap(), 0.0);
    }

    #[test]
    fn reconstruction_pose_term_frame_selection() {
        let contexts = Tensor::zeros(&[2, 2, 2]).unwrap();
        let target = Tensor::zeros(&[2, 2, 2]).unwrap();
        let pose = Tensor::full(&[2, 1, 1, 2], 1.0f64).unwrap();
        let pose_t = Tensor::zeros(&[2, 1, 1, 2]).unwrap();
        let tube = TubeMask {
            masked: vec![false, false],
        };
        let frame = FrameMask {
            masked: vec![true, false],
        };
        let all = loss_reconstruction(
            &contexts, &target, &pose, &pose_t, &tube, &frame, 0.01,
            PoseReconFrames::All,
        )
        .unwrap();
        assert!((all.pose_term.item().unwrap() - 1.0).abs() < 1e-12);

        let masked = loss_reconstruction(
            &contexts, &target, &pose, &pose_t, &tube, &frame, 0.01,
            PoseReconFrames::MaskedOnly,
        )
        .unwrap();
        // only frame 0 counts; its error is 1 everywhere
        assert!((masked.pose_term.item().unwrap() - 1.0).abs() < 1e-12);

        let no_frames = FrameMask {
            masked: vec![false, false],
        };
        let empty = loss_reconstruction(
            &contexts, &target, &pose, &pose_t, &tube, &no_frames, 0.01,
            PoseReconFrames::MaskedOnly,
        )
        .unwrap();
        assert_eq!(empty.pose_term.item().unwrap(), 0.0);
    }

    #[test]
    fn loss_total_is_plain_addition() {
        let a = Tensor::scalar(1.5f64);
        let b = Tensor::scalar(0.25f64);
        assert_eq!(loss_total(&a, &b).unwrap().item().unwrap(), 1.75);
        assert_eq!(
            loss_total(&Tensor::scalar(0.0f64), &Tensor::scalar(0.0))
                .unwrap()
                .item()
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn argmax_and_decode() {
        let mut data = vec![0.0f64; 2 * 4 * 6];
        data[1 * 6 + 2] = 3.0; // joint 0 peak at (x=2, y=1)
        data[24 + 3 * 6 + 5] = 1.5; // joint 1 peak at (x=5, y=3)
        let maps = Tensor::from_vec(&[2, 4, 6], data).unwrap();
        assert_eq!(argmax_coords(&maps).unwrap(), vec![[2, 1], [5, 3]]);

        // ties break to the first element in row-major order
        let flat: Tensor<f64> = Tensor::zeros(&[1, 2, 2]).unwrap();
        assert_eq!(argmax_coords(&flat).unwrap(), vec![[0, 0]]);

        let decoded = decode_joints(&maps, 16, 24).unwrap();
        // heatmap (2, 1) at scale 4 -> crop ((2+0.5)*4-0.5, (1+0.5)*4-0.5)
        assert!((decoded[0][0] - 9.5).abs() < 1e-6);
        assert!((decoded[0][1] - 5.5).abs() < 1e-6);
    }

    #[test]
    fn pck_trivial_and_mixed_cases() {
        let gt1 = joints(&[[10.0, 10.0], [30.0, 30.0]], &[true, true]);
        let exact = vec![vec![[10.0, 10.0], [30.0, 30.0]]];
        let report = pck_accuracy(&exact, &[&gt1], 64, 48, 0.2).unwrap();
        assert_eq!(report.joint_accuracy(0), Some(100.0));
        assert_eq!(report.joint_accuracy(1), Some(100.0));
        assert_eq!(report.mean(), 100.0);

        let far = vec![vec![[100.0, 100.0], [-50.0, -50.0]]];
        let report = pck_accuracy(&far, &[&gt1], 64, 48, 0.2).unwrap();
        assert_eq!(report.mean(), 0.0);

        // 4-instance mixed case against a brute-force count
        let gts = [
            joints(&[[5.0, 5.0], [20.0, 20.0]], &[true, true]),
            joints(&[[8.0, 8.0], [25.0, 25.0]], &[true, false]),
            joints(&[[12.0, 40.0], [6.0, 6.0]], &[false, true]),
            joints(&[[0.0, 0.0], [47.0, 63.0]], &[true, true]),
        ];
        let preds = vec![
            vec![[6.0, 5.0], [45.0, 45.0]],  // joint0 close, joint1 far
            vec![[8.0, 20.0], [0.0, 0.0]],   // joint0 within 12.8, joint1 invisible
            vec![[0.0, 0.0], [6.0, 18.0]],   // joint0 invisible, joint1 within
            vec![[13.0, 0.0], [47.0, 50.0]], // joint0 border (12.8 ok), joint1 ok
        ];
        let gt_refs: Vec<&JointSet> = gts.iter().collect();
        let report = pck_accuracy(&preds, &gt_refs, 64, 48, 0.2).unwrap();
        // threshold = 0.2 * 64 = 12.8
        // joint0 visible in instances 0,1,3: distances 1, 12, 13 -> correct 2/3
        // joint1 visible in instances 0,2,3: distances 35.4, 12, 13 -> correct 1/3
        assert_eq!(report.per_joint[0], (2, 3));
        assert_eq!(report.per_joint[1], (1, 3));

        // scale consistency: double crop and all coordinates
        let gts2: Vec<JointSet> = gts
            .iter()
            .map(|j| {
                joints(
                    &j.coords.iter().map(|&[x, y]| [x * 2.0, y * 2.0]).collect::<Vec<_>>(),
                    &j.visible,
                )
            })
            .collect();
        let preds2: Vec<Vec<[f32; 2]>> = preds
            .iter()
            .map(|p| p.iter().map(|&[x, y]| [x * 2.0, y * 2.0]).collect())
            .collect();
        let gt2_refs: Vec<&JointSet> = gts2.iter().collect();
        let report2 = pck_accuracy(&preds2, &gt2_refs, 128, 96, 0.2).unwrap();
        assert_eq!(report.per_joint, report2.per_joint);
    }

    #[test]
    fn report_formatting() {
        let report = PckReport {
            per_joint: vec![(1, 2), (0, 0)],
            alpha: 0.2,
        };
        let text = report.format(&["wrist", "ankle"]);
        assert!(text.contains("wrist 50.00"));
        assert!(text.contains("ankle n/a"));
        assert!(text.lines().last().unwrap().starts_with("mean 50.00"));
    }

    #[test]
    fn finite_diff_check_trivial_oracles() {
        let mut params: ParamStore<f64> = ParamStore::new(0);
        params.add("a", &[3], Init::Uniform { a: 1.0 }).unwrap();
        params.add("b", &[2], Init::Uniform { a: 1.0 }).unwrap();

        // f = sum of all params -> gradient all ones
        let mut ones = BTreeMap::new();
        ones.insert("a".to_string(), Tensor::full(&[3], 1.0).unwrap());
        ones.insert("b".to_string(), Tensor::full(&[2], 1.0).unwrap());
        let sum_fn = |p: &ParamStore<f64>| -> crate::Result<f64> {
            Ok(p.iter().flat_map(|(_, t)| t.data().to_vec()).sum())
        };
        let report =
            finite_diff_check(&params, &ones, sum_fn, &FdOptions::default()).unwrap();
        assert!(report.pass, "{}", report.format());

        // f = 0.5 * ||p||^2 -> gradient is p itself
        let grads: BTreeMap<String, Tensor<f64>> = params
            .iter()
            .map(|(n, t)| (n.to_string(), t.detach()))
            .collect();
        let quad = |p: &ParamStore<f64>| -> crate::Result<f64> {
            Ok(p.iter()
                .flat_map(|(_, t)| t.data().to_vec())
                .map(|v| 0.5 * v * v)
                .sum())
        };
        let report = finite_diff_check(&params, &grads, quad, &FdOptions::default()).unwrap();
        assert!(report.pass, "{}", report.format());

        // corrupted analytic gradient must fail
        let mut bad = grads.clone();
        let t = bad.get_mut("a").unwrap();
        let mut vals = t.data().to_vec();
        vals[0] += 0.5;
        *t = Tensor::from_vec(&[3], vals).unwrap();
        let report = finite_diff_check(&params, &bad, quad, &FdOptions::default()).unwrap();
        assert!(!report.pass);
        assert!(report.worst.as_ref().unwrap().0 == "a");
    }
}
