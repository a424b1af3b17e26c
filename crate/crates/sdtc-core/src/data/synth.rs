//! Synthetic articulated-figure video generation.
//!
//! A 2D stick figure with randomized limb lengths and joint angles moves
//! smoothly across a textured background. Limbs render as thick colored
//! segments, joints as discs. Occluder rectangles and box blur model the
//! degradations the estimator must survive; joints under an active occluder
//! are marked invisible. Everything is a pure function of (seed, config).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::skeleton::{self, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::loss::JointSet;
use crate::tensor::{Scalar, Tensor};
use crate::derive_seed;

/// RGB image, channel-major (3, H, W), values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(h: usize, w: usize) -> Self {
        Image {
            h,
            w,
            data: vec![0.0; 3 * h * w],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[c * self.h * self.w + y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[c * self.h * self.w + y * self.w + x] = v;
    }

    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_vec(
            &[3, self.h, self.w],
            self.data.iter().map(|&v| S::from_f64(v as f64)).collect(),
        )
        .expect("image tensor")
    }

    /// Bilinear sample at fractional pixel coordinates; outside -> black.
    pub fn sample(&self, c: usize, x: f64, y: f64) -> f32 {
        if x <= -1.0 || y <= -1.0 || x >= self.w as f64 || y >= self.h as f64 {
            return 0.0;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let mut acc = 0.0f64;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let xi = x0 as i64 + dx;
                let yi = y0 as i64 + dy;
                let v = if xi < 0 || yi < 0 || xi >= self.w as i64 || yi >= self.h as i64 {
                    0.0
                } else {
                    self.get(c, yi as usize, xi as usize) as f64
                };
                acc += wy * wx * v;
            }
        }
        acc as f32
    }
}

/// One person-crop video sample: frames, per-frame joints, keyframe index.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub frames: Vec<Image>,
    pub joints: Vec<JointSet>,
    pub keyframe: usize,
    pub seed: u64,
}

impl SequenceSample {
    pub fn seq_len(&self) -> usize {
        self.frames.len()
    }
}

/// Occlusion / blur corruption description.
#[derive(Debug, Clone)]
pub struct CorruptionSpec {
    pub occluder_count: usize,
    /// Target area of each occluder as a fraction of the figure bbox.
    pub occluder_frac: f64,
    /// Per-frame probability that an occluder is applied on a frame.
    pub occluder_frame_prob: f64,
    /// Odd box-blur kernel width; 0 disables blur.
    pub blur_width: usize,
    /// Per-frame probability that blur applies.
    pub blur_prob: f64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            occluder_count: 0,
            occluder_frac: 0.25,
            occluder_frame_prob: 1.0,
            blur_width: 0,
            blur_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub seq_len: usize,
    pub scene_h: usize,
    pub scene_w: usize,
    /// Maximum per-joint displacement between adjacent frames, scene pixels.
    pub max_step: f64,
    pub corruption: CorruptionSpec,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seq_len: 5,
            scene_h: 128,
            scene_w: 128,
            max_step: 6.0,
            corruption: CorruptionSpec::default(),
        }
    }
}

/// Figure skeleton parameters, all in scene pixels / radians.
struct Figure {
    torso: f64,
    neck_head: f64,
    head_top: f64,
    shoulder_w: f64,
    hip_w: f64,
    upper_arm: f64,
    forearm: f64,
    thigh: f64,
    shin: f64,
}

/// Per-frame articulated state: neck anchor plus limb direction angles.
#[derive(Clone)]
struct PoseState {
    neck: [f64; 2],
    body_tilt: f64,
    head_tilt: f64,
    l_upper_arm: f64,
    l_forearm: f64,
    r_upper_arm: f64,
    r_forearm: f64,
    l_thigh: f64,
    l_shin: f64,
    r_thigh: f64,
    r_shin: f64,
}

impl PoseState {
    fn joints(&self, fig: &Figure) -> Vec<[f64; 2]> {
        let dir = |a: f64| [a.cos(), a.sin()];
        let add = |p: [f64; 2], d: [f64; 2], len: f64| [p[0] + d[0] * len, p[1] + d[1] * len];

        let down = self.body_tilt + std::f64::consts::FRAC_PI_2;
        let across = self.body_tilt; // perpendicular to "down"
        let neck = self.neck;
        let pelvis = add(neck, dir(down), fig.torso);

        let up_head = self.head_tilt - std::f64::consts::FRAC_PI_2;
        let nose = add(neck, dir(up_head), fig.neck_head);
        let head_top = add(nose, dir(up_head), fig.head_top);

        let l_shoulder = add(neck, dir(across), fig.shoulder_w / 2.0);
        let r_shoulder = add(neck, dir(across + std::f64::consts::PI), fig.shoulder_w / 2.0);
        let l_elbow = add(l_shoulder, dir(self.l_upper_arm), fig.upper_arm);
        let l_wrist = add(l_elbow, dir(self.l_forearm), fig.forearm);
        let r_elbow = add(r_shoulder, dir(self.r_upper_arm), fig.upper_arm);
        let r_wrist = add(r_elbow, dir(self.r_forearm), fig.forearm);

        let l_hip = add(pelvis, dir(across), fig.hip_w / 2.0);
        let r_hip = add(pelvis, dir(across + std::f64::consts::PI), fig.hip_w / 2.0);
        let l_knee = add(l_hip, dir(self.l_thigh), fig.thigh);
        let l_ankle = add(l_knee, dir(self.l_shin), fig.shin);
        let r_knee = add(r_hip, dir(self.r_thigh), fig.thigh);
        let r_ankle = add(r_knee, dir(self.r_shin), fig.shin);

        vec![
            nose, neck, head_top, l_shoulder, r_shoulder, l_elbow, r_elbow, l_wrist, r_wrist,
            l_hip, r_hip, l_knee, r_knee, l_ankle, r_ankle,
        ]
    }
}

const BONE_COLORS: [[f32; 3]; 14] = [
    [0.85, 0.35, 0.25],
    [0.85, 0.55, 0.25],
    [0.30, 0.65, 0.85],
    [0.25, 0.45, 0.80],
    [0.35, 0.80, 0.45],
    [0.55, 0.85, 0.35],
    [0.80, 0.35, 0.65],
    [0.85, 0.45, 0.45],
    [0.45, 0.75, 0.75],
    [0.40, 0.60, 0.70],
    [0.75, 0.70, 0.30],
    [0.85, 0.80, 0.40],
    [0.60, 0.40, 0.80],
    [0.70, 0.50, 0.85],
];

const JOINT_COLOR: [f32; 3] = [0.95, 0.95, 0.9];

fn hash01(seed: u64, a: u64, b: u64) -> f32 {
    (derive_seed(seed, &[a, b]) >> 11) as f32 / (1u64 << 53) as f32
}

fn draw_background(img: &mut Image, seed: u64) {
    let (h, w) = (img.h, img.w);
    for y in 0..h {
        for x in 0..w {
            let fx = x as f32 / w as f32;
            let fy = y as f32 / h as f32;
            let stripe = (0.5 + 0.5 * ((fx * 9.0 + fy * 4.0) * std::f32::consts::PI).sin()) * 0.08;
            let noise = hash01(seed, y as u64, x as u64) * 0.1;
            img.set(0, y, x, 0.12 + stripe + noise);
            img.set(1, y, x, 0.14 + stripe + noise * 0.8);
            img.set(2, y, x, 0.18 + stripe * 0.6 + noise * 0.6);
        }
    }
}

pub(crate) fn draw_segment(img: &mut Image, a: [f64; 2], b: [f64; 2], thickness: f64, color: [f32; 3]) {
    let min_x = (a[0].min(b[0]) - thickness).floor().max(0.0) as usize;
    let max_x = (a[0].max(b[0]) + thickness).ceil().min((img.w - 1) as f64) as usize;
    let min_y = (a[1].min(b[1]) - thickness).floor().max(0.0) as usize;
    let max_y = (a[1].max(b[1]) + thickness).ceil().min((img.h - 1) as f64) as usize;
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            let p = [x as f64, y as f64];
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
            };
            let proj = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d2 = (p[0] - proj[0]).powi(2) + (p[1] - proj[1]).powi(2);
            if d2 <= thickness * thickness {
                for c in 0..3 {
                    img.set(c, y, x, color[c]);
                }
            }
        }
    }
}

pub(crate) fn draw_disc(img: &mut Image, center: [f64; 2], radius: f64, color: [f32; 3]) {
    draw_segment(img, center, center, radius, color);
}

fn box_blur(img: &Image, width: usize) -> Image {
    let r = (width / 2) as i64;
    let mut out = Image::new(img.h, img.w);
    let norm = 1.0 / (width * width) as f32;
    for c in 0..3 {
        for y in 0..img.h as i64 {
            for x in 0..img.w as i64 {
                let mut acc = 0.0f32;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let yy = (y + dy).clamp(0, img.h as i64 - 1) as usize;
                        let xx = (x + dx).clamp(0, img.w as i64 - 1) as usize;
                        acc += img.get(c, yy, xx);
                    }
                }
                out.set(c, y as usize, x as usize, acc * norm);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

/// Generate one scene-resolution sequence. Deterministic per (seed, config).
pub fn generate_sequence(seed: u64, cfg: &GenConfig) -> Result<SequenceSample> {
    if cfg.seq_len == 0 {
        return Err(Error::contract("sequence length must be positive"));
    }
    if cfg.corruption.blur_width % 2 == 0 && cfg.corruption.blur_width != 0 {
        return Err(Error::contract(format!(
            "blur width must be odd, got {}",
            cfg.corruption.blur_width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5ce9e]));
    let s = cfg.scene_h.min(cfg.scene_w) as f64;

    let fig = Figure {
        torso: s * rng.gen_range(0.18..0.24),
        neck_head: s * rng.gen_range(0.045..0.065),
        head_top: s * rng.gen_range(0.045..0.065),
        shoulder_w: s * rng.gen_range(0.13..0.18),
        hip_w: s * rng.gen_range(0.09..0.13),
        upper_arm: s * rng.gen_range(0.10..0.14),
        forearm: s * rng.gen_range(0.09..0.13),
        thigh: s * rng.gen_range(0.12..0.16),
        shin: s * rng.gen_range(0.11..0.15),
    };

    let jitter = |rng: &mut ChaCha8Rng, spread: f64| rng.gen_range(-spread..spread);
    let down = std::f64::consts::FRAC_PI_2;
    let mut state = PoseState {
        neck: [
            cfg.scene_w as f64 * rng.gen_range(0.35..0.65),
            cfg.scene_h as f64 * rng.gen_range(0.25..0.40),
        ],
        body_tilt: jitter(&mut rng, 0.15),
        head_tilt: jitter(&mut rng, 0.2),
        l_upper_arm: down + jitter(&mut rng, 0.9),
        l_forearm: down + jitter(&mut rng, 0.9),
        r_upper_arm: down + jitter(&mut rng, 0.9),
        r_forearm: down + jitter(&mut rng, 0.9),
        l_thigh: down + jitter(&mut rng, 0.35),
        l_shin: down + jitter(&mut rng, 0.3),
        r_thigh: down + jitter(&mut rng, 0.35),
        r_shin: down + jitter(&mut rng, 0.3),
    };

    // Smooth trajectory: constant-ish velocity plus per-frame angle drift,
    // rescaled until no joint moves farther than max_step between frames.
    let mut velocity = [
        jitter(&mut rng, cfg.max_step * 0.35),
        jitter(&mut rng, cfg.max_step * 0.25),
    ];
    let mut states = vec![state.clone()];
    for _ in 1..cfg.seq_len {
        let prev_joints = states.last().unwrap().joints(&fig);
        let mut scale = 1.0f64;
        let drift: Vec<f64> = (0..11).map(|_| jitter(&mut rng, 0.12)).collect();
        let accel = [
            jitter(&mut rng, cfg.max_step * 0.1),
            jitter(&mut rng, cfg.max_step * 0.1),
        ];
        loop {
            let mut next = state.clone();
            next.neck[0] += (velocity[0] + accel[0]) * scale;
            next.neck[1] += (velocity[1] + accel[1]) * scale;
            next.body_tilt += drift[0] * 0.3 * scale;
            next.head_tilt += drift[1] * 0.5 * scale;
            next.l_upper_arm += drift[2] * scale;
            next.l_forearm += drift[3] * scale;
            next.r_upper_arm += drift[4] * scale;
            next.r_forearm += drift[5] * scale;
            next.l_thigh += drift[6] * 0.6 * scale;
            next.l_shin += drift[7] * 0.6 * scale;
            next.r_thigh += drift[8] * 0.6 * scale;
            next.r_shin += drift[9] * 0.6 * scale;

            let joints = next.joints(&fig);
            let max_d = joints
                .iter()
                .zip(&prev_joints)
                .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
                .fold(0.0f64, f64::max);
            if max_d <= cfg.max_step || scale < 1e-6 {
                velocity = [
                    (velocity[0] + accel[0]) * scale,
                    (velocity[1] + accel[1]) * scale,
                ];
                state = next;
                break;
            }
            scale *= 0.8;
        }
        states.push(state.clone());
    }

    // figure bbox across frames, for occluder placement
    let all_joints: Vec<Vec<[f64; 2]>> = states.iter().map(|st| st.joints(&fig)).collect();
    let (mut bx0, mut by0, mut bx1, mut by1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for js in &all_joints {
        for j in js {
            bx0 = bx0.min(j[0]);
            by0 = by0.min(j[1]);
            bx1 = bx1.max(j[0]);
            by1 = by1.max(j[1]);
        }
    }

    let mut occluders = Vec::new();
    for _ in 0..cfg.corruption.occluder_count {
        let area = cfg.corruption.occluder_frac * (bx1 - bx0).max(1.0) * (by1 - by0).max(1.0);
        let aspect = rng.gen_range(0.6..1.6);
        let ow = (area * aspect).sqrt();
        let oh = area / ow;
        let cx = rng.gen_range(bx0..bx1.max(bx0 + 1.0));
        let cy = rng.gen_range(by0..by1.max(by0 + 1.0));
        let rect = Rect {
            x0: (cx - ow / 2.0).max(0.0),
            y0: (cy - oh / 2.0).max(0.0),
            x1: (cx + ow / 2.0).min(cfg.scene_w as f64 - 1.0),
            y1: (cy + oh / 2.0).min(cfg.scene_h as f64 - 1.0),
        };
        let color = [
            0.2 + 0.6 * hash01(seed, 77, occluders.len() as u64),
            0.2 + 0.6 * hash01(seed, 78, occluders.len() as u64),
            0.2 + 0.6 * hash01(seed, 79, occluders.len() as u64),
        ];
        let active: Vec<bool> = (0..cfg.seq_len)
            .map(|_| rng.gen::<f64>() < cfg.corruption.occluder_frame_prob)
            .collect();
        occluders.push((rect, color, active));
    }
    let blur_frames: Vec<bool> = (0..cfg.seq_len)
        .map(|_| cfg.corruption.blur_width > 0 && rng.gen::<f64>() < cfg.corruption.blur_prob)
        .collect();

    let limb_thickness = s * 0.030;
    let joint_radius = s * 0.016;
    let mut frames = Vec::with_capacity(cfg.seq_len);
    let mut joint_sets = Vec::with_capacity(cfg.seq_len);
    for (t, joints) in all_joints.iter().enumerate() {
        let mut img = Image::new(cfg.scene_h, cfg.scene_w);
        draw_background(&mut img, derive_seed(seed, &[1, t as u64]));
        for (bi, &(a, b)) in skeleton::BONES.iter().enumerate() {
            draw_segment(
                &mut img,
                joints[a],
                joints[b],
                limb_thickness,
                BONE_COLORS[bi],
            );
        }
        for j in joints {
            draw_disc(&mut img, *j, joint_radius, JOINT_COLOR);
        }
        for (rect, color, active) in &occluders {
            if active[t] {
                let (x0, x1) = (rect.x0.floor() as usize, rect.x1.ceil() as usize);
                let (y0, y1) = (rect.y0.floor() as usize, rect.y1.ceil() as usize);
                for y in y0..=y1.min(cfg.scene_h - 1) {
                    for x in x0..=x1.min(cfg.scene_w - 1) {
                        for c in 0..3 {
                            img.set(c, y, x, color[c]);
                        }
                    }
                }
            }
        }
        if blur_frames[t] {
            img = box_blur(&img, cfg.corruption.blur_width);
        }

        let mut coords = Vec::with_capacity(NUM_JOINTS);
        let mut visible = Vec::with_capacity(NUM_JOINTS);
        for j in joints {
            let in_frame = j[0] >= 0.0
                && j[1] >= 0.0
                && j[0] < cfg.scene_w as f64
                && j[1] < cfg.scene_h as f64;
            let occluded = occluders
                .iter()
                .any(|(rect, _, active)| active[t] && rect.contains(*j));
            coords.push([j[0] as f32, j[1] as f32]);
            visible.push(in_frame && !occluded);
        }
        joint_sets.push(JointSet::new(coords, visible)?);
        frames.push(img);
    }

    Ok(SequenceSample {
        frames,
        joints: joint_sets,
        keyframe: cfg.seq_len / 2,
        seed,
    })
}

/// Tight bbox over every joint of every frame, with a small margin.
pub fn sequence_bbox(sample: &SequenceSample) -> (f64, f64, f64, f64) {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for js in &sample.joints {
        for c in &js.coords {
            x0 = x0.min(c[0] as f64);
            y0 = y0.min(c[1] as f64);
            x1 = x1.max(c[0] as f64);
            y1 = y1.max(c[1] as f64);
        }
    }
    let margin = 0.06 * (x1 - x0).max(y1 - y0).max(1.0);
    (x0 - margin, y0 - margin, x1 + margin, y1 + margin)
}
