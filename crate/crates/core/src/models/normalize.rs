use super::ROOT_FIELDS;
use crate::autodiff::Tensor;
use crate::camera::Camera;
use crate::error::{Result, VtmError};
use crate::kinematics::Rot6D;
use crate::representation::{BodyPartition, FeatureArray, JointArray, KEYPOINT_CHANNELS, MOTION_CHANNELS};

/// Smallest standard deviation used when standardizing a channel.
pub const STD_FLOOR: f64 = 1e-3;

/// Per-channel motion standardization and pixel normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    /// `joints * 12` means, joint-major.
    pub motion_mean: Vec<f64>,
    /// `joints * 12` standard deviations, floored at [`STD_FLOOR`].
    pub motion_std: Vec<f64>,
    /// Pixel subtracted from keypoints.
    pub keypoint_center: [f64; 2],
    /// Pixel divisor for keypoints and their velocities.
    pub keypoint_scale: [f64; 2],
}

impl Normalizer {
    /// Statistics over every frame of every sequence.
    pub fn fit(motions: &[&JointArray], cam: &Camera) -> Result<Self> {
        let first = motions
            .first()
            .ok_or_else(|| VtmError::shape("cannot fit normalization on no data"))?;
        let width = first.joints() * first.channels();
        if first.channels() != MOTION_CHANNELS {
            return Err(VtmError::shape("motion arrays must have 12 channels"));
        }
        let mut sum = vec![0.0; width];
        let mut count = 0usize;
        for m in motions {
            if m.joints() * m.channels() != width {
                return Err(VtmError::shape("motion arrays disagree on joint count"));
            }
            for t in 0..m.frames() {
                for (s, v) in sum.iter_mut().zip(m.frame(t)) {
                    *s += v;
                }
            }
            count += m.frames();
        }
        if count == 0 {
            return Err(VtmError::shape("cannot fit normalization on empty sequences"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; width];
        for m in motions {
            for t in 0..m.frames() {
                for ((acc, v), mu) in var.iter_mut().zip(m.frame(t)).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| (v / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Normalizer {
            motion_mean: mean,
            motion_std: std,
            keypoint_center: [cam.cx, cam.cy],
            keypoint_scale: cam.pixel_scale(),
        })
    }

    pub fn joints(&self) -> usize {
        self.motion_mean.len() / MOTION_CHANNELS
    }

    fn norm(&self, j: usize, c: usize, v: f64) -> f64 {
        let k = j * MOTION_CHANNELS + c;
        (v - self.motion_mean[k]) / self.motion_std[k]
    }

    fn denorm(&self, j: usize, c: usize, v: f64) -> f64 {
        let k = j * MOTION_CHANNELS + c;
        v * self.motion_std[k] + self.motion_mean[k]
    }

    /// Keypoint row `[u, v, du, dv]` in pixels to network units.
    pub fn normalize_keypoint(&self, row: &[f64]) -> [f64; 4] {
        let [cu, cv] = self.keypoint_center;
        let [su, sv] = self.keypoint_scale;
        [(row[0] - cu) / su, (row[1] - cv) / sv, row[2] / su, row[3] / sv]
    }
}

/// Standardized motion laid out for the networks, batch of one.
#[derive(Clone, Debug)]
pub struct MotionTensors {
    /// `[1, U*12, T]`.
    pub upper: Tensor,
    /// `[1, L*12, T]`.
    pub lower: Tensor,
    /// `[1, 8, T]`: root 6D rotation, depth and depth velocity.
    pub root: Tensor,
    /// `[1, (J-1)*12, T]`.
    pub non_root: Tensor,
}

/// Normalized keypoints laid out for the networks, batch of one.
#[derive(Clone, Debug)]
pub struct KeypointTensors {
    /// `[1, U*4, T]`.
    pub upper: Tensor,
    /// `[1, L*4, T]`.
    pub lower: Tensor,
}

/// Channel-major tensor `[1, channels, T]` from a per-frame
/// accessor.
fn channel_major(frames: usize, channels: usize, value: impl Fn(usize, usize) -> f64) -> Tensor {
    let mut data = vec![0.0; channels * frames];
    for c in 0..channels {
        for t in 0..frames {
            data[c * frames + t] = value(t, c);
        }
    }
    Tensor::new(vec![1, channels, frames], data).expect("sized")
}

pub fn motion_tensors(
    motion: &JointArray,
    norm: &Normalizer,
    partition: &BodyPartition,
) -> Result<MotionTensors> {
    if motion.channels() != MOTION_CHANNELS || motion.joints() != norm.joints() {
        return Err(VtmError::shape(format!(
            "motion array has {} joints x {} channels, model expects {} x 12",
            motion.joints(),
            motion.channels(),
            norm.joints()
        )));
    }
    let t = motion.frames();
    let part = |joints: &[usize]| {
        channel_major(t, joints.len() * MOTION_CHANNELS, |f, c| {
            let j = joints[c / MOTION_CHANNELS];
            let ch = c % MOTION_CHANNELS;
            norm.norm(j, ch, motion.get(f, j)[ch])
        })
    };
    let upper = part(partition.upper());
    let lower = part(partition.lower());
    let non_root_joints: Vec<usize> = (1..motion.joints()).collect();
    let non_root = part(&non_root_joints);
    let root = channel_major(t, ROOT_FIELDS.len(), |f, c| {
        let ch = ROOT_FIELDS[c];
        norm.norm(0, ch, motion.get(f, 0)[ch])
    });
    Ok(MotionTensors {
        upper,
        lower,
        root,
        non_root,
    })
}

pub fn keypoint_tensors(
    keypoints: &JointArray,
    norm: &Normalizer,
    partition: &BodyPartition,
) -> Result<KeypointTensors> {
    if keypoints.channels() != KEYPOINT_CHANNELS || keypoints.joints() != partition.num_joints() {
        return Err(VtmError::shape(format!(
            "keypoint array has {} joints x {} channels",
            keypoints.joints(),
            keypoints.channels()
        )));
    }
    let t = keypoints.frames();
    let part = |joints: &[usize]| {
        channel_major(t, joints.len() * KEYPOINT_CHANNELS, |f, c| {
            let j = joints[c / KEYPOINT_CHANNELS];
            norm.normalize_keypoint(keypoints.get(f, j))[c % KEYPOINT_CHANNELS]
        })
    };
    Ok(KeypointTensors {
        upper: part(partition.upper()),
        lower: part(partition.lower()),
    })
}

/// `[1, dim, T]` from per-frame features; all zeros when none are given.
pub fn feature_tensor(features: Option<&FeatureArray>, dim: usize, frames: usize) -> Result<Tensor> {
    match features {
        None => Ok(Tensor::zeros(&[1, dim, frames])),
        Some(f) => {
            if f.dim != dim || f.frames != frames {
                return Err(VtmError::shape(format!(
                    "features are {}x{}, model expects {frames}x{dim}",
                    f.frames, f.dim
                )));
            }
            Ok(channel_major(frames, dim, |t, c| f.data[t * dim + c]))
        }
    }
}

/// Network output converted back to physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedMotion {
    /// Per frame, one 6D rotation per joint; the root entry is in camera
    /// space, the others are local.
    pub rotations: Vec<Vec<Rot6D>>,
    /// Root depth on the virtual skeleton, meters.
    pub root_depth: Vec<f64>,
    pub root_depth_velocity: Vec<f64>,
    /// Non-root rows `T x (J-1) x 12`.
    pub non_root: JointArray,
}

impl DecodedMotion {
    pub fn frames(&self) -> usize {
        self.rotations.len()
    }

    /// Keeps the first `frames` frames.
    pub fn truncate(&mut self, frames: usize) {
        self.rotations.truncate(frames);
        self.root_depth.truncate(frames);
        self.root_depth_velocity.truncate(frames);
        self.non_root = self.non_root.slice_frames(0, frames.min(self.non_root.frames()));
    }
}

/// Inverts the standardization of decoder outputs `root: [1, 8, T]` and
/// `non_root: [1, (J-1)*12, T]`.
pub fn decode_motion(root: &Tensor, non_root: &Tensor, norm: &Normalizer) -> Result<DecodedMotion> {
    let joints = norm.joints();
    let (rs, ns) = (root.shape(), non_root.shape());
    if rs.len() != 3 || ns.len() != 3 || rs[0] != 1 || ns[0] != 1 || rs[2] != ns[2] {
        return Err(VtmError::shape(format!("decoder outputs {rs:?} and {ns:?}")));
    }
    if rs[1] != ROOT_FIELDS.len() || ns[1] != (joints - 1) * MOTION_CHANNELS {
        return Err(VtmError::shape(format!("decoder outputs {rs:?} and {ns:?}")));
    }
    let t_len = rs[2];
    let (rd, nd) = (root.data(), non_root.data());
    let mut rotations = Vec::with_capacity(t_len);
    let mut depth = Vec::with_capacity(t_len);
    let mut depth_vel = Vec::with_capacity(t_len);
    let mut rows = JointArray::zeros(t_len, joints - 1, MOTION_CHANNELS);
    for t in 0..t_len {
        let mut frame = Vec::with_capacity(joints);
        let mut r = [0.0; 6];
        for (c, v) in r.iter_mut().enumerate() {
            *v = norm.denorm(0, ROOT_FIELDS[c], rd[c * t_len + t]);
        }
        frame.push(Rot6D(r));
        depth.push(norm.denorm(0, ROOT_FIELDS[6], rd[6 * t_len + t]));
        depth_vel.push(norm.denorm(0, ROOT_FIELDS[7], rd[7 * t_len + t]));
        for j in 1..joints {
            let row = rows.get_mut(t, j - 1);
            for (ch, v) in row.iter_mut().enumerate() {
                let c = (j - 1) * MOTION_CHANNELS + ch;
                *v = norm.denorm(j, ch, nd[c * t_len + t]);
            }
            let mut q = [0.0; 6];
            q.copy_from_slice(&row[0..6]);
            frame.push(Rot6D(q));
        }
        rotations.push(frame);
    }
    Ok(DecodedMotion {
        rotations,
        root_depth: depth,
        root_depth_velocity: depth_vel,
        non_root: rows,
    })
}
