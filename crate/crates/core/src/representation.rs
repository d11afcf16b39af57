//! Per-frame motion and keypoint arrays, the upper/lower body partition and
//! sliding-window assembly.
//!
//! A motion frame stores, for every joint, `[rot6d(6), position(3),
//! velocity(3)]` in camera space. The root row carries the root rotation,
//! the root position and its velocity; other rows carry local rotations with
//! global positions. Keypoint frames store `[pixel(2), pixel velocity(2)]`.

use crate::camera::{project, Camera};
use crate::error::{Result, VtmError};
use crate::kinematics::{finite_differences, forward_kinematics, rot_to_6d, Pose};
use crate::skeleton::{layout, BoneRatios, Skeleton};

pub const MOTION_CHANNELS: usize = 12;
pub const KEYPOINT_CHANNELS: usize = 4;
pub const ROT: std::ops::Range<usize> = 0..6;
pub const POS: std::ops::Range<usize> = 6..9;
pub const VEL: std::ops::Range<usize> = 9..12;

pub const WINDOW: usize = 32;
pub const WINDOW_STRIDE: usize = 4;
/// Temporal down-sampling factor of the encoders.
pub const LATENT_STRIDE: usize = 4;

/// Dense `frames x joints x channels` array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JointArray {
    frames: usize,
    joints: usize,
    channels: usize,
    data: Vec<f64>,
}

impl JointArray {
    pub fn zeros(frames: usize, joints: usize, channels: usize) -> Self {
        JointArray {
            frames,
            joints,
            channels,
            data: vec![0.0; frames * joints * channels],
        }
    }

    pub fn from_vec(frames: usize, joints: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * joints * channels {
            return Err(VtmError::shape(format!(
                "{} values for a {frames}x{joints}x{channels} array",
                data.len()
            )));
        }
        Ok(JointArray {
            frames,
            joints,
            channels,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, t: usize, j: usize) -> &[f64] {
        let s = (t * self.joints + j) * self.channels;
        &self.data[s..s + self.channels]
    }

    pub fn get_mut(&mut self, t: usize, j: usize) -> &mut [f64] {
        let s = (t * self.joints + j) * self.channels;
        &mut self.data[s..s + self.channels]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.joints * self.channels;
        &self.data[t * n..(t + 1) * n]
    }

    /// Frames `start..start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> JointArray {
        let n = self.joints * self.channels;
        JointArray {
            frames: len,
            joints: self.joints,
            channels: self.channels,
            data: self.data[start * n..(start + len) * n].to_vec(),
        }
    }

    /// Keeps the listed joints in the given order.
    pub fn select_joints(&self, joints: &[usize]) -> JointArray {
        let mut out = JointArray::zeros(self.frames, joints.len(), self.channels);
        for t in 0..self.frames {
            for (k, &j) in joints.iter().enumerate() {
                out.get_mut(t, k).copy_from_slice(self.get(t, j));
            }
        }
        out
    }

    /// Pads to `frames` by repeating the last frame.
    pub fn pad_edge(&self, frames: usize) -> JointArray {
        let mut out = self.clone();
        let last = self.frame(self.frames - 1).to_vec();
        for _ in self.frames..frames {
            out.data.extend_from_slice(&last);
        }
        out.frames = frames.max(self.frames);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub array: JointArray,
    pub skeleton_id: String,
    pub camera_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSequence {
    pub array: JointArray,
}

/// Expresses world-space poses in camera space: the root rotation is
/// composed with the camera rotation and the root position is transformed.
pub fn camera_space_poses(poses: &[Pose], cam: &Camera) -> Vec<Pose> {
    poses
        .iter()
        .map(|p| {
            let mut rotations = p.rotations.clone();
            rotations[0] = cam.rotation * p.rotations[0];
            Pose {
                rotations,
                root: cam.point_to_camera(&p.root),
            }
        })
        .collect()
}

pub fn build_motion_sequence(
    skeleton: &Skeleton,
    poses: &[Pose],
    cam: &Camera,
    skeleton_id: &str,
) -> Result<MotionSequence> {
    if poses.is_empty() {
        return Err(VtmError::shape("motion has no frames"));
    }
    let j = skeleton.num_joints();
    if poses.iter().any(|p| p.rotations.len() != j) {
        return Err(VtmError::shape("pose joint count differs from skeleton"));
    }
    let cam_poses = camera_space_poses(poses, cam);
    let positions: Vec<Vec<f64>> = cam_poses
        .iter()
        .map(|p| {
            forward_kinematics(skeleton, p)
                .iter()
                .flat_map(|v| [v.x, v.y, v.z])
                .collect()
        })
        .collect();
    let velocities = finite_differences(&positions);
    let mut array = JointArray::zeros(poses.len(), j, MOTION_CHANNELS);
    for (t, pose) in cam_poses.iter().enumerate() {
        for k in 0..j {
            let row = array.get_mut(t, k);
            row[ROT].copy_from_slice(&rot_to_6d(&pose.rotations[k]).0);
            row[POS].copy_from_slice(&positions[t][3 * k..3 * k + 3]);
            row[VEL].copy_from_slice(&velocities[t][3 * k..3 * k + 3]);
        }
    }
    Ok(MotionSequence {
        array,
        skeleton_id: skeleton_id.to_string(),
        camera_id: cam.name.clone(),
    })
}

pub fn project_keypoints(ms: &MotionSequence, cam: &Camera) -> Result<KeypointSequence> {
    let a = &ms.array;
    let mut pixels: Vec<Vec<f64>> = Vec::with_capacity(a.frames());
    for t in 0..a.frames() {
        let pts: Vec<_> = (0..a.joints())
            .map(|j| {
                let p = &a.get(t, j)[POS];
                crate::kinematics::Vec3::new(p[0], p[1], p[2])
            })
            .collect();
        pixels.push(project(&pts, cam)?.into_iter().flatten().collect());
    }
    let velocities = finite_differences(&pixels);
    let mut out = JointArray::zeros(a.frames(), a.joints(), KEYPOINT_CHANNELS);
    for t in 0..a.frames() {
        for j in 0..a.joints() {
            let row = out.get_mut(t, j);
            row[0..2].copy_from_slice(&pixels[t][2 * j..2 * j + 2]);
            row[2..4].copy_from_slice(&velocities[t][2 * j..2 * j + 2]);
        }
    }
    Ok(KeypointSequence { array: out })
}

/// Joint index lists for the two body parts. Both contain the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BodyPartition {
    upper: Vec<usize>,
    lower: Vec<usize>,
}

impl BodyPartition {
    pub fn new(upper: Vec<usize>, lower: Vec<usize>, joints: usize) -> Result<Self> {
        let mut seen = vec![0u8; joints];
        for &j in upper.iter().chain(&lower) {
            if j >= joints {
                return Err(VtmError::shape(format!("joint {j} out of range")));
            }
            seen[j] += 1;
        }
        let root_ok = upper.first() == Some(&0) && lower.first() == Some(&0);
        if !root_ok || seen[0] != 2 || seen[1..].iter().any(|&c| c != 1) {
            return Err(VtmError::shape(
                "partition must list the root first in both parts and every other joint exactly once",
            ));
        }
        Ok(BodyPartition { upper, lower })
    }

    pub fn canonical() -> Self {
        BodyPartition::new(
            layout::UPPER_BODY.to_vec(),
            layout::LOWER_BODY.to_vec(),
            layout::NUM_JOINTS,
        )
        .expect("canonical partition is valid")
    }

    pub fn upper(&self) -> &[usize] {
        &self.upper
    }

    pub fn lower(&self) -> &[usize] {
        &self.lower
    }

    pub fn num_joints(&self) -> usize {
        self.upper.len() + self.lower.len() - 1
    }
}

pub fn split_parts(x: &JointArray, p: &BodyPartition) -> (JointArray, JointArray) {
    (x.select_joints(&p.upper), x.select_joints(&p.lower))
}

/// Inverse of [`split_parts`]; the root row is taken from the upper part.
pub fn merge_parts(upper: &JointArray, lower: &JointArray, p: &BodyPartition) -> Result<JointArray> {
    if upper.frames() != lower.frames()
        || upper.channels() != lower.channels()
        || upper.joints() != p.upper.len()
        || lower.joints() != p.lower.len()
    {
        return Err(VtmError::shape("part shapes do not match the partition"));
    }
    let mut out = JointArray::zeros(upper.frames(), p.num_joints(), upper.channels());
    for t in 0..upper.frames() {
        for (k, &j) in p.lower.iter().enumerate() {
            out.get_mut(t, j).copy_from_slice(lower.get(t, k));
        }
        for (k, &j) in p.upper.iter().enumerate() {
            out.get_mut(t, j).copy_from_slice(upper.get(t, k));
        }
    }
    Ok(out)
}

/// Per-frame precomputed visual features, `frames x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureArray {
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureArray {
    pub fn slice_frames(&self, start: usize, len: usize) -> FeatureArray {
        FeatureArray {
            frames: len,
            dim: self.dim,
            data: self.data[start * self.dim..(start + len) * self.dim].to_vec(),
        }
    }
}

/// Everything known about one prepared sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub motion: MotionSequence,
    pub keypoints: KeypointSequence,
    pub features: Option<FeatureArray>,
    pub ratios: BoneRatios,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingWindow {
    pub sequence_id: String,
    pub offset: usize,
    pub motion: JointArray,
    pub keypoints: JointArray,
    pub features: Option<FeatureArray>,
    pub ratios: BoneRatios,
}

pub fn window_count(frames: usize, window: usize, stride: usize) -> usize {
    if frames < window {
        0
    } else {
        (frames - window) / stride + 1
    }
}

#[derive(Debug, Default)]
pub struct Windows {
    pub windows: Vec<TrainingWindow>,
    /// Sequences that were too short, with the reason.
    pub skipped: Vec<(String, VtmError)>,
}

pub fn make_windows(sequences: &[SequenceRecord], window: usize, stride: usize) -> Result<Windows> {
    if window == 0 || stride == 0 || !window.is_multiple_of(LATENT_STRIDE) {
        return Err(VtmError::shape(format!(
            "window {window} must be a positive multiple of {LATENT_STRIDE} and stride positive"
        )));
    }
    let mut out = Windows::default();
    for seq in sequences {
        let frames = seq.motion.array.frames();
        if seq.keypoints.array.frames() != frames || seq.features.as_ref().is_some_and(|f| f.frames != frames)
        {
            return Err(VtmError::shape(format!(
                "sequence {} has misaligned motion, keypoints or features",
                seq.id
            )));
        }
        if frames < window {
            log::warn!("skipping sequence {}: {frames} frames < window {window}", seq.id);
            out.skipped.push((
                seq.id.clone(),
                VtmError::SequenceTooShort {
                    frames,
                    needed: window,
                },
            ));
            continue;
        }
        for k in 0..window_count(frames, window, stride) {
            let offset = k * stride;
            out.windows.push(TrainingWindow {
                sequence_id: seq.id.clone(),
                offset,
                motion: seq.motion.array.slice_frames(offset, window),
                keypoints: seq.keypoints.array.slice_frames(offset, window),
                features: seq.features.as_ref().map(|f| f.slice_frames(offset, window)),
                ratios: seq.ratios.clone(),
            });
        }
    }
    Ok(out)
}
