use super::model::VtmModel;
use super::normalize::DecodedMotion;
use crate::camera::{recover_root_translation, Camera};
use crate::error::{Result, VtmError};
use crate::kinematics::{six_d_to_rot, Pose, Rotation, Vec3};
use crate::representation::{FeatureArray, JointArray, LATENT_STRIDE};
use crate::skeleton::{apply_ratios, leg_scale, BoneRatios, Skeleton};

/// Motion recovered from keypoints, in camera space on the predicted
/// skeleton.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub skeleton: Skeleton,
    pub ratios: BoneRatios,
    pub poses: Vec<Pose>,
}

/// Rotations of a decoded frame.
pub fn decoded_rotations(motion: &DecodedMotion, t: usize) -> Result<Vec<Rotation>> {
    motion.rotations[t].iter().map(six_d_to_rot).collect()
}

/// Camera-space point of a motion on the virtual skeleton, mapped back to
/// a skeleton whose leg-length scale towards the virtual one is `scale`.
///
/// Alignment multiplies the world root by `scale`, which in camera space
/// reads `p_aligned = scale * p + (1 - scale) * t`.
pub fn unalign_root(aligned: &Vec3, scale: f64, cam: &Camera) -> Vec3 {
    (aligned - (1.0 - scale) * cam.translation) / scale
}

/// Depth-only form of [`unalign_root`].
pub fn unalign_depth(aligned_z: f64, scale: f64, cam: &Camera) -> f64 {
    (aligned_z - (1.0 - scale) * cam.translation.z) / scale
}

/// Full inference: keypoints in pixels (`T x J x 4`), optional features,
/// to skeleton, rotations and global root translations.
///
/// Sequences whose length is not a multiple of four are edge-padded and
/// trimmed after decoding.
pub fn reconstruct(
    model: &VtmModel,
    keypoints: &JointArray,
    features: Option<&FeatureArray>,
    cam: &Camera,
) -> Result<Reconstruction> {
    let frames = keypoints.frames();
    if frames == 0 {
        return Err(VtmError::shape("no keypoint frames"));
    }
    let padded_len = frames.div_ceil(LATENT_STRIDE) * LATENT_STRIDE;
    let padded = keypoints.pad_edge(padded_len);
    let padded_features = features.map(|f| pad_features(f, padded_len)).transpose()?;
    let mut pred = model.predict(&padded, padded_features.as_ref())?;
    pred.motion.truncate(frames);

    let skeleton = apply_ratios(&model.virtual_skeleton, &pred.ratios)?;
    let scale = leg_scale(&skeleton, &model.virtual_skeleton);
    let mut poses = Vec::with_capacity(frames);
    for t in 0..frames {
        let rotations = decoded_rotations(&pred.motion, t)?;
        let depth = unalign_depth(pred.motion.root_depth[t], scale, cam);
        let uv = keypoints.get(t, 0);
        let root = recover_root_translation([uv[0], uv[1]], depth, cam)?;
        poses.push(Pose { rotations, root });
    }
    Ok(Reconstruction {
        skeleton,
        ratios: pred.ratios,
        poses,
    })
}

fn pad_features(f: &FeatureArray, frames: usize) -> Result<FeatureArray> {
    if f.frames == 0 {
        return Err(VtmError::shape("empty feature array"));
    }
    let mut data = f.data.clone();
    let last = f.data[(f.frames - 1) * f.dim..].to_vec();
    for _ in f.frames..frames {
        data.extend_from_slice(&last);
    }
    Ok(FeatureArray {
        frames: frames.max(f.frames),
        dim: f.dim,
        data,
    })
}
