//! Seeded synthetic walking motion for tests and demos.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtm::bvh::{from_motion, write_bvh};
use vtm::camera::Camera;
use vtm::kinematics::{forward_kinematics, Axis, Pose, Rotation, Vec3};
use vtm::skeleton::{layout, Skeleton};
use vtm::Result;

pub const FRAME_TIME: f64 = 1.0 / 30.0;
pub const CAMERA_DISTANCE: f64 = 8.0;
pub const CAMERA_HEIGHT: f64 = 1.0;
/// Furthest the root travels from its path center, in meters.
const MAX_TRAVEL: f64 = 2.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub sequences: usize,
    pub frames: usize,
    pub seed: u64,
}

/// One generated character and its motion in world space.
#[derive(Clone, Debug)]
pub struct SynthSequence {
    pub id: String,
    pub skeleton: Skeleton,
    pub poses: Vec<Pose>,
}

pub fn synth_camera() -> Camera {
    Camera::looking_at_origin("synth", CAMERA_DISTANCE, CAMERA_HEIGHT)
}

/// Template proportions with a global size factor and small per-bone jitter.
pub fn random_skeleton(rng: &mut impl Rng) -> Result<Skeleton> {
    let global = rng.gen_range(0.88..1.12);
    let offsets = layout::TEMPLATE_OFFSETS
        .iter()
        .map(|o| {
            let local = rng.gen_range(0.97..1.025);
            Vec3::new(o[0], o[1], o[2]) * (global * local)
        })
        .collect();
    Skeleton::canonical(offsets)
}

/// Per-joint oscillation: ZXY Euler offsets plus amplitudes, in degrees.
struct Swing {
    joint: usize,
    bias: [f64; 3],
    amp: [f64; 3],
    /// Half a cycle out of phase for the right side.
    mirrored: bool,
}

const SWINGS: [Swing; 19] = [
    Swing {
        joint: 1,
        bias: [0.0, 0.0, 0.0],
        amp: [5.0, 25.0, 4.0],
        mirrored: false,
    },
    Swing {
        joint: 2,
        bias: [0.0, 0.0, 0.0],
        amp: [5.0, 25.0, 4.0],
        mirrored: true,
    },
    Swing {
        joint: 3,
        bias: [0.0, 2.0, 0.0],
        amp: [3.0, 3.0, 5.0],
        mirrored: false,
    },
    Swing {
        joint: 4,
        bias: [0.0, 25.0, 0.0],
        amp: [0.0, 22.0, 0.0],
        mirrored: false,
    },
    Swing {
        joint: 5,
        bias: [0.0, 25.0, 0.0],
        amp: [0.0, 22.0, 0.0],
        mirrored: true,
    },
    Swing {
        joint: 6,
        bias: [0.0, 1.0, 0.0],
        amp: [2.0, 2.0, 4.0],
        mirrored: false,
    },
    Swing {
        joint: 7,
        bias: [0.0, -5.0, 0.0],
        amp: [0.0, 12.0, 0.0],
        mirrored: false,
    },
    Swing {
        joint: 8,
        bias: [0.0, -5.0, 0.0],
        amp: [0.0, 12.0, 0.0],
        mirrored: true,
    },
    Swing {
        joint: 9,
        bias: [0.0, 1.0, 0.0],
        amp: [2.0, 2.0, 4.0],
        mirrored: false,
    },
    Swing {
        joint: 12,
        bias: [0.0, -4.0, 0.0],
        amp: [2.0, 5.0, 6.0],
        mirrored: false,
    },
    Swing {
        joint: 13,
        bias: [-4.0, 0.0, 0.0],
        amp: [3.0, 0.0, 0.0],
        mirrored: false,
    },
    Swing {
        joint: 14,
        bias: [4.0, 0.0, 0.0],
        amp: [3.0, 0.0, 0.0],
        mirrored: true,
    },
    Swing {
        joint: 15,
        bias: [0.0, 4.0, 0.0],
        amp: [2.0, 6.0, 8.0],
        mirrored: false,
    },
    Swing {
        joint: 16,
        bias: [-65.0, 0.0, 0.0],
        amp: [6.0, 4.0, 25.0],
        mirrored: true,
    },
    Swing {
        joint: 17,
        bias: [65.0, 0.0, 0.0],
        amp: [6.0, 4.0, 25.0],
        mirrored: false,
    },
    Swing {
        joint: 18,
        bias: [0.0, 0.0, -25.0],
        amp: [0.0, 0.0, 15.0],
        mirrored: true,
    },
    Swing {
        joint: 19,
        bias: [0.0, 0.0, 25.0],
        amp: [0.0, 0.0, 15.0],
        mirrored: false,
    },
    Swing {
        joint: 20,
        bias: [0.0, 0.0, 0.0],
        amp: [5.0, 5.0, 0.0],
        mirrored: false,
    },
    Swing {
        joint: 21,
        bias: [0.0, 0.0, 0.0],
        amp: [5.0, 5.0, 0.0],
        mirrored: true,
    },
];

/// A straight walk through the neighborhood of the origin, mostly across
/// the image, with a gait cycle on the limbs.
pub fn random_motion(skeleton: &Skeleton, frames: usize, rng: &mut impl Rng) -> Vec<Pose> {
    let n = skeleton.num_joints();
    let freq = rng.gen_range(0.6..1.2);
    let side: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let yaw = side * 90.0 + rng.gen_range(-40.0..40.0);
    let dir = Vec3::new(yaw.to_radians().sin(), 0.0, yaw.to_radians().cos());
    let duration = frames.saturating_sub(1) as f64 * FRAME_TIME;
    let mut speed: f64 = rng.gen_range(0.4..1.1);
    if duration > 0.0 {
        speed = speed.min(2.0 * MAX_TRAVEL / duration);
    }
    let center = Vec3::new(rng.gen_range(-0.3..0.3), 0.0, rng.gen_range(-0.3..0.3));
    let height = -forward_kinematics(skeleton, &Pose::rest(n))
        .iter()
        .map(|p| p.y)
        .fold(f64::INFINITY, f64::min)
        + 0.03;

    let gains: Vec<[f64; 3]> = SWINGS
        .iter()
        .map(|_| [(); 3].map(|_| rng.gen_range(0.7..1.3)))
        .collect();
    let phases: Vec<f64> = SWINGS.iter().map(|_| rng.gen_range(-0.3..0.3)).collect();
    let phase0 = rng.gen_range(0.0..TAU);

    (0..frames)
        .map(|t| {
            let time = t as f64 * FRAME_TIME;
            let w = TAU * freq * time + phase0;
            let mut rotations = vec![Rotation::identity(); n];
            rotations[0] = Rotation::from_euler_degrees(
                &[Axis::Y, Axis::X, Axis::Z],
                &[yaw + 5.0 * w.sin(), 3.0 * (2.0 * w).sin(), 3.0 * w.cos()],
            );
            for (k, s) in SWINGS.iter().enumerate() {
                let shift = if s.mirrored { PI } else { 0.0 };
                let v = (w + shift + phases[k]).sin();
                let angles: Vec<f64> = (0..3).map(|a| s.bias[a] + s.amp[a] * gains[k][a] * v).collect();
                rotations[s.joint] = Rotation::from_euler_degrees(&[Axis::Z, Axis::X, Axis::Y], &angles);
            }
            let along = speed * (time - duration / 2.0);
            let bob = 0.02 * (2.0 * w).sin();
            let root = center + dir * along + Vec3::new(0.0, height + bob, 0.0);
            Pose { rotations, root }
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSequence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.sequences)
        .map(|i| {
            let skeleton = random_skeleton(&mut rng)?;
            let poses = random_motion(&skeleton, cfg.frames, &mut rng);
            Ok(SynthSequence {
                id: format!("synth_{i:03}"),
                skeleton,
                poses,
            })
        })
        .collect()
}

/// Writes one BVH per sequence (centimeters) and `camera.txt` into `dir`.
pub fn write_synth(dir: &Path, cfg: &SynthConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("camera.txt"), synth_camera().to_text())?;
    let mut paths = Vec::with_capacity(cfg.sequences);
    for seq in generate(cfg)? {
        let doc = from_motion(&seq.skeleton, &seq.poses, FRAME_TIME)?;
        let path = dir.join(format!("{}.bvh", seq.id));
        fs::write(&path, write_bvh(&doc))?;
        paths.push(path);
    }
    Ok(paths)
}
