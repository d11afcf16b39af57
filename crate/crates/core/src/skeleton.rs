//! Kinematic skeletons, the virtual (average) skeleton, bone ratios and
//! rotation-preserving retargeting onto the virtual skeleton.

use std::fmt::Write as _;

use crate::error::{Result, VtmError};
use crate::kinematics::{Pose, Vec3};

/// The canonical 24-joint layout shared by every module.
pub mod layout {
    pub const NUM_JOINTS: usize = 24;
    pub const NUM_BONES: usize = NUM_JOINTS - 1;

    pub const PELVIS: usize = 0;
    pub const HEAD: usize = 15;
    pub const LEFT_FOOT: usize = 10;
    pub const RIGHT_FOOT: usize = 11;
    pub const LEFT_HAND: usize = 22;
    pub const RIGHT_HAND: usize = 23;

    pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
        "pelvis",
        "left_hip",
        "right_hip",
        "spine1",
        "left_knee",
        "right_knee",
        "spine2",
        "left_ankle",
        "right_ankle",
        "spine3",
        "left_foot",
        "right_foot",
        "neck",
        "left_collar",
        "right_collar",
        "head",
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
        "left_hand",
        "right_hand",
    ];

    pub const PARENTS: [Option<usize>; NUM_JOINTS] = [
        None,
        Some(0),
        Some(0),
        Some(0),
        Some(1),
        Some(2),
        Some(3),
        Some(4),
        Some(5),
        Some(6),
        Some(7),
        Some(8),
        Some(9),
        Some(9),
        Some(9),
        Some(12),
        Some(13),
        Some(14),
        Some(16),
        Some(17),
        Some(18),
        Some(19),
        Some(20),
        Some(21),
    ];

    /// Head, hands and feet.
    pub const END_EFFECTORS: [usize; 5] = [HEAD, LEFT_HAND, RIGHT_HAND, LEFT_FOOT, RIGHT_FOOT];

    /// Hip-to-foot chains (knee, ankle, foot bones), left then right.
    pub const LEG_CHAINS: [[usize; 3]; 2] = [[4, 7, 10], [5, 8, 11]];

    /// Lower body: pelvis, hips, knees, ankles, feet.
    pub const LOWER_BODY: [usize; 9] = [0, 1, 2, 4, 5, 7, 8, 10, 11];
    /// Upper body: pelvis plus spine, neck, head and arms.
    pub const UPPER_BODY: [usize; 16] = [0, 3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23];

    /// Rest-pose offsets in meters (Y up, character facing +Z).
    pub const TEMPLATE_OFFSETS: [[f64; 3]; NUM_JOINTS] = [
        [0.0, 0.0, 0.0],
        [0.06, -0.09, 0.0],
        [-0.06, -0.09, 0.0],
        [0.0, 0.11, -0.01],
        [0.04, -0.38, 0.0],
        [-0.04, -0.38, 0.0],
        [0.0, 0.13, 0.01],
        [-0.01, -0.40, -0.04],
        [0.01, -0.40, -0.04],
        [0.0, 0.05, 0.0],
        [0.02, -0.06, 0.12],
        [-0.02, -0.06, 0.12],
        [0.0, 0.21, -0.03],
        [0.07, 0.11, -0.01],
        [-0.07, 0.11, -0.01],
        [0.0, 0.09, 0.05],
        [0.11, 0.04, -0.01],
        [-0.11, 0.04, -0.01],
        [0.26, 0.0, -0.02],
        [-0.26, 0.0, -0.02],
        [0.25, 0.01, 0.0],
        [-0.25, 0.01, 0.0],
        [0.08, -0.01, -0.01],
        [-0.08, -0.01, -0.01],
    ];
}

const TABLE_HEADER: &str = "# vtm-skeleton v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    joint_names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
}

impl Skeleton {
    /// Validates that the joints form a single tree in topological order
    /// (root first, every parent before its children) and that every
    /// non-root bone has positive length. The root offset is forced to the origin.
    pub fn new(
        joint_names: Vec<String>,
        parents: Vec<Option<usize>>,
        mut offsets: Vec<Vec3>,
    ) -> Result<Self> {
        let n = joint_names.len();
        if n == 0 || parents.len() != n || offsets.len() != n {
            return Err(VtmError::TopologyMismatch(format!(
                "{} names, {} parents, {} offsets",
                n,
                parents.len(),
                offsets.len()
            )));
        }
        if parents[0].is_some() {
            return Err(VtmError::TopologyMismatch("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(VtmError::TopologyMismatch(format!("joint {j} is a second root"))),
                Some(p) if *p >= j => {
                    return Err(VtmError::TopologyMismatch(format!(
                        "joint {j} has parent {p} that is not earlier in the list"
                    )))
                }
                _ => {}
            }
            if !(offsets[j].norm() > 0.0) {
                return Err(VtmError::ZeroBone { bone: j - 1 });
            }
        }
        offsets[0] = Vec3::zeros();
        Ok(Skeleton {
            joint_names,
            parents,
            offsets,
        })
    }

    /// A skeleton on the canonical 24-joint layout.
    pub fn canonical(offsets: Vec<Vec3>) -> Result<Self> {
        Skeleton::new(
            layout::JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            layout::PARENTS.to_vec(),
            offsets,
        )
    }

    pub fn template() -> Self {
        Skeleton::canonical(
            layout::TEMPLATE_OFFSETS
                .iter()
                .map(|o| Vec3::new(o[0], o[1], o[2]))
                .collect(),
        )
        .expect("template skeleton is valid")
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn num_bones(&self) -> usize {
        self.num_joints() - 1
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    pub fn is_canonical(&self) -> bool {
        self.num_joints() == layout::NUM_JOINTS
            && self
                .joint_names
                .iter()
                .zip(layout::JOINT_NAMES)
                .all(|(a, b)| a == b)
            && self.parents == layout::PARENTS
    }

    /// Bone `i` connects joint `i + 1` to its parent.
    pub fn bone_lengths(&self) -> Vec<f64> {
        self.offsets[1..].iter().map(|o| o.norm()).collect()
    }

    /// Mean length of the two hip-to-foot chains (canonical layout only).
    pub fn leg_length(&self) -> f64 {
        layout::LEG_CHAINS
            .iter()
            .map(|chain| chain.iter().map(|&j| self.offsets[j].norm()).sum::<f64>())
            .sum::<f64>()
            / layout::LEG_CHAINS.len() as f64
    }

    pub fn same_topology(&self, other: &Skeleton) -> bool {
        self.joint_names == other.joint_names && self.parents == other.parents
    }

    pub fn check_topology(&self, other: &Skeleton) -> Result<()> {
        if self.same_topology(other) {
            Ok(())
        } else {
            Err(VtmError::TopologyMismatch(
                "skeletons differ in joint names or parents".into(),
            ))
        }
    }

    /// Versioned text table: one `name parent x y z` row per joint.
    pub fn to_table(&self) -> String {
        let mut s = String::from(TABLE_HEADER);
        s.push('\n');
        for j in 0..self.num_joints() {
            let parent = self.parents[j].map_or(-1, |p| p as i64);
            let o = self.offsets[j];
            let _ = writeln!(s, "{} {} {} {} {}", self.joint_names[j], parent, o.x, o.y, o.z);
        }
        s
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == TABLE_HEADER => {}
            _ => {
                return Err(VtmError::Format(format!(
                    "skeleton table must start with '{TABLE_HEADER}'"
                )))
            }
        }
        let mut names = Vec::new();
        let mut parents = Vec::new();
        let mut offsets = Vec::new();
        for (i, line) in lines {
            let syntax = |m: &str| VtmError::Syntax {
                line: i + 1,
                message: m.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(syntax("expected: name parent x y z"));
            }
            let parent: i64 = fields[1].parse().map_err(|_| syntax("bad parent index"))?;
            let mut xyz = [0.0; 3];
            for (k, v) in xyz.iter_mut().enumerate() {
                *v = fields[2 + k].parse().map_err(|_| syntax("bad offset"))?;
            }
            names.push(fields[0].to_string());
            parents.push(if parent < 0 { None } else { Some(parent as usize) });
            offsets.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
        }
        Skeleton::new(names, parents, offsets)
    }
}

/// Per-bone length ratios of a character skeleton against the virtual skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct BoneRatios(pub Vec<f64>);

impl BoneRatios {
    pub fn ones(bones: usize) -> Self {
        BoneRatios(vec![1.0; bones])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Mean bone lengths combined with the normalized mean offset direction.
pub fn average_skeleton(skeletons: &[Skeleton]) -> Result<Skeleton> {
    let first = skeletons
        .first()
        .ok_or_else(|| VtmError::TopologyMismatch("no skeletons to average".into()))?;
    for s in &skeletons[1..] {
        first.check_topology(s)?;
    }
    let n = skeletons.len() as f64;
    let mut offsets = vec![Vec3::zeros(); first.num_joints()];
    for (j, offset) in offsets.iter_mut().enumerate().skip(1) {
        let mut length = 0.0;
        let mut direction = Vec3::zeros();
        for s in skeletons {
            let o = s.offsets[j];
            let l = o.norm();
            length += l;
            direction += o / l;
        }
        length /= n;
        let dn = direction.norm();
        let dir = if dn > 1e-12 {
            direction / dn
        } else {
            // Directions cancel out; fall back to the first skeleton's.
            first.offsets[j] / first.offsets[j].norm()
        };
        *offset = dir * length;
    }
    Skeleton::new(first.joint_names.clone(), first.parents.clone(), offsets)
}

pub fn bone_ratios(skeleton: &Skeleton, virtual_skeleton: &Skeleton) -> Result<BoneRatios> {
    skeleton.check_topology(virtual_skeleton)?;
    let lengths = skeleton.bone_lengths();
    let reference = virtual_skeleton.bone_lengths();
    lengths
        .iter()
        .zip(&reference)
        .enumerate()
        .map(|(i, (l, r))| {
            if *r == 0.0 {
                Err(VtmError::ZeroBone { bone: i })
            } else {
                Ok(l / r)
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(BoneRatios)
}

/// Scales each virtual bone by its ratio, keeping the virtual directions.
pub fn apply_ratios(virtual_skeleton: &Skeleton, ratios: &BoneRatios) -> Result<Skeleton> {
    if ratios.0.len() != virtual_skeleton.num_bones() {
        return Err(VtmError::shape(format!(
            "{} ratios for {} bones",
            ratios.0.len(),
            virtual_skeleton.num_bones()
        )));
    }
    let mut offsets = virtual_skeleton.offsets.clone();
    for (o, r) in offsets[1..].iter_mut().zip(&ratios.0) {
        *o *= *r;
    }
    Skeleton::new(
        virtual_skeleton.joint_names.clone(),
        virtual_skeleton.parents.clone(),
        offsets,
    )
}

/// Ratio by which root translations are scaled when moving motion from
/// `source` onto `target`.
pub fn leg_scale(source: &Skeleton, target: &Skeleton) -> f64 {
    target.leg_length() / source.leg_length()
}

/// Retargets motion between skeletons of the same topology. Joint rotations
/// are copied unchanged; root translations are scaled by the leg-length ratio.
pub fn align_motion(poses: &[Pose], source: &Skeleton, target: &Skeleton) -> Result<Vec<Pose>> {
    source.check_topology(target)?;
    if source == target {
        return Ok(poses.to_vec());
    }
    let scale = leg_scale(source, target);
    Ok(poses
        .iter()
        .map(|p| Pose {
            rotations: p.rotations.clone(),
            root: p.root * scale,
        })
        .collect())
}

/// Builds a skeleton from tracked joint positions, taking the median bone
/// length over frames and the template's bone directions.
pub fn skeleton_from_positions(template: &Skeleton, frames: &[Vec<Vec3>]) -> Result<Skeleton> {
    if frames.is_empty() {
        return Err(VtmError::DegenerateInput("no frames".into()));
    }
    let n = template.num_joints();
    if frames.iter().any(|f| f.len() != n) {
        return Err(VtmError::shape("frame joint count differs from template"));
    }
    let mut offsets = template.offsets.clone();
    for j in 1..n {
        let p = template.parents[j].expect("non-root");
        let mut lengths: Vec<f64> = frames.iter().map(|f| (f[j] - f[p]).norm()).collect();
        lengths.sort_by(f64::total_cmp);
        let m = lengths.len();
        let median = if m % 2 == 1 {
            lengths[m / 2]
        } else {
            0.5 * (lengths[m / 2 - 1] + lengths[m / 2])
        };
        offsets[j] = offsets[j].normalize() * median;
    }
    Skeleton::new(template.joint_names.clone(), template.parents.clone(), offsets)
}
