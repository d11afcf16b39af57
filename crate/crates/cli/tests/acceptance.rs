//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtm::bvh::{load_bvh, parse_bvh, to_motion, write_bvh, BvhDocument, BvhJoint, Channel};
use vtm::camera::{project_point, recover_root_translation, Camera};
use vtm::dataset::Dataset;
use vtm::kinematics::{forward_kinematics, rot_to_6d, six_d_to_rot, Pose, Rotation, Vec3};
use vtm::metrics::{mpjpe, mrpe, pa_mpjpe};
use vtm::models::{decoded_rotations, load_checkpoint};
use vtm::representation::{make_windows, JointArray, SequenceRecord, POS, WINDOW, WINDOW_STRIDE};
use vtm::skeleton::{align_motion, apply_ratios, average_skeleton, bone_ratios, layout, Skeleton};
use vtm::training::TrainConfig;
use vtm_cli::commands::{
    evaluate_cmd, gradcheck_cmd, prepare, reconstruct_cmd, train_tpmae_cmd, train_vtm_cmd, KeypointSource,
};
use vtm_cli::config::Settings;
use vtm_cli::synth::{synth_camera, write_synth, SynthConfig};

const TPMAE_MPJPE_MM: f64 = 5.0;
const TPMAE_BUDGET: Duration = Duration::from_secs(15 * 60);
const VTM_MPJPE_MM: f64 = 20.0;
const VTM_MRPE_MM: f64 = 25.0;
const VTM_BUDGET: Duration = Duration::from_secs(30 * 60);
const GRADCHECK_REL: f64 = 1e-4;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(2 * 60);
const SIX_D_RAD: f64 = 1e-9;
const BONE_LENGTH_M: f64 = 1e-9;
const RECOVER_M: f64 = 1e-9;
const PA_COPY_MM: f64 = 1e-9;
const RATIO_M: f64 = 1e-9;
const BVH_TOL: f64 = 1e-5;

const SYNTH_SEQUENCES: usize = 8;
const SYNTH_FRAMES: usize = 32;
const SYNTH_SEED: u64 = 7;
const TPMAE_EPOCHS: usize = 500;
const TPMAE_LR: f64 = 2e-3;
const VTM_EPOCHS: usize = 300;
const VTM_LR: f64 = 1e-3;
const UNIT_SCALE: f64 = 0.01;

struct Tally {
    failed: usize,
}

impl Tally {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed += 1;
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    Rotation::from_scaled_axis(random_vec(rng, 3.0))
}

fn random_skeleton(rng: &mut ChaCha8Rng) -> Skeleton {
    let offsets = layout::TEMPLATE_OFFSETS
        .iter()
        .map(|o| Vec3::new(o[0], o[1], o[2]) * rng.gen_range(0.5..1.6))
        .collect();
    Skeleton::canonical(offsets).unwrap()
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose {
        rotations: (0..layout::NUM_JOINTS).map(|_| random_rotation(rng)).collect(),
        root: random_vec(rng, 5.0),
    }
}

fn cloud(rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..layout::NUM_JOINTS).map(|_| random_vec(rng, 1.0)).collect()
}

fn gradcheck(t: &mut Tally) {
    let start = Instant::now();
    let (checks, _) = gradcheck_cmd(0, GRADCHECK_REL).unwrap();
    let elapsed = start.elapsed();
    let worst = checks.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    let names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    let complete = names.iter().any(|n| n.starts_with("tpmae"))
        && names.iter().any(|n| n.starts_with("vtm"))
        && names.contains(&"conv_transpose1d")
        && names.contains(&"smooth_l1");
    let ok = worst < GRADCHECK_REL && complete && checks.iter().all(|c| c.report.checked > 0);
    t.record(
        "3 gradcheck",
        ok && elapsed < GRADCHECK_BUDGET,
        format!(
            "{} checks, max relative error {worst:.2e} < {GRADCHECK_REL:e}, {:.1} s",
            checks.len(),
            elapsed.as_secs_f64()
        ),
    );
}

fn geometry(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let six_d = (0..1000)
        .map(|_| {
            let r = random_rotation(&mut rng);
            six_d_to_rot(&rot_to_6d(&r)).unwrap().angle_to(&r)
        })
        .fold(0.0, f64::max);

    let mut bones = 0.0f64;
    for _ in 0..200 {
        let s = random_skeleton(&mut rng);
        let pos = forward_kinematics(&s, &random_pose(&mut rng));
        for (j, len) in s.bone_lengths().iter().enumerate() {
            let parent = s.parents()[j + 1].unwrap();
            bones = bones.max(((pos[j + 1] - pos[parent]).norm() - len).abs());
        }
    }

    let mut recover = 0.0f64;
    for _ in 0..1000 {
        let cam = Camera::new(
            "c",
            rng.gen_range(300.0..2000.0),
            rng.gen_range(300.0..2000.0),
            rng.gen_range(-500.0..1500.0),
            rng.gen_range(-500.0..1500.0),
            Rotation::identity(),
            Vec3::zeros(),
        )
        .unwrap();
        let p = Vec3::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.5..20.0),
        );
        let uv = project_point(&p, &cam).unwrap();
        recover = recover.max((recover_root_translation(uv, p.z, &cam).unwrap() - p).norm());
    }

    let mut pa_copy = 0.0f64;
    for _ in 0..100 {
        let gt = vec![cloud(&mut rng)];
        let r = random_rotation(&mut rng).to_matrix();
        let (s, shift) = (rng.gen_range(0.2..5.0), random_vec(&mut rng, 10.0));
        let pred = vec![gt[0].iter().map(|p| s * r * p + shift).collect::<Vec<_>>()];
        pa_copy = pa_copy.max(pa_mpjpe(&pred, &gt).unwrap());
    }

    let mut pa_violations = 0;
    for _ in 0..1000 {
        let gt = vec![cloud(&mut rng)];
        let noise = rng.gen_range(0.001..0.5);
        let pred = vec![gt[0]
            .iter()
            .map(|p| p + random_vec(&mut rng, noise))
            .collect::<Vec<_>>()];
        if pa_mpjpe(&pred, &gt).unwrap() > mpjpe(&pred, &gt).unwrap() {
            pa_violations += 1;
        }
    }

    let ok = six_d < SIX_D_RAD
        && bones < BONE_LENGTH_M
        && recover < RECOVER_M
        && pa_copy < PA_COPY_MM
        && pa_violations == 0;
    t.record(
        "4 geometry",
        ok,
        format!(
            "6d {six_d:.1e} rad, bones {bones:.1e} m, recover {recover:.1e} m, \
             pa copies {pa_copy:.1e} mm, pa > mpjpe {pa_violations}/1000"
        ),
    );
}

fn ratios_and_alignment(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let skeletons: Vec<Skeleton> = (0..100).map(|_| random_skeleton(&mut rng)).collect();
    let avg = average_skeleton(&skeletons).unwrap();
    let mut worst = 0.0f64;
    let mut bitwise = true;
    for s in &skeletons {
        let rebuilt = apply_ratios(&avg, &bone_ratios(s, &avg).unwrap()).unwrap();
        for (a, b) in rebuilt.bone_lengths().iter().zip(s.bone_lengths()) {
            worst = worst.max((a - b).abs());
        }
        let poses: Vec<Pose> = (0..4).map(|_| random_pose(&mut rng)).collect();
        for (p, q) in poses.iter().zip(align_motion(&poses, s, &avg).unwrap()) {
            for (a, b) in p.rotations.iter().zip(&q.rotations) {
                bitwise &= a.wxyz().map(f64::to_bits) == b.wxyz().map(f64::to_bits);
            }
        }
    }
    t.record(
        "5 ratios",
        worst < RATIO_M && bitwise,
        format!("apply_ratios error {worst:.1e} m over 100 skeletons, rotations bitwise {bitwise}"),
    );
}

const ORDERS: [[Channel; 3]; 6] = [
    [Channel::Xrotation, Channel::Yrotation, Channel::Zrotation],
    [Channel::Xrotation, Channel::Zrotation, Channel::Yrotation],
    [Channel::Yrotation, Channel::Xrotation, Channel::Zrotation],
    [Channel::Yrotation, Channel::Zrotation, Channel::Xrotation],
    [Channel::Zrotation, Channel::Xrotation, Channel::Yrotation],
    [Channel::Zrotation, Channel::Yrotation, Channel::Xrotation],
];

/// A random depth-first hierarchy with occasional end sites.
fn random_document(rng: &mut ChaCha8Rng) -> BvhDocument {
    let n = rng.gen_range(1..8);
    let mut joints: Vec<BvhJoint> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    let mut motion_joints = 0;
    for i in 0..n {
        let parent = if i == 0 {
            None
        } else {
            let depth = rng.gen_range(0..path.len());
            path.truncate(depth + 1);
            Some(path[depth])
        };
        let mut channels = Vec::new();
        if i == 0 {
            channels.extend([Channel::Xposition, Channel::Yposition, Channel::Zposition]);
        }
        channels.extend(ORDERS[rng.gen_range(0..6)]);
        joints.push(BvhJoint {
            name: format!("j{i}"),
            parent,
            offset: random_vec(rng, 0.4),
            channels,
            is_end_site: false,
        });
        path.push(joints.len() - 1);
        motion_joints += 1;
        if i > 0 && rng.gen_bool(0.3) {
            path.pop();
            joints.push(BvhJoint {
                name: "End Site".into(),
                parent: Some(joints.len() - 1),
                offset: random_vec(rng, 0.2),
                channels: Vec::new(),
                is_end_site: true,
            });
        }
    }
    let per_frame = 3 + 3 * motion_joints;
    let frames = rng.gen_range(1..5);
    let values = (0..per_frame * frames)
        .map(|k| {
            if k % per_frame < 3 {
                rng.gen_range(-2.0..2.0)
            } else {
                rng.gen_range(-180.0..180.0)
            }
        })
        .collect();
    BvhDocument::new(joints, rng.gen_range(0.001..0.2), values).unwrap()
}

fn bvh_round_trip(t: &mut Tally) {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut ok = 0;
    for _ in 0..200 {
        let doc = random_document(&mut rng);
        let text = write_bvh(&doc);
        let back = parse_bvh(&text).unwrap();
        if back.approx_eq(&doc, BVH_TOL) && write_bvh(&back) == text && write_bvh(&doc) == text {
            ok += 1;
        }
    }
    t.record(
        "6 bvh",
        ok == 200,
        format!("{ok}/200 documents round trip within {BVH_TOL:e} with stable bytes"),
    );
}

fn schedule_and_windows(t: &mut Tally) {
    let cfg = TrainConfig::tpmae_defaults();
    let schedule = (0..1000).all(|e| cfg.lr_at(e) == 1e-4 * 0.5f64.powi((e / 100) as i32));
    let mut windows = true;
    for frames in 32..=200 {
        let enumerated = (0..frames)
            .filter(|o| o % WINDOW_STRIDE == 0 && o + WINDOW <= frames)
            .count();
        let record = SequenceRecord {
            id: "s".into(),
            motion: vtm::representation::MotionSequence {
                array: JointArray::zeros(frames, 24, 12),
                skeleton_id: "s".into(),
                camera_id: "c".into(),
            },
            keypoints: vtm::representation::KeypointSequence {
                array: JointArray::zeros(frames, 24, 4),
            },
            features: None,
            ratios: vtm::skeleton::BoneRatios::ones(23),
        };
        windows &= make_windows(&[record], WINDOW, WINDOW_STRIDE)
            .unwrap()
            .windows
            .len()
            == enumerated;
    }
    t.record(
        "7 schedule",
        schedule && windows,
        format!("lr exact for epochs 0..1000 {schedule}, window counts match for T in 32..=200 {windows}"),
    );
}

struct RunResult {
    tpmae_mpjpe: f64,
    tpmae_time: Duration,
    vtm_mpjpe: f64,
    vtm_mrpe: f64,
    vtm_time: Duration,
    tpmae_bytes: Vec<u8>,
    vtm_bytes: Vec<u8>,
    reports: String,
}

/// Root-relative error of the autoencoder's rotations on the virtual skeleton.
fn autoencoder_mpjpe(ckpt: &Path, dataset: &Path) -> f64 {
    let model = load_checkpoint(ckpt).unwrap();
    let ds = Dataset::load(dataset).unwrap();
    let (mut pred, mut gt) = (Vec::new(), Vec::new());
    for seq in &ds.sequences {
        let a = &seq.motion.array;
        let decoded = model.autoencode(a).unwrap();
        for f in 0..a.frames() {
            let pose = Pose {
                rotations: decoded_rotations(&decoded, f).unwrap(),
                root: Vec3::zeros(),
            };
            pred.push(forward_kinematics(&model.virtual_skeleton, &pose));
            gt.push(
                (0..a.joints())
                    .map(|j| {
                        let p = &a.get(f, j)[POS];
                        Vec3::new(p[0], p[1], p[2])
                    })
                    .collect(),
            );
        }
    }
    mpjpe(&pred, &gt).unwrap()
}

fn world_positions(path: &Path) -> Vec<Vec<Vec3>> {
    let (s, poses) = to_motion(&load_bvh(path, UNIT_SCALE).unwrap()).unwrap();
    poses.iter().map(|p| forward_kinematics(&s, p)).collect()
}

fn pipeline(root: &Path) -> RunResult {
    let (src, data) = (root.join("bvh"), root.join("data"));
    let cfg = SynthConfig {
        sequences: SYNTH_SEQUENCES,
        frames: SYNTH_FRAMES,
        seed: SYNTH_SEED,
    };
    let gt_files = write_synth(&src, &cfg).unwrap();
    prepare(&src, &synth_camera(), &data, UNIT_SCALE, None).unwrap();

    let mut tpmae = Settings::tpmae_defaults();
    tpmae.train.epochs = TPMAE_EPOCHS;
    tpmae.train.lr = TPMAE_LR;
    tpmae.train.batch_size = 1;
    let tp_ckpt = root.join("tpmae.ckpt");
    let start = Instant::now();
    train_tpmae_cmd(
        &data,
        &tp_ckpt,
        &tpmae,
        Some(&root.join("tpmae.csv")),
        &mut |_| {},
    )
    .unwrap();
    let tpmae_time = start.elapsed();
    let tpmae_mpjpe = autoencoder_mpjpe(&tp_ckpt, &data);

    let mut vtm = Settings::vtm_defaults();
    vtm.train.epochs = VTM_EPOCHS;
    vtm.train.lr = VTM_LR;
    vtm.train.batch_size = 1;
    let vtm_ckpt = root.join("vtm.ckpt");
    let start = Instant::now();
    train_vtm_cmd(
        &data,
        &tp_ckpt,
        &vtm_ckpt,
        &vtm,
        Some(&root.join("vtm.csv")),
        &mut |_| {},
    )
    .unwrap();
    let vtm_time = start.elapsed();

    let (mut pred, mut gt, mut reports) = (Vec::new(), Vec::new(), String::new());
    for gt_file in &gt_files {
        let id = gt_file.file_stem().unwrap().to_str().unwrap().to_string();
        let out = root.join(format!("{id}.rec.bvh"));
        let source = KeypointSource::Dataset {
            dir: data.clone(),
            sequence: id.clone(),
        };
        reconstruct_cmd(&vtm_ckpt, &source, &out, UNIT_SCALE).unwrap();
        reports.push_str(&format!(
            "{id}\n{}",
            evaluate_cmd(&out, gt_file, UNIT_SCALE).unwrap()
        ));
        pred.extend(world_positions(&out));
        gt.extend(world_positions(gt_file));
    }
    let roots = |frames: &[Vec<Vec3>]| frames.iter().map(|f| f[0]).collect::<Vec<_>>();
    RunResult {
        tpmae_mpjpe,
        tpmae_time,
        vtm_mpjpe: mpjpe(&pred, &gt).unwrap(),
        vtm_mrpe: mrpe(&roots(&pred), &roots(&gt)).unwrap(),
        vtm_time,
        tpmae_bytes: fs::read(&tp_ckpt).unwrap(),
        vtm_bytes: fs::read(&vtm_ckpt).unwrap(),
        reports,
    }
}

fn main() -> ExitCode {
    // Only the default harness flags reach a harness = false target; a name
    // filter that does not mention acceptance skips the long run.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let mut t = Tally { failed: 0 };
    gradcheck(&mut t);
    geometry(&mut t);
    ratios_and_alignment(&mut t);
    bvh_round_trip(&mut t);
    schedule_and_windows(&mut t);

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let a = pipeline(dirs[0].path());
    t.record(
        "1 tpmae",
        a.tpmae_mpjpe < TPMAE_MPJPE_MM && a.tpmae_time < TPMAE_BUDGET,
        format!(
            "mpjpe {:.2} mm < {TPMAE_MPJPE_MM} mm after {TPMAE_EPOCHS} epochs, {:.0} s",
            a.tpmae_mpjpe,
            a.tpmae_time.as_secs_f64()
        ),
    );
    t.record(
        "2 vtm",
        a.vtm_mpjpe < VTM_MPJPE_MM && a.vtm_mrpe < VTM_MRPE_MM && a.vtm_time < VTM_BUDGET,
        format!(
            "mpjpe {:.2} mm < {VTM_MPJPE_MM} mm, mrpe {:.2} mm < {VTM_MRPE_MM} mm, {:.0} s",
            a.vtm_mpjpe,
            a.vtm_mrpe,
            a.vtm_time.as_secs_f64()
        ),
    );

    let b = pipeline(dirs[1].path());
    let same_ckpt = a.tpmae_bytes == b.tpmae_bytes && a.vtm_bytes == b.vtm_bytes;
    let same_reports = a.reports == b.reports
        && a.tpmae_mpjpe.to_bits() == b.tpmae_mpjpe.to_bits()
        && a.vtm_mpjpe.to_bits() == b.vtm_mpjpe.to_bits()
        && a.vtm_mrpe.to_bits() == b.vtm_mrpe.to_bits();
    t.record(
        "8 determinism",
        same_ckpt && same_reports,
        format!("checkpoints identical {same_ckpt}, metric reports identical {same_reports}"),
    );

    if t.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", t.failed);
        ExitCode::FAILURE
    }
}
