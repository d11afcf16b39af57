use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtm::autodiff::Graph;
use vtm::camera::Camera;
use vtm::kinematics::{Pose, Rotation, Vec3};
use vtm::models::{
    checkpoint_bytes, read_checkpoint, reconstruct, unalign_root, ModelKind, Normalizer, VtmModel,
    LOWER_LATENT, UPPER_LATENT,
};
use vtm::representation::{build_motion_sequence, BodyPartition, FeatureArray, JointArray, POS};
use vtm::skeleton::{align_motion, leg_scale, Skeleton};

const J: usize = 24;

fn normalizer() -> Normalizer {
    Normalizer {
        motion_mean: vec![0.1; J * 12],
        motion_std: vec![0.5; J * 12],
        keypoint_center: [960.0, 540.0],
        keypoint_scale: [960.0, 540.0],
    }
}

fn model(seed: u64) -> VtmModel {
    VtmModel::new_tpmae(
        seed,
        normalizer(),
        Skeleton::template(),
        BodyPartition::canonical(),
    )
    .unwrap()
}

fn joint_model(seed: u64, feature_dim: usize) -> VtmModel {
    let mut m = model(seed);
    m.attach_tpve(seed + 1, feature_dim).unwrap();
    m
}

fn random_array(rng: &mut ChaCha8Rng, frames: usize, channels: usize, lo: f64, hi: f64) -> JointArray {
    let data = (0..frames * J * channels)
        .map(|_| rng.gen_range(lo..hi))
        .collect();
    JointArray::from_vec(frames, J, channels, data).unwrap()
}

#[test]
fn encoder_output_has_latent_shapes() {
    let m = model(0);
    let mut g = Graph::new();
    let p = m.store.bind(&mut g, false);
    let xu = g.constant(vtm::autodiff::Tensor::zeros(&[1, 16 * 12, 32]));
    let xl = g.constant(vtm::autodiff::Tensor::zeros(&[1, 9 * 12, 32]));
    let (zu, zl) = m.tpmae.encode(&mut g, &p, xu, xl).unwrap();
    assert_eq!(g.shape(zu), &[1, UPPER_LATENT, 8]);
    assert_eq!(g.shape(zl), &[1, LOWER_LATENT, 8]);
    let (nr, r) = m.tpmae.decode(&mut g, &p, zu, zl).unwrap();
    assert_eq!(g.shape(nr), &[1, 23 * 12, 32]);
    assert_eq!(g.shape(r), &[1, 8, 32]);
}

#[test]
fn lengths_not_divisible_by_four_are_rejected() {
    let m = model(0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let motion = random_array(&mut rng, 30, 12, -1.0, 1.0);
    assert_eq!(m.autoencode(&motion).unwrap_err().code(), "E_SHAPE");
}

#[test]
fn same_seed_same_parameters() {
    let (a, b, c) = (joint_model(5, 8), joint_model(5, 8), joint_model(6, 8));
    assert_eq!(a.store.tensors(), b.store.tensors());
    assert_ne!(a.store.tensors(), c.store.tensors());
}

#[test]
fn zero_features_make_feature_width_irrelevant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kp = random_array(&mut rng, 32, 4, 0.0, 1000.0);
    let narrow = joint_model(3, 4).predict(&kp, None).unwrap();
    let wide = joint_model(3, 64).predict(&kp, None).unwrap();
    assert_eq!(narrow.motion, wide.motion);
    assert_eq!(narrow.ratios, wide.ratios);
}

#[test]
fn features_change_the_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kp = random_array(&mut rng, 32, 4, 0.0, 1000.0);
    let m = joint_model(3, 4);
    let f = FeatureArray {
        frames: 32,
        dim: 4,
        data: (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    let with = m.predict(&kp, Some(&f)).unwrap();
    let without = m.predict(&kp, None).unwrap();
    assert_ne!(with.motion, without.motion);
}

#[test]
fn predicted_ratios_are_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kp = random_array(&mut rng, 16, 4, -5000.0, 5000.0);
    let r = joint_model(9, 4).predict(&kp, None).unwrap().ratios;
    assert_eq!(r.0.len(), 23);
    assert!(r.0.iter().all(|&v| v > 0.0));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    for m in [model(7), joint_model(7, 12)] {
        let bytes = checkpoint_bytes(&m).unwrap();
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back.kind(), m.kind());
        assert_eq!(back.feature_dim(), m.feature_dim());
        assert_eq!(back.store.names(), m.store.names());
        assert_eq!(back.store.tensors(), m.store.tensors());
        assert_eq!(back.normalizer, m.normalizer);
        assert_eq!(back.virtual_skeleton, m.virtual_skeleton);
        assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
    }
    assert_eq!(model(0).kind(), ModelKind::Tpmae);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let bytes = checkpoint_bytes(&model(8)).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert_eq!(
        read_checkpoint(&bad_magic[..]).unwrap_err().code(),
        "E_CHECKPOINT"
    );
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    assert_eq!(
        read_checkpoint(&bad_version[..]).unwrap_err().code(),
        "E_CHECKPOINT"
    );
    assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert_eq!(read_checkpoint(&trailing[..]).unwrap_err().code(), "E_CHECKPOINT");
}

#[test]
fn reconstruction_pads_and_trims_odd_lengths() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cam = Camera::looking_at_origin("c", 6.0, 1.0);
    let mut kp = random_array(&mut rng, 30, 4, 400.0, 600.0);
    for t in 0..30 {
        kp.get_mut(t, 0)[2..].fill(0.0);
    }
    // Root depth denormalizes to about 5 m so an untrained model stays in front of the camera.
    let mut norm = normalizer();
    norm.motion_mean[8] = 5.0;
    norm.motion_std[8] = 0.01;
    let mut m = VtmModel::new_tpmae(11, norm, Skeleton::template(), BodyPartition::canonical()).unwrap();
    m.attach_tpve(12, 4).unwrap();
    let rec = reconstruct(&m, &kp, None, &cam).unwrap();
    assert_eq!(rec.poses.len(), 30);
    assert_eq!(rec.skeleton.num_joints(), J);
}

#[test]
fn unalignment_recovers_the_original_root() {
    // Aligning scales the world root by r; in camera space that is
    // p_a = r * p + (1 - r) * t_cam, which unalign_root must invert.
    let cam = Camera::looking_at_origin("c", 7.0, 1.2);
    let t = Skeleton::template();
    let small = Skeleton::canonical(t.offsets().iter().map(|o| o * 0.9).collect()).unwrap();
    let poses: Vec<Pose> = (0..5)
        .map(|i| Pose {
            rotations: vec![Rotation::from_scaled_axis(Vec3::new(0.0, 0.3 * i as f64, 0.0)); J],
            root: Vec3::new(0.2 * i as f64, 0.9, -0.3),
        })
        .collect();
    let aligned = align_motion(&poses, &small, &t).unwrap();
    let a = build_motion_sequence(&t, &aligned, &cam, "a").unwrap();
    let o = build_motion_sequence(&small, &poses, &cam, "o").unwrap();
    let r = leg_scale(&small, &t);
    for f in 0..5 {
        let pa = &a.array.get(f, 0)[POS];
        let po = &o.array.get(f, 0)[POS];
        let back = unalign_root(&Vec3::new(pa[0], pa[1], pa[2]), r, &cam);
        assert!((back - Vec3::new(po[0], po[1], po[2])).norm() < 1e-9);
    }
}
