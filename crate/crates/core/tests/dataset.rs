use vtm::camera::Camera;
use vtm::dataset::{
    read_features, read_record, write_features, write_record, Dataset, ManifestEntry, CAMERA_FILE,
    MANIFEST_FILE,
};
use vtm::representation::{FeatureArray, JointArray, KeypointSequence, MotionSequence, SequenceRecord};
use vtm::skeleton::{BoneRatios, Skeleton};

fn ramp(frames: usize, channels: usize) -> JointArray {
    let data = (0..frames * 24 * channels)
        .map(|i| i as f64 * 0.25 - 7.0)
        .collect();
    JointArray::from_vec(frames, 24, channels, data).unwrap()
}

fn record(id: &str, frames: usize, features: bool) -> SequenceRecord {
    SequenceRecord {
        id: id.into(),
        motion: MotionSequence {
            array: ramp(frames, 12),
            skeleton_id: "template".into(),
            camera_id: "cam".into(),
        },
        keypoints: KeypointSequence {
            array: ramp(frames, 4),
        },
        features: features.then(|| FeatureArray {
            frames,
            dim: 3,
            data: (0..frames * 3).map(|i| i as f64 / 8.0).collect(),
        }),
        ratios: BoneRatios((0..23).map(|i| 1.0 + i as f64 / 64.0).collect()),
    }
}

#[test]
fn records_store_single_precision() {
    let a = JointArray::from_vec(1, 24, 1, (0..24).map(|i| 0.1 * i as f64).collect()).unwrap();
    let mut buf = Vec::new();
    write_record(&mut buf, &a).unwrap();
    assert_eq!(&buf[..4], b"VTMD");
    assert_eq!(buf.len(), 20 + 24 * 4);
    let back = read_record(&buf[..]).unwrap();
    for (x, y) in back.data().iter().zip(a.data()) {
        assert_eq!(*x, *y as f32 as f64);
    }
    assert_eq!(read_record(&buf[..buf.len() - 1]).unwrap_err().code(), "E_IO");
    buf[0] = b'Q';
    assert_eq!(read_record(&buf[..]).unwrap_err().code(), "E_FORMAT");
}

#[test]
fn features_round_trip() {
    let f = FeatureArray {
        frames: 2,
        dim: 2,
        data: vec![0.5, -1.0, 2.25, 8.0],
    };
    let mut buf = Vec::new();
    write_features(&mut buf, &f).unwrap();
    assert_eq!(read_features(&buf[..]).unwrap(), f);
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sequences = vec![record("a", 8, true), record("b", 5, false)];
    let entries = sequences
        .iter()
        .map(|s| ManifestEntry {
            id: s.id.clone(),
            skeleton_id: "template".into(),
            camera_id: "cam".into(),
            frames: s.motion.array.frames(),
            frame_time: 1.0 / 30.0,
            ratios: s.ratios.clone(),
        })
        .collect();
    let ds = Dataset {
        virtual_skeleton: Skeleton::template(),
        camera: Camera::looking_at_origin("cam", 5.0, 1.0),
        entries,
        sequences,
    };
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.entries, ds.entries);
    assert_eq!(back.sequences, ds.sequences);
    assert_eq!(back.camera, ds.camera);
    assert!(dir.path().join(CAMERA_FILE).exists());

    let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    std::fs::write(
        dir.path().join(MANIFEST_FILE),
        manifest.replace("a template cam 8", "a template cam 9"),
    )
    .unwrap();
    assert_eq!(Dataset::load(dir.path()).unwrap_err().code(), "E_FORMAT");
}
