//! The pipeline steps behind each subcommand.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use vtm::bvh::{from_motion, load_bvh, to_motion, write_bvh_with_scale};
use vtm::camera::Camera;
use vtm::dataset::{read_features, read_record, Dataset, ManifestEntry};
use vtm::diagnostics::{gradient_suite, GradientCheck, SuiteConfig};
use vtm::kinematics::{forward_kinematics, Pose};
use vtm::metrics::MetricsReport;
use vtm::models::{
    load_checkpoint, reconstruct, save_checkpoint, ModelKind, Normalizer, Reconstruction, VtmModel,
};
use vtm::representation::{
    build_motion_sequence, make_windows, project_keypoints, BodyPartition, FeatureArray, JointArray,
    SequenceRecord, KEYPOINT_CHANNELS, WINDOW, WINDOW_STRIDE,
};
use vtm::skeleton::{align_motion, average_skeleton, bone_ratios, Skeleton};
use vtm::training::{train_tpmae, train_vtm, EpochLog, FeatureMode};
use vtm::{Result, VtmError};

use crate::config::Settings;

/// Adds the path to an I/O error message.
pub fn at_path<T>(r: std::io::Result<T>, path: &Path) -> Result<T> {
    r.map_err(|e| VtmError::io_at(path, e))
}

/// Outcome of `prepare`: the written dataset and the files that were skipped.
#[derive(Debug)]
pub struct Prepared {
    pub dataset: Dataset,
    pub failures: Vec<(PathBuf, VtmError)>,
}

fn bvh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("bvh")))
        .collect();
    files.sort();
    Ok(files)
}

fn sequence_id(path: &Path) -> Result<String> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| VtmError::Format(format!("{} has no usable file name", path.display())))?;
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(VtmError::Format(format!(
            "sequence id {id:?} must be non-empty without spaces"
        )));
    }
    Ok(id.to_string())
}

struct Loaded {
    id: String,
    skeleton: Skeleton,
    poses: Vec<Pose>,
    frame_time: f64,
    features: Option<FeatureArray>,
}

fn load_one(path: &Path, unit_scale: f64, features_dir: Option<&Path>) -> Result<Loaded> {
    let id = sequence_id(path)?;
    let doc = load_bvh(path, unit_scale)?;
    let (skeleton, poses) = to_motion(&doc)?;
    let features = match features_dir {
        None => None,
        Some(dir) => {
            let fpath = dir.join(format!("{id}.vtmf"));
            let f = read_features(at_path(fs::File::open(&fpath), &fpath)?)?;
            if f.frames != poses.len() {
                return Err(VtmError::Mismatch(format!(
                    "{} has {} frames, motion has {}",
                    fpath.display(),
                    f.frames,
                    poses.len()
                )));
            }
            Some(f)
        }
    };
    Ok(Loaded {
        id,
        skeleton,
        poses,
        frame_time: doc.frame_time(),
        features,
    })
}

fn prepare_record(
    l: &Loaded,
    virtual_skeleton: &Skeleton,
    cam: &Camera,
) -> Result<(SequenceRecord, ManifestEntry)> {
    let ratios = bone_ratios(&l.skeleton, virtual_skeleton)?;
    let aligned = align_motion(&l.poses, &l.skeleton, virtual_skeleton)?;
    let motion = build_motion_sequence(virtual_skeleton, &aligned, cam, &l.id)?;
    // Keypoints come from the character's own proportions.
    let original = build_motion_sequence(&l.skeleton, &l.poses, cam, &l.id)?;
    let keypoints = project_keypoints(&original, cam)?;
    let entry = ManifestEntry {
        id: l.id.clone(),
        skeleton_id: l.id.clone(),
        camera_id: cam.name.clone(),
        frames: l.poses.len(),
        frame_time: l.frame_time,
        ratios: ratios.clone(),
    };
    let record = SequenceRecord {
        id: l.id.clone(),
        motion,
        keypoints,
        features: l.features.clone(),
        ratios,
    };
    Ok((record, entry))
}

/// Turns a directory of BVH files into a dataset. Unreadable files are
/// logged and skipped; the run fails only when none succeed.
pub fn prepare(
    bvh_dir: &Path,
    cam: &Camera,
    out_dir: &Path,
    unit_scale: f64,
    features_dir: Option<&Path>,
) -> Result<Prepared> {
    let mut failures = Vec::new();
    let mut loaded = Vec::new();
    for path in bvh_files(bvh_dir)? {
        match load_one(&path, unit_scale, features_dir) {
            Ok(l) => loaded.push((path, l)),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                failures.push((path, e));
            }
        }
    }
    if loaded.is_empty() {
        return Err(VtmError::DegenerateInput(format!(
            "no usable BVH files in {}",
            bvh_dir.display()
        )));
    }
    let skeletons: Vec<Skeleton> = loaded.iter().map(|(_, l)| l.skeleton.clone()).collect();
    let virtual_skeleton = average_skeleton(&skeletons)?;

    let mut sequences = Vec::new();
    let mut entries = Vec::new();
    for (path, l) in &loaded {
        match prepare_record(l, &virtual_skeleton, cam) {
            Ok((r, e)) => {
                sequences.push(r);
                entries.push(e);
            }
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                failures.push((path.clone(), e));
            }
        }
    }
    if sequences.is_empty() {
        return Err(VtmError::DegenerateInput(
            "every sequence failed to prepare".into(),
        ));
    }
    let dataset = Dataset {
        virtual_skeleton,
        camera: cam.clone(),
        entries,
        sequences,
    };
    dataset.save(out_dir)?;
    info!(
        "prepared {} sequences into {}",
        dataset.sequences.len(),
        out_dir.display()
    );
    Ok(Prepared { dataset, failures })
}

/// Per-epoch CSV log, flushed after every line.
pub struct EpochWriter {
    out: Option<BufWriter<fs::File>>,
}

impl EpochWriter {
    pub fn create(path: Option<&Path>, joint: bool) -> Result<Self> {
        let out = match path {
            None => None,
            Some(p) => {
                let mut w = BufWriter::new(fs::File::create(p)?);
                writeln!(w, "{}", EpochLog::csv_header(joint))?;
                w.flush()?;
                Some(w)
            }
        };
        Ok(EpochWriter { out })
    }

    pub fn write(&mut self, log: &EpochLog) -> Result<()> {
        if let Some(w) = &mut self.out {
            writeln!(w, "{}", log.csv_line())?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Runs `train` while streaming epochs to the log, surfacing the first
/// write failure after training returns.
fn with_log<F>(
    log: Option<&Path>,
    joint: bool,
    on_epoch: &mut dyn FnMut(&EpochLog),
    train: F,
) -> Result<Vec<EpochLog>>
where
    F: FnOnce(&mut dyn FnMut(&EpochLog)) -> Result<Vec<EpochLog>>,
{
    let mut writer = EpochWriter::create(log, joint)?;
    let mut failed: Option<VtmError> = None;
    let logs = train(&mut |l: &EpochLog| {
        if failed.is_none() {
            if let Err(e) = writer.write(l) {
                failed = Some(e);
            }
        }
        on_epoch(l);
    })?;
    match failed {
        Some(e) => Err(e),
        None => Ok(logs),
    }
}

fn training_windows(dataset: &Dataset) -> Result<Vec<vtm::representation::TrainingWindow>> {
    let w = make_windows(&dataset.sequences, WINDOW, WINDOW_STRIDE)?;
    for (id, e) in &w.skipped {
        warn!("sequence {id} was skipped: {e}");
    }
    if w.windows.is_empty() {
        return Err(VtmError::SequenceTooShort {
            frames: dataset.entries.iter().map(|e| e.frames).max().unwrap_or(0),
            needed: WINDOW,
        });
    }
    Ok(w.windows)
}

/// Trains the motion autoencoder from scratch and writes its checkpoint.
pub fn train_tpmae_cmd(
    dataset_dir: &Path,
    checkpoint: &Path,
    settings: &Settings,
    log: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(VtmModel, Vec<EpochLog>)> {
    let dataset = Dataset::load(dataset_dir)?;
    let windows = training_windows(&dataset)?;
    let motions: Vec<&JointArray> = dataset.sequences.iter().map(|s| &s.motion.array).collect();
    let normalizer = Normalizer::fit(&motions, &dataset.camera)?;
    let partition = BodyPartition::canonical();
    let mut model = VtmModel::new_tpmae(
        settings.train.seed,
        normalizer,
        dataset.virtual_skeleton,
        partition,
    )?;
    info!("training the autoencoder on {} windows", windows.len());
    let logs = with_log(log, false, on_epoch, |cb| {
        train_tpmae(&mut model, &windows, &settings.train, cb)
    })?;
    save_checkpoint(checkpoint, &model)?;
    Ok((model, logs))
}

/// Adds the visual encoder to a trained autoencoder, trains both jointly
/// and writes the combined checkpoint.
pub fn train_vtm_cmd(
    dataset_dir: &Path,
    tpmae_checkpoint: &Path,
    checkpoint: &Path,
    settings: &Settings,
    log: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(VtmModel, Vec<EpochLog>)> {
    let dataset = Dataset::load(dataset_dir)?;
    let mut model = load_checkpoint(tpmae_checkpoint)?;
    if model.kind() != ModelKind::Tpmae {
        return Err(VtmError::Checkpoint(format!(
            "{} already holds a {} model",
            tpmae_checkpoint.display(),
            model.kind().name()
        )));
    }
    model.virtual_skeleton.check_topology(&dataset.virtual_skeleton)?;
    let feature_dim = match settings.train.feature_mode {
        FeatureMode::Zeros => settings.feature_dim,
        FeatureMode::File => {
            let dims: Vec<usize> = dataset
                .sequences
                .iter()
                .map(|s| s.features.as_ref().map_or(0, |f| f.dim))
                .collect();
            match dims.first() {
                Some(&d) if d > 0 && dims.iter().all(|&x| x == d) => d,
                _ => {
                    return Err(VtmError::Config(
                        "feature_mode = file needs features of one width for every sequence".into(),
                    ))
                }
            }
        }
    };
    let windows = training_windows(&dataset)?;
    model.attach_tpve(settings.train.seed, feature_dim)?;
    info!("joint training on {} windows", windows.len());
    let logs = with_log(log, true, on_epoch, |cb| {
        train_vtm(&mut model, &windows, &settings.train, cb)
    })?;
    save_checkpoint(checkpoint, &model)?;
    Ok((model, logs))
}

/// Where `reconstruct` reads its keypoints from.
#[derive(Clone, Debug)]
pub enum KeypointSource {
    /// A sequence of a prepared dataset, with its camera and features.
    Dataset { dir: PathBuf, sequence: String },
    /// A VTMD record of `T x J x 4` pixel keypoints.
    Files {
        keypoints: PathBuf,
        camera: PathBuf,
        features: Option<PathBuf>,
        frame_time: f64,
    },
}

pub struct ReconstructInput {
    pub keypoints: JointArray,
    pub features: Option<FeatureArray>,
    pub camera: Camera,
    pub frame_time: f64,
}

fn reconstruct_input(source: &KeypointSource) -> Result<ReconstructInput> {
    match source {
        KeypointSource::Dataset { dir, sequence } => {
            let mut ds = Dataset::load(dir)?;
            let i = ds
                .sequences
                .iter()
                .position(|s| &s.id == sequence)
                .ok_or_else(|| VtmError::Format(format!("dataset has no sequence {sequence:?}")))?;
            let frame_time = ds.entries[i].frame_time;
            let seq = ds.sequences.swap_remove(i);
            Ok(ReconstructInput {
                keypoints: seq.keypoints.array,
                features: seq.features,
                camera: ds.camera,
                frame_time,
            })
        }
        KeypointSource::Files {
            keypoints,
            camera,
            features,
            frame_time,
        } => {
            let k = read_record(at_path(fs::File::open(keypoints), keypoints)?)?;
            if k.channels() != KEYPOINT_CHANNELS {
                return Err(VtmError::Mismatch(format!(
                    "keypoint record has {} channels, expected {KEYPOINT_CHANNELS}",
                    k.channels()
                )));
            }
            let features = features
                .as_ref()
                .map(|p| read_features(at_path(fs::File::open(p), p)?))
                .transpose()?;
            Ok(ReconstructInput {
                keypoints: k,
                features,
                camera: Camera::from_text(&at_path(fs::read_to_string(camera), camera)?)?,
                frame_time: *frame_time,
            })
        }
    }
}

/// Path of the root track written next to a reconstructed BVH.
pub fn root_track_path(bvh: &Path) -> PathBuf {
    bvh.with_extension("root.csv")
}

/// Poses moved from camera space to world space.
pub fn world_poses(poses: &[Pose], cam: &Camera) -> Vec<Pose> {
    let inv = cam.rotation.inverse();
    poses
        .iter()
        .map(|p| {
            let mut rotations = p.rotations.clone();
            rotations[0] = inv * p.rotations[0];
            Pose {
                rotations,
                root: cam.point_to_world(&p.root),
            }
        })
        .collect()
}

/// Predicts motion for the keypoints and writes a world-space BVH on the
/// predicted skeleton plus a CSV of camera-space root positions.
pub fn reconstruct_cmd(
    checkpoint: &Path,
    source: &KeypointSource,
    out_bvh: &Path,
    unit_scale: f64,
) -> Result<Reconstruction> {
    let model = load_checkpoint(checkpoint)?;
    let input = reconstruct_input(source)?;
    let rec = reconstruct(&model, &input.keypoints, input.features.as_ref(), &input.camera)?;
    let doc = from_motion(
        &rec.skeleton,
        &world_poses(&rec.poses, &input.camera),
        input.frame_time,
    )?;
    at_path(
        fs::write(out_bvh, write_bvh_with_scale(&doc, unit_scale)),
        out_bvh,
    )?;
    let mut track = String::from("frame,x,y,z\n");
    for (t, p) in rec.poses.iter().enumerate() {
        track.push_str(&format!("{t},{:.9},{:.9},{:.9}\n", p.root.x, p.root.y, p.root.z));
    }
    let track_path = root_track_path(out_bvh);
    at_path(fs::write(&track_path, track), &track_path)?;
    Ok(rec)
}

fn positions(skeleton: &Skeleton, poses: &[Pose]) -> Vec<Vec<vtm::kinematics::Vec3>> {
    poses.iter().map(|p| forward_kinematics(skeleton, p)).collect()
}

/// Compares a predicted BVH against ground truth.
pub fn evaluate_cmd(pred: &Path, gt: &Path, unit_scale: f64) -> Result<MetricsReport> {
    let (ps, pp) = to_motion(&load_bvh(pred, unit_scale)?)?;
    let (gs, gp) = to_motion(&load_bvh(gt, unit_scale)?)?;
    if pp.len() != gp.len() {
        return Err(VtmError::Mismatch(format!(
            "prediction has {} frames, ground truth {}",
            pp.len(),
            gp.len()
        )));
    }
    MetricsReport::compute(&positions(&ps, &pp), &positions(&gs, &gp), &ps, &gs)
}

/// Runs the gradient suite; returns every check and whether all passed.
pub fn gradcheck_cmd(seed: u64, tolerance: f64) -> Result<(Vec<GradientCheck>, bool)> {
    let checks = gradient_suite(&SuiteConfig {
        seed,
        ..SuiteConfig::default()
    })?;
    let ok = checks.iter().all(|c| c.report.passed(tolerance));
    Ok((checks, ok))
}
