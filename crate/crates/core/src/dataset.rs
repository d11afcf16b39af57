//! On-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.txt          one row per sequence
//! <dir>/virtual_skeleton.txt  skeleton table of the average skeleton
//! <dir>/camera.txt            camera the sequences were rendered with
//! <dir>/sequences/<id>.vtmd   motion (12) + keypoint (4) channels per joint
//! <dir>/features/<id>.vtmf    optional precomputed visual features
//! ```
//!
//! Binary records are little-endian: a 4-byte magic, `u32` version, then
//! `u32` dimensions and 32-bit float payload.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::camera::Camera;
use crate::error::{Result, VtmError};
use crate::representation::{
    FeatureArray, JointArray, KeypointSequence, MotionSequence, SequenceRecord, KEYPOINT_CHANNELS,
    MOTION_CHANNELS,
};
use crate::skeleton::{BoneRatios, Skeleton};

pub const RECORD_MAGIC: &[u8; 4] = b"VTMD";
pub const FEATURE_MAGIC: &[u8; 4] = b"VTMF";
pub const FORMAT_VERSION: u32 = 1;
const MANIFEST_HEADER: &str = "# vtm-dataset v1";

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SKELETON_FILE: &str = "virtual_skeleton.txt";
pub const CAMERA_FILE: &str = "camera.txt";
pub const SEQUENCE_DIR: &str = "sequences";
pub const FEATURE_DIR: &str = "features";

/// Writes a `frames x joints x channels` record.
pub fn write_record<W: Write>(mut w: W, a: &JointArray) -> Result<()> {
    w.write_all(RECORD_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(a.frames() as u32)?;
    w.write_u32::<LittleEndian>(a.joints() as u32)?;
    w.write_u32::<LittleEndian>(a.channels() as u32)?;
    for v in a.data() {
        w.write_f32::<LittleEndian>(*v as f32)?;
    }
    Ok(())
}

pub fn read_record<R: Read>(mut r: R) -> Result<JointArray> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != RECORD_MAGIC {
        return Err(VtmError::Format("not a VTMD record".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(VtmError::Format(format!("unsupported record version {version}")));
    }
    let t = r.read_u32::<LittleEndian>()? as usize;
    let j = r.read_u32::<LittleEndian>()? as usize;
    let c = r.read_u32::<LittleEndian>()? as usize;
    let mut data = vec![0f32; t * j * c];
    r.read_f32_into::<LittleEndian>(&mut data)?;
    JointArray::from_vec(t, j, c, data.into_iter().map(f64::from).collect())
}

pub fn write_features<W: Write>(mut w: W, f: &FeatureArray) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(f.frames as u32)?;
    w.write_u32::<LittleEndian>(f.dim as u32)?;
    for v in &f.data {
        w.write_f32::<LittleEndian>(*v as f32)?;
    }
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<FeatureArray> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(VtmError::Format("not a VTMF feature file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(VtmError::Format(format!("unsupported feature version {version}")));
    }
    let frames = r.read_u32::<LittleEndian>()? as usize;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let mut data = vec![0f32; frames * dim];
    r.read_f32_into::<LittleEndian>(&mut data)?;
    Ok(FeatureArray {
        frames,
        dim,
        data: data.into_iter().map(f64::from).collect(),
    })
}

/// Interleaves motion and keypoint channels into one 16-channel record.
pub fn combine(motion: &JointArray, keypoints: &JointArray) -> Result<JointArray> {
    if motion.frames() != keypoints.frames() || motion.joints() != keypoints.joints() {
        return Err(VtmError::shape("motion and keypoints are not aligned"));
    }
    let c = MOTION_CHANNELS + KEYPOINT_CHANNELS;
    let mut out = JointArray::zeros(motion.frames(), motion.joints(), c);
    for t in 0..motion.frames() {
        for j in 0..motion.joints() {
            let row = out.get_mut(t, j);
            row[..MOTION_CHANNELS].copy_from_slice(motion.get(t, j));
            row[MOTION_CHANNELS..].copy_from_slice(keypoints.get(t, j));
        }
    }
    Ok(out)
}

pub fn separate(record: &JointArray) -> Result<(JointArray, JointArray)> {
    if record.channels() != MOTION_CHANNELS + KEYPOINT_CHANNELS {
        return Err(VtmError::Format(format!(
            "record has {} channels, expected {}",
            record.channels(),
            MOTION_CHANNELS + KEYPOINT_CHANNELS
        )));
    }
    let (t, j) = (record.frames(), record.joints());
    let mut motion = JointArray::zeros(t, j, MOTION_CHANNELS);
    let mut keypoints = JointArray::zeros(t, j, KEYPOINT_CHANNELS);
    for f in 0..t {
        for k in 0..j {
            let row = record.get(f, k);
            motion.get_mut(f, k).copy_from_slice(&row[..MOTION_CHANNELS]);
            keypoints.get_mut(f, k).copy_from_slice(&row[MOTION_CHANNELS..]);
        }
    }
    Ok((motion, keypoints))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub skeleton_id: String,
    pub camera_id: String,
    pub frames: usize,
    pub frame_time: f64,
    pub ratios: BoneRatios,
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(MANIFEST_HEADER);
    s.push_str("\n# id skeleton_id camera_id frames frame_time bone_ratios...\n");
    for e in entries {
        let _ = write!(
            s,
            "{} {} {} {} {}",
            e.id, e.skeleton_id, e.camera_id, e.frames, e.frame_time
        );
        for r in &e.ratios.0 {
            let _ = write!(s, " {r}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == MANIFEST_HEADER => {}
        _ => {
            return Err(VtmError::Format(format!(
                "manifest must start with '{MANIFEST_HEADER}'"
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |m: &str| VtmError::Syntax {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 6 {
            return Err(syntax(
                "expected id skeleton_id camera_id frames frame_time ratios...",
            ));
        }
        let ratios = f[5..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| syntax("bad bone ratio")))
            .collect::<Result<Vec<_>>>()?;
        out.push(ManifestEntry {
            id: f[0].to_string(),
            skeleton_id: f[1].to_string(),
            camera_id: f[2].to_string(),
            frames: f[3].parse().map_err(|_| syntax("bad frame count"))?,
            frame_time: f[4].parse().map_err(|_| syntax("bad frame time"))?,
            ratios: BoneRatios(ratios),
        });
    }
    Ok(out)
}

/// A prepared dataset loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub virtual_skeleton: Skeleton,
    pub camera: Camera,
    pub entries: Vec<ManifestEntry>,
    pub sequences: Vec<SequenceRecord>,
}

pub fn sequence_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(SEQUENCE_DIR).join(format!("{id}.vtmd"))
}

pub fn feature_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(FEATURE_DIR).join(format!("{id}.vtmf"))
}

impl Dataset {
    /// Writes every file of the layout, replacing what is there.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join(SEQUENCE_DIR))?;
        fs::write(dir.join(SKELETON_FILE), self.virtual_skeleton.to_table())?;
        fs::write(dir.join(CAMERA_FILE), self.camera.to_text())?;
        fs::write(dir.join(MANIFEST_FILE), write_manifest(&self.entries))?;
        for seq in &self.sequences {
            let record = combine(&seq.motion.array, &seq.keypoints.array)?;
            let mut buf = Vec::new();
            write_record(&mut buf, &record)?;
            fs::write(sequence_path(dir, &seq.id), buf)?;
            if let Some(f) = &seq.features {
                fs::create_dir_all(dir.join(FEATURE_DIR))?;
                let mut buf = Vec::new();
                write_features(&mut buf, f)?;
                fs::write(feature_path(dir, &seq.id), buf)?;
            }
        }
        Ok(())
    }

    /// Loads a dataset; feature files are picked up when present.
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |p: PathBuf| fs::read_to_string(&p).map_err(|e| VtmError::io_at(&p, e));
        let open = |p: PathBuf| fs::File::open(&p).map_err(|e| VtmError::io_at(&p, e));
        let virtual_skeleton = Skeleton::from_table(&read(dir.join(SKELETON_FILE))?)?;
        let camera = Camera::from_text(&read(dir.join(CAMERA_FILE))?)?;
        let entries = parse_manifest(&read(dir.join(MANIFEST_FILE))?)?;
        let mut sequences = Vec::with_capacity(entries.len());
        for e in &entries {
            if e.ratios.0.len() != virtual_skeleton.num_bones() {
                return Err(VtmError::Format(format!(
                    "manifest entry {} has {} ratios for {} bones",
                    e.id,
                    e.ratios.0.len(),
                    virtual_skeleton.num_bones()
                )));
            }
            let record = read_record(open(sequence_path(dir, &e.id))?)?;
            if record.frames() != e.frames || record.joints() != virtual_skeleton.num_joints() {
                return Err(VtmError::Format(format!(
                    "record {} disagrees with the manifest",
                    e.id
                )));
            }
            let (motion, keypoints) = separate(&record)?;
            let fpath = feature_path(dir, &e.id);
            let features = if fpath.exists() {
                let f = read_features(open(fpath.clone())?)?;
                if f.frames != e.frames {
                    return Err(VtmError::Format(format!(
                        "feature file for {} has {} frames, expected {}",
                        e.id, f.frames, e.frames
                    )));
                }
                Some(f)
            } else {
                None
            };
            sequences.push(SequenceRecord {
                id: e.id.clone(),
                motion: MotionSequence {
                    array: motion,
                    skeleton_id: e.skeleton_id.clone(),
                    camera_id: e.camera_id.clone(),
                },
                keypoints: KeypointSequence { array: keypoints },
                features,
                ratios: e.ratios.clone(),
            });
        }
        Ok(Dataset {
            virtual_skeleton,
            camera,
            entries,
            sequences,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip() {
        let data: Vec<f64> = (0..2 * 3 * 16).map(|i| i as f64 * 0.25).collect();
        let a = JointArray::from_vec(2, 3, 16, data).unwrap();
        let mut buf = Vec::new();
        write_record(&mut buf, &a).unwrap();
        assert_eq!(&buf[..4], b"VTMD");
        assert_eq!(buf.len(), 20 + 2 * 3 * 16 * 4);
        assert_eq!(read_record(buf.as_slice()).unwrap(), a);
        buf[0] = b'X';
        assert!(read_record(buf.as_slice()).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let e = ManifestEntry {
            id: "seq0".into(),
            skeleton_id: "sk0".into(),
            camera_id: "cam1".into(),
            frames: 40,
            frame_time: 1.0 / 30.0,
            ratios: BoneRatios(vec![0.9, 1.1, 1.0 / 3.0]),
        };
        let text = write_manifest(std::slice::from_ref(&e));
        assert_eq!(parse_manifest(&text).unwrap(), vec![e]);
        assert!(parse_manifest("nope").is_err());
    }

    #[test]
    fn combine_and_separate() {
        let m = JointArray::from_vec(1, 2, 12, (0..24).map(f64::from).collect()).unwrap();
        let k = JointArray::from_vec(1, 2, 4, (100..108).map(f64::from).collect()).unwrap();
        let c = combine(&m, &k).unwrap();
        assert_eq!(c.get(0, 1)[12], 104.0);
        assert_eq!(separate(&c).unwrap(), (m, k));
    }
}
