//! Binary checkpoint format.
//!
//! Layout (little-endian): magic `VTMC`, `u32` version, `u8` kind, `u64`
//! seed, `u32` feature dimension, virtual skeleton table (string),
//! partition (two `u32` lists), normalization statistics, then named
//! parameter blocks with their shapes. Strings and lists carry a `u32`
//! length prefix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::model::{ModelKind, VtmModel};
use super::normalize::Normalizer;
use super::params::ParamStore;
use super::tpmae::Tpmae;
use super::tpve::Tpve;
use crate::autodiff::Tensor;
use crate::error::{Result, VtmError};
use crate::representation::BodyPartition;
use crate::skeleton::Skeleton;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VTMC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Refuse absurd lengths before allocating.
const MAX_LEN: u32 = 1 << 28;

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    w.write_u32::<LE>(v.len() as u32)?;
    for x in v {
        w.write_f64::<LE>(*x)?;
    }
    Ok(())
}

fn put_indices<W: Write>(w: &mut W, v: &[usize]) -> Result<()> {
    w.write_u32::<LE>(v.len() as u32)?;
    for x in v {
        w.write_u32::<LE>(*x as u32)?;
    }
    Ok(())
}

fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u32::<LE>()?;
    if n > MAX_LEN {
        return Err(VtmError::Checkpoint(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let n = get_len(r)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| VtmError::Checkpoint("string is not UTF-8".into()))
}

fn get_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v)?;
    Ok(v)
}

fn get_indices<R: Read>(r: &mut R) -> Result<Vec<usize>> {
    let n = get_len(r)?;
    (0..n).map(|_| Ok(r.read_u32::<LE>()? as usize)).collect()
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &VtmModel) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LE>(CHECKPOINT_VERSION)?;
    w.write_u8(match model.kind() {
        ModelKind::Tpmae => 0,
        ModelKind::Vtm => 1,
    })?;
    w.write_u64::<LE>(model.store.seed())?;
    w.write_u32::<LE>(model.feature_dim() as u32)?;
    put_str(&mut w, &model.virtual_skeleton.to_table())?;
    put_indices(&mut w, model.partition.upper())?;
    put_indices(&mut w, model.partition.lower())?;
    let n = &model.normalizer;
    put_f64s(&mut w, &n.motion_mean)?;
    put_f64s(&mut w, &n.motion_std)?;
    put_f64s(&mut w, &[n.keypoint_center[0], n.keypoint_center[1]])?;
    put_f64s(&mut w, &[n.keypoint_scale[0], n.keypoint_scale[1]])?;
    let store = &model.store;
    w.write_u32::<LE>(store.len() as u32)?;
    for (name, t) in store.names().iter().zip(store.tensors()) {
        put_str(&mut w, name)?;
        put_indices(&mut w, t.shape())?;
        put_f64s(&mut w, t.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<VtmModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(VtmError::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != CHECKPOINT_VERSION {
        return Err(VtmError::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let kind = match r.read_u8()? {
        0 => ModelKind::Tpmae,
        1 => ModelKind::Vtm,
        k => return Err(VtmError::Checkpoint(format!("unknown model kind {k}"))),
    };
    let seed = r.read_u64::<LE>()?;
    let feature_dim = r.read_u32::<LE>()? as usize;
    let skeleton = Skeleton::from_table(&get_str(&mut r)?)?;
    let upper = get_indices(&mut r)?;
    let lower = get_indices(&mut r)?;
    let partition = BodyPartition::new(upper, lower, skeleton.num_joints())?;
    let motion_mean = get_f64s(&mut r)?;
    let motion_std = get_f64s(&mut r)?;
    let center = get_f64s(&mut r)?;
    let scale = get_f64s(&mut r)?;
    if center.len() != 2 || scale.len() != 2 || motion_mean.len() != motion_std.len() {
        return Err(VtmError::Checkpoint("malformed normalization block".into()));
    }
    let normalizer = Normalizer {
        motion_mean,
        motion_std,
        keypoint_center: [center[0], center[1]],
        keypoint_scale: [scale[0], scale[1]],
    };
    if normalizer.joints() != skeleton.num_joints() {
        return Err(VtmError::Checkpoint(
            "normalization does not match the skeleton".into(),
        ));
    }

    let mut store = ParamStore::new(seed);
    let tpmae = Tpmae::new(&mut store, &partition);
    let tpve = match kind {
        ModelKind::Tpmae => None,
        ModelKind::Vtm => Some(Tpve::new(&mut store, &partition, feature_dim)),
    };
    let count = r.read_u32::<LE>()? as usize;
    if count != store.len() {
        return Err(VtmError::Checkpoint(format!(
            "{count} parameter blocks, architecture has {}",
            store.len()
        )));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let name = get_str(&mut r)?;
        let shape = get_indices(&mut r)?;
        let data = get_f64s(&mut r)?;
        let id = store
            .find(&name)
            .ok_or_else(|| VtmError::Checkpoint(format!("unknown parameter {name}")))?;
        if std::mem::replace(&mut seen[id.index()], true) {
            return Err(VtmError::Checkpoint(format!("parameter {name} appears twice")));
        }
        let t = Tensor::new(shape, data).map_err(|e| VtmError::Checkpoint(format!("{name}: {e}")))?;
        store.assign(&name, t)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(VtmError::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok(VtmModel {
        store,
        tpmae,
        tpve,
        normalizer,
        virtual_skeleton: skeleton,
        partition,
    })
}

pub fn save_checkpoint(path: &Path, model: &VtmModel) -> Result<()> {
    let f = File::create(path).map_err(|e| VtmError::io_at(path, e))?;
    write_checkpoint(BufWriter::new(f), model)
}

pub fn load_checkpoint(path: &Path) -> Result<VtmModel> {
    let f = File::open(path).map_err(|e| VtmError::io_at(path, e))?;
    read_checkpoint(BufReader::new(f))
}

/// Checkpoint bytes in memory.
pub fn checkpoint_bytes(model: &VtmModel) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    Ok(buf)
}
