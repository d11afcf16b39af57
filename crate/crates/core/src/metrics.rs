//! Evaluation metrics in millimeters.

use std::fmt;

use nalgebra::{Matrix3, SVD};

use crate::error::{Result, VtmError};
use crate::kinematics::Vec3;
use crate::skeleton::Skeleton;

const MM: f64 = 1000.0;

fn check_frames(pred: &[Vec<Vec3>], gt: &[Vec<Vec3>]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(VtmError::shape(format!(
            "{} predicted frames vs {} reference frames",
            pred.len(),
            gt.len()
        )));
    }
    for (t, (a, b)) in pred.iter().zip(gt).enumerate() {
        if a.len() != b.len() || a.is_empty() {
            return Err(VtmError::shape(format!(
                "frame {t}: {} vs {} joints",
                a.len(),
                b.len()
            )));
        }
    }
    Ok(())
}

/// Root-relative mean per-joint position error.
pub fn mpjpe(pred: &[Vec<Vec3>], gt: &[Vec<Vec3>]) -> Result<f64> {
    check_frames(pred, gt)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, b) in pred.iter().zip(gt) {
        for (p, q) in a.iter().zip(b) {
            sum += ((p - a[0]) - (q - b[0])).norm();
            n += 1;
        }
    }
    Ok(sum / n as f64 * MM)
}

/// Similarity transform `(s, R, t)` minimizing `sum |s R x_i + t - y_i|^2`.
pub fn similarity_procrustes(x: &[Vec3], y: &[Vec3]) -> Option<(f64, Matrix3<f64>, Vec3)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<Vec3>() / n;
    let my = y.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    let mut scatter_x = Matrix3::zeros();
    let mut scatter_y = Matrix3::zeros();
    let mut var_x = 0.0;
    for (p, q) in x.iter().zip(y) {
        let (a, b) = (p - mx, q - my);
        cov += b * a.transpose();
        scatter_x += a * a.transpose();
        scatter_y += b * b.transpose();
        var_x += a.norm_squared();
    }
    // Both point sets must span at least a plane.
    for s in [scatter_x, scatter_y] {
        let ev = s.symmetric_eigenvalues();
        let mut v = [ev[0], ev[1], ev[2]];
        v.sort_by(|a, b| b.total_cmp(a));
        if !(v[0] > 0.0) || v[1] <= 1e-12 * v[0] {
            return None;
        }
    }
    let svd = SVD::new(cov, true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let d = (u * vt).determinant().signum();
    let sgn = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let r = u * sgn * vt;
    let sv = svd.singular_values;
    let s = (sv[0] + sv[1] + d * sv[2]) / var_x;
    let t = my - s * r * mx;
    Some((s, r, t))
}

/// Mean per-joint error after per-frame similarity alignment.
pub fn pa_mpjpe(pred: &[Vec<Vec3>], gt: &[Vec<Vec3>]) -> Result<f64> {
    check_frames(pred, gt)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (frame, (a, b)) in pred.iter().zip(gt).enumerate() {
        let (s, r, t) = similarity_procrustes(a, b).ok_or(VtmError::DegenerateFrame { frame })?;
        for (p, q) in a.iter().zip(b) {
            sum += (s * r * p + t - q).norm();
            n += 1;
        }
    }
    Ok(sum / n as f64 * MM)
}

/// Mean root position error.
pub fn mrpe(pred_root: &[Vec3], gt_root: &[Vec3]) -> Result<f64> {
    if pred_root.len() != gt_root.len() || pred_root.is_empty() {
        return Err(VtmError::shape(format!(
            "{} predicted roots vs {} reference roots",
            pred_root.len(),
            gt_root.len()
        )));
    }
    let sum: f64 = pred_root.iter().zip(gt_root).map(|(a, b)| (a - b).norm()).sum();
    Ok(sum / pred_root.len() as f64 * MM)
}

/// Mean absolute bone length error.
pub fn mble(pred: &Skeleton, gt: &Skeleton) -> Result<f64> {
    if !pred.same_topology(gt) {
        return Err(VtmError::TopologyMismatch(
            "skeletons differ in joints or hierarchy".into(),
        ));
    }
    let (a, b) = (pred.bone_lengths(), gt.bone_lengths());
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64 * MM)
}

/// All four metrics, millimeters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub mrpe: f64,
    pub mble: f64,
}

impl MetricsReport {
    pub fn compute(
        pred_positions: &[Vec<Vec3>],
        gt_positions: &[Vec<Vec3>],
        pred_skeleton: &Skeleton,
        gt_skeleton: &Skeleton,
    ) -> Result<Self> {
        let roots = |p: &[Vec<Vec3>]| p.iter().map(|f| f[0]).collect::<Vec<_>>();
        Ok(MetricsReport {
            mpjpe: mpjpe(pred_positions, gt_positions)?,
            pa_mpjpe: pa_mpjpe(pred_positions, gt_positions)?,
            mrpe: mrpe(&roots(pred_positions), &roots(gt_positions))?,
            mble: mble(pred_skeleton, gt_skeleton)?,
        })
    }
}

impl fmt::Display for MetricsReport {
    /// `key: value` lines, one decimal. Values are never negative, so a
    /// rounded zero prints without a sign.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mpjpe_mm: {:.1}", self.mpjpe.abs())?;
        writeln!(f, "pa_mpjpe_mm: {:.1}", self.pa_mpjpe.abs())?;
        writeln!(f, "mrpe_mm: {:.1}", self.mrpe.abs())?;
        writeln!(f, "mble_mm: {:.1}", self.mble.abs())
    }
}
