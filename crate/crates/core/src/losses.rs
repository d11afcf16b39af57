//! Training objectives, all built from mean-reduced smooth-L1 terms.

use crate::autodiff::{Graph, Var};
use crate::error::{Result, VtmError};
use crate::representation::MOTION_CHANNELS;
use crate::skeleton::layout;

/// Transition point between the quadratic and linear smooth-L1 branches,
/// in standardized units.
pub const SMOOTH_L1_BETA: f64 = 1.0;

/// Relative importance of joints in the reconstruction terms.
#[derive(Clone, Debug, PartialEq)]
pub struct JointWeights {
    pub root: f64,
    pub end_effector: f64,
    pub other: f64,
    pub end_effectors: Vec<usize>,
}

impl Default for JointWeights {
    fn default() -> Self {
        JointWeights {
            root: 2.0,
            end_effector: 1.5,
            other: 1.0,
            end_effectors: layout::END_EFFECTORS.to_vec(),
        }
    }
}

impl JointWeights {
    pub fn joint(&self, j: usize) -> f64 {
        if j == 0 {
            self.root
        } else if self.end_effectors.contains(&j) {
            self.end_effector
        } else {
            self.other
        }
    }

    /// One weight per channel of the non-root tensor `(J-1) * 12`.
    pub fn non_root_channels(&self, joints: usize) -> Vec<f64> {
        (1..joints)
            .flat_map(|j| std::iter::repeat_n(self.joint(j), MOTION_CHANNELS))
            .collect()
    }
}

fn check_pair(g: &Graph, a: Var, b: Var, what: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(VtmError::shape(format!(
            "{what}: {:?} vs {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok(())
}

/// Weighted reconstruction loss on `[B, C, T]` root and non-root tensors.
pub fn motion_rec_loss(
    g: &mut Graph,
    pred_root: Var,
    root: Var,
    pred_non_root: Var,
    non_root: Var,
    w: &JointWeights,
) -> Result<Var> {
    check_pair(g, pred_root, root, "root reconstruction")?;
    check_pair(g, pred_non_root, non_root, "non-root reconstruction")?;
    let joints = g.shape(non_root)[1] / MOTION_CHANNELS + 1;
    let wr_pred = g.scale(pred_root, w.root);
    let wr = g.scale(root, w.root);
    let l_root = g.smooth_l1(wr_pred, wr, SMOOTH_L1_BETA)?;
    let wnr = w.non_root_channels(joints);
    let wn_pred = g.scale_channels(pred_non_root, &wnr)?;
    let wn = g.scale_channels(non_root, &wnr)?;
    let l_nr = g.smooth_l1(wn_pred, wn, SMOOTH_L1_BETA)?;
    g.add(l_root, l_nr)
}

/// First differences along time, frames `1..T`.
fn velocity(g: &mut Graph, x: Var) -> Result<Var> {
    let t = g.shape(x)[2];
    let d = g.time_diff(x);
    g.slice(d, 2, 1, t - 1)
}

/// Second differences along time, frames `2..T`.
fn acceleration(g: &mut Graph, x: Var) -> Result<Var> {
    let t = g.shape(x)[2];
    let d = g.time_diff(x);
    let dd = g.time_diff(d);
    g.slice(dd, 2, 2, t - 2)
}

/// Velocity and acceleration agreement; root terms carry the root weight,
/// non-root terms are unweighted.
///
/// Frames whose velocity or acceleration is undefined by convention are
/// left out of the means.
pub fn smoothness_loss(
    g: &mut Graph,
    pred_root: Var,
    root: Var,
    pred_non_root: Var,
    non_root: Var,
    w: &JointWeights,
) -> Result<Var> {
    check_pair(g, pred_root, root, "root smoothness")?;
    check_pair(g, pred_non_root, non_root, "non-root smoothness")?;
    let t = g.shape(root)[2];
    if t < 3 || g.shape(root).len() != 3 || g.shape(non_root)[2] != t {
        return Err(VtmError::shape(format!(
            "smoothness loss needs [B, C, T] inputs with T >= 3, got {:?}",
            g.shape(root)
        )));
    }
    let mut terms = Vec::with_capacity(4);
    for diff in [velocity, acceleration] {
        let pr = diff(g, pred_root)?;
        let r = diff(g, root)?;
        let pr = g.scale(pr, w.root);
        let r = g.scale(r, w.root);
        terms.push(g.smooth_l1(pr, r, SMOOTH_L1_BETA)?);
        let pn = diff(g, pred_non_root)?;
        let n = diff(g, non_root)?;
        terms.push(g.smooth_l1(pn, n, SMOOTH_L1_BETA)?);
    }
    sum_terms(g, &terms)
}

pub fn manifold_alignment_loss(g: &mut Graph, pred_u: Var, z_u: Var, pred_l: Var, z_l: Var) -> Result<Var> {
    let a = g.smooth_l1(pred_u, z_u, SMOOTH_L1_BETA)?;
    let b = g.smooth_l1(pred_l, z_l, SMOOTH_L1_BETA)?;
    g.add(a, b)
}

pub fn bone_loss(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    g.smooth_l1(pred, target, SMOOTH_L1_BETA)
}

fn sum_terms(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Coefficients of the joint objective; all one by default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VtmLossWeights {
    pub alignment: f64,
    pub bone: f64,
    pub prediction: f64,
    pub prediction_smoothness: f64,
    pub motion: f64,
}

impl Default for VtmLossWeights {
    fn default() -> Self {
        VtmLossWeights {
            alignment: 1.0,
            bone: 1.0,
            prediction: 1.0,
            prediction_smoothness: 1.0,
            motion: 1.0,
        }
    }
}

/// Scalar nodes of the individual objective terms.
#[derive(Clone, Copy, Debug)]
pub struct VtmLossTerms {
    pub alignment: Var,
    pub bone: Var,
    pub prediction: Var,
    pub prediction_smoothness: Var,
    pub reconstruction: Var,
    pub smoothness: Var,
}

/// `a L_ma + b L_b + p L_pred + s L_s^V + m (L_rec + L_s)`.
pub fn vtm_total_loss(g: &mut Graph, t: &VtmLossTerms, w: &VtmLossWeights) -> Result<Var> {
    let motion = g.add(t.reconstruction, t.smoothness)?;
    let parts = [
        g.scale(t.alignment, w.alignment),
        g.scale(t.bone, w.bone),
        g.scale(t.prediction, w.prediction),
        g.scale(t.prediction_smoothness, w.prediction_smoothness),
        g.scale(motion, w.motion),
    ];
    sum_terms(g, &parts)
}
