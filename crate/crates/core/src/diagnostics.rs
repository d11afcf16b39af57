//! Finite-difference checks of every differentiable op and of both training
//! objectives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{gradcheck, GradcheckConfig, GradcheckReport, Graph, Tensor, Var};
use crate::error::Result;
use crate::losses::{JointWeights, VtmLossWeights};
use crate::models::{bind_tensors, Normalizer, VtmModel};
use crate::representation::{
    BodyPartition, FeatureArray, JointArray, TrainingWindow, KEYPOINT_CHANNELS, MOTION_CHANNELS,
};
use crate::skeleton::{BoneRatios, Skeleton};
use crate::training::{tpmae_loss_graph, vtm_loss_graph, FeatureMode, WindowTensors};

#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub name: String,
    pub report: GradcheckReport,
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    pub gradcheck: GradcheckConfig,
    /// Entries probed per parameter tensor in the full objectives.
    pub entries_per_param: usize,
    /// Window length used for the full objectives.
    pub frames: usize,
    pub feature_dim: usize,
    /// Denominator floor for the objectives, whose values are large enough
    /// that rounding noise swamps relative errors of tiny gradients.
    pub objective_floor: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            gradcheck: GradcheckConfig::default(),
            entries_per_param: 3,
            frames: 16,
            feature_dim: 6,
            objective_floor: 1e-4,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

/// Values whose magnitude lies in `[lo, hi]`, either sign.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let mut t = uniform(rng, shape, lo, hi);
    for v in t.data_mut() {
        if rng.gen_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Reduces `out` to a scalar with fixed random weights so that every
/// output entry contributes a distinct amount.
fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(out).to_vec();
    let w = g.constant(uniform(&mut rng, &shape, -1.0, 1.0));
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn check_op<F>(
    name: &str,
    inputs: Vec<Tensor>,
    cfg: &GradcheckConfig,
    seed: u64,
    build: F,
) -> Result<GradientCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let report = gradcheck(&inputs, cfg, |xs, with_grad| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs
            .iter()
            .map(|t| {
                if with_grad {
                    g.variable(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        let out = build(&mut g, &vars)?;
        let loss = if g.shape(out).is_empty() {
            out
        } else {
            weighted_sum(&mut g, out, seed)?
        };
        let value = g.value(loss).item();
        if !with_grad {
            return Ok((value, None));
        }
        g.backward(loss)?;
        let grads = vars
            .iter()
            .map(|&v| g.take_grad(v).unwrap_or_else(|| vec![0.0; g.value(v).numel()]))
            .collect();
        Ok((value, Some(grads)))
    })?;
    Ok(GradientCheck {
        name: name.to_string(),
        report,
    })
}

/// Checks each graph op in isolation on small random inputs.
pub fn op_checks(seed: u64, cfg: &GradcheckConfig) -> Result<Vec<GradientCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let s = seed ^ 0x9e37_79b9;
    let mut out = Vec::new();

    out.push(check_op(
        "conv1d",
        vec![
            uniform(r, &[2, 3, 9], -1.0, 1.0),
            uniform(r, &[4, 3, 4], -1.0, 1.0),
            uniform(r, &[4], -1.0, 1.0),
        ],
        cfg,
        s,
        |g, v| g.conv1d(v[0], v[1], Some(v[2]), 2, 1),
    )?);
    out.push(check_op(
        "conv1d_same",
        vec![
            uniform(r, &[1, 2, 7], -1.0, 1.0),
            uniform(r, &[3, 2, 3], -1.0, 1.0),
        ],
        cfg,
        s,
        |g, v| g.conv1d(v[0], v[1], None, 1, 1),
    )?);
    out.push(check_op(
        "conv_transpose1d",
        vec![
            uniform(r, &[2, 3, 5], -1.0, 1.0),
            uniform(r, &[3, 4, 4], -1.0, 1.0),
            uniform(r, &[4], -1.0, 1.0),
        ],
        cfg,
        s,
        |g, v| g.conv_transpose1d(v[0], v[1], Some(v[2]), 2, 1),
    )?);
    out.push(check_op(
        "linear",
        vec![
            uniform(r, &[3, 5], -1.0, 1.0),
            uniform(r, &[4, 5], -1.0, 1.0),
            uniform(r, &[4], -1.0, 1.0),
        ],
        cfg,
        s,
        |g, v| g.linear(v[0], v[1], Some(v[2])),
    )?);
    out.push(check_op(
        "leaky_relu",
        vec![away_from_zero(r, &[2, 3, 4], 0.05, 2.0)],
        cfg,
        s,
        |g, v| Ok(g.leaky_relu(v[0], 0.2)),
    )?);
    let mut sp = uniform(r, &[2, 3, 4], -4.0, 4.0);
    sp.data_mut()[0] = 31.0;
    out.push(check_op("softplus", vec![sp], cfg, s, |g, v| {
        Ok(g.softplus(v[0]))
    })?);

    let pair = |r: &mut ChaCha8Rng| {
        vec![
            uniform(r, &[2, 3, 4], -1.0, 1.0),
            uniform(r, &[2, 3, 4], -1.0, 1.0),
        ]
    };
    out.push(check_op("add", pair(r), cfg, s, |g, v| g.add(v[0], v[1]))?);
    out.push(check_op("sub", pair(r), cfg, s, |g, v| g.sub(v[0], v[1]))?);
    out.push(check_op("mul", pair(r), cfg, s, |g, v| g.mul(v[0], v[1]))?);
    out.push(check_op(
        "scale",
        vec![uniform(r, &[2, 3, 4], -1.0, 1.0)],
        cfg,
        s,
        |g, v| Ok(g.scale(v[0], -1.7)),
    )?);
    out.push(check_op(
        "scale_channels",
        vec![uniform(r, &[2, 3, 4], -1.0, 1.0)],
        cfg,
        s,
        |g, v| g.scale_channels(v[0], &[0.5, 2.0, -1.0]),
    )?);
    out.push(check_op(
        "concat",
        vec![
            uniform(r, &[2, 2, 3], -1.0, 1.0),
            uniform(r, &[2, 4, 3], -1.0, 1.0),
        ],
        cfg,
        s,
        |g, v| g.concat(&[v[0], v[1]], 1),
    )?);
    out.push(check_op(
        "slice",
        vec![uniform(r, &[2, 3, 5], -1.0, 1.0)],
        cfg,
        s,
        |g, v| g.slice(v[0], 2, 1, 3),
    )?);
    out.push(check_op(
        "time_diff",
        vec![uniform(r, &[2, 3, 5], -1.0, 1.0)],
        cfg,
        s,
        |g, v| Ok(g.time_diff(v[0])),
    )?);
    out.push(check_op(
        "mean_last",
        vec![uniform(r, &[2, 3, 5], -1.0, 1.0)],
        cfg,
        s,
        |g, v| Ok(g.mean_last(v[0])),
    )?);
    out.push(check_op(
        "sum",
        vec![uniform(r, &[2, 3, 5], -1.0, 1.0)],
        cfg,
        s,
        |g, v| Ok(g.sum(v[0])),
    )?);

    let target = uniform(r, &[2, 3, 5], -1.0, 1.0);
    let mut gap = away_from_zero(r, &[2, 3, 5], 0.05, 0.8);
    for (i, d) in gap.data_mut().iter_mut().enumerate() {
        if i % 3 == 0 {
            *d *= 2.5;
        }
    }
    let pred_data = target.data().iter().zip(gap.data()).map(|(t, d)| t + d).collect();
    let pred = Tensor::new(vec![2, 3, 5], pred_data)?;
    out.push(check_op("smooth_l1", vec![pred, target], cfg, s, |g, v| {
        g.smooth_l1(v[0], v[1], 1.0)
    })?);

    out.push(check_op(
        "bmm",
        vec![
            uniform(r, &[2, 3, 4], -1.0, 1.0),
            uniform(r, &[2, 4, 5], -1.0, 1.0),
        ],
        cfg,
        s,
        |g, v| g.bmm(v[0], v[1]),
    )?);
    out.push(check_op(
        "transpose_last",
        vec![uniform(r, &[2, 3, 4], -1.0, 1.0)],
        cfg,
        s,
        |g, v| g.transpose_last(v[0]),
    )?);
    out.push(check_op(
        "masked_softmax",
        vec![uniform(r, &[2, 5, 5], -2.0, 2.0)],
        cfg,
        s,
        |g, v| g.masked_softmax(v[0], 3),
    )?);
    out.push(check_op(
        "reshape",
        vec![uniform(r, &[2, 3, 4], -1.0, 1.0)],
        cfg,
        s,
        |g, v| g.reshape(v[0], &[6, 4]),
    )?);
    Ok(out)
}

fn random_window(rng: &mut ChaCha8Rng, frames: usize, feature_dim: usize) -> TrainingWindow {
    let j = Skeleton::template().num_joints();
    let motion = uniform(rng, &[frames, j, MOTION_CHANNELS], -1.0, 1.0).into_data();
    let keypoints = uniform(rng, &[frames, j, KEYPOINT_CHANNELS], -1.0, 1.0).into_data();
    let features = uniform(rng, &[frames, feature_dim], -1.0, 1.0).into_data();
    TrainingWindow {
        sequence_id: "check".into(),
        offset: 0,
        motion: JointArray::from_vec(frames, j, MOTION_CHANNELS, motion).expect("sized"),
        keypoints: JointArray::from_vec(frames, j, KEYPOINT_CHANNELS, keypoints).expect("sized"),
        features: Some(FeatureArray {
            frames,
            dim: feature_dim,
            data: features,
        }),
        ratios: BoneRatios((0..j - 1).map(|_| rng.gen_range(0.8..1.2)).collect()),
    }
}

fn identity_normalizer(joints: usize) -> Normalizer {
    Normalizer {
        motion_mean: vec![0.0; joints * MOTION_CHANNELS],
        motion_std: vec![1.0; joints * MOTION_CHANNELS],
        keypoint_center: [0.0, 0.0],
        keypoint_scale: [1.0, 1.0],
    }
}

fn check_objective(
    name: &str,
    model: &VtmModel,
    data: &WindowTensors,
    cfg: &SuiteConfig,
) -> Result<GradientCheck> {
    let jw = JointWeights::default();
    let lw = VtmLossWeights::default();
    let mut report = GradcheckReport::default();
    // Probe tensor by tensor so that small tensors are not starved.
    for (i, tensor) in model.store.tensors().iter().enumerate() {
        let gc = GradcheckConfig {
            max_entries: Some(cfg.entries_per_param),
            floor: cfg.objective_floor,
            ..cfg.gradcheck
        };
        let r = gradcheck(std::slice::from_ref(tensor), &gc, |x, with_grad| {
            let mut tensors = model.store.tensors().to_vec();
            tensors[i] = x[0].clone();
            let mut g = Graph::new();
            let p = bind_tensors(&mut g, &tensors, with_grad);
            let total = if model.tpve.is_some() {
                vtm_loss_graph(&mut g, model, &p, data, &jw, &lw)?.0
            } else {
                tpmae_loss_graph(&mut g, model, &p, data, &jw)?.total
            };
            let value = g.value(total).item();
            if !with_grad {
                return Ok((value, None));
            }
            g.backward(total)?;
            let grad = p.gradients(&mut g).swap_remove(i);
            Ok((value, Some(vec![grad])))
        })?;
        let mut r = r;
        r.worst = r.worst.map(|(_, e)| (i, e));
        report.merge(&r);
    }
    Ok(GradientCheck {
        name: name.to_string(),
        report,
    })
}

/// Checks the autoencoder objective and the joint objective with respect to
/// sampled entries of every parameter.
pub fn objective_checks(cfg: &SuiteConfig) -> Result<Vec<GradientCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let window = random_window(&mut rng, cfg.frames, cfg.feature_dim);
    let skel = Skeleton::template();
    let partition = BodyPartition::canonical();
    let mut model = VtmModel::new_tpmae(cfg.seed, identity_normalizer(skel.num_joints()), skel, partition)?;
    let data = WindowTensors::new(&model, &window, FeatureMode::Zeros)?;
    let tpmae = check_objective("tpmae_objective", &model, &data, cfg)?;
    model.attach_tpve(cfg.seed.wrapping_add(1), cfg.feature_dim)?;
    let data = WindowTensors::new(&model, &window, FeatureMode::File)?;
    let vtm = check_objective("vtm_objective", &model, &data, cfg)?;
    Ok(vec![tpmae, vtm])
}

/// Every op check followed by both objectives.
pub fn gradient_suite(cfg: &SuiteConfig) -> Result<Vec<GradientCheck>> {
    let mut all = op_checks(cfg.seed, &cfg.gradcheck)?;
    all.extend(objective_checks(cfg)?);
    Ok(all)
}
