//! Training loops for the motion autoencoder and the joint model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamW, AdamWConfig, Graph, Tensor, Var};
use crate::error::{Result, VtmError};
use crate::losses::{
    bone_loss, manifold_alignment_loss, motion_rec_loss, smoothness_loss, vtm_total_loss, JointWeights,
    VtmLossTerms, VtmLossWeights,
};
use crate::models::{
    feature_tensor, keypoint_tensors, motion_tensors, Bound, KeypointTensors, MotionTensors, VtmModel,
};
use crate::representation::TrainingWindow;

/// Where per-frame visual features come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    /// All-zero features: keypoints only.
    Zeros,
    /// Features stored with each window.
    File,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub threads: usize,
    pub feature_mode: FeatureMode,
    pub joint_weights: JointWeights,
    pub loss_weights: VtmLossWeights,
}

impl TrainConfig {
    pub fn tpmae_defaults() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 100,
            lr: 1e-4,
            lr_decay: 0.5,
            decay_every: 100,
            weight_decay: AdamWConfig::default().weight_decay,
            seed: 0,
            threads: 1,
            feature_mode: FeatureMode::Zeros,
            joint_weights: JointWeights::default(),
            loss_weights: VtmLossWeights::default(),
        }
    }

    pub fn vtm_defaults() -> Self {
        TrainConfig {
            batch_size: 64,
            ..Self::tpmae_defaults()
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        learning_rate(self.lr, self.lr_decay, self.decay_every, epoch)
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 || self.threads == 0 {
            return Err(VtmError::Config(
                "epochs, batch_size, decay_every and threads must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(VtmError::Config(
                "lr and lr_decay must be positive, weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Step schedule: `base * decay^floor(epoch / every)`.
pub fn learning_rate(base: f64, decay: f64, every: usize, epoch: usize) -> f64 {
    base * decay.powi((epoch / every) as i32)
}

/// Mean loss terms over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub reconstruction: f64,
    pub smoothness: f64,
    /// Present for joint training only.
    pub visual: Option<VisualTerms>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisualTerms {
    pub alignment: f64,
    pub bone: f64,
    pub prediction: f64,
    pub prediction_smoothness: f64,
}

impl EpochLog {
    pub fn csv_header(joint: bool) -> &'static str {
        if joint {
            "epoch,lr,L_rec,L_s,L_ma,L_b,L_pred,L_s_v"
        } else {
            "epoch,lr,L_rec,L_s"
        }
    }

    pub fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{:e},{:.9e},{:.9e}",
            self.epoch, self.lr, self.reconstruction, self.smoothness
        );
        if let Some(v) = &self.visual {
            s.push_str(&format!(
                ",{:.9e},{:.9e},{:.9e},{:.9e}",
                v.alignment, v.bone, v.prediction, v.prediction_smoothness
            ));
        }
        s
    }
}

/// Network-ready tensors of one training window.
#[derive(Clone, Debug)]
pub struct WindowTensors {
    pub motion: MotionTensors,
    pub keypoints: Option<KeypointTensors>,
    pub features: Option<Tensor>,
    /// `[1, J-1]`.
    pub ratios: Tensor,
}

impl WindowTensors {
    pub fn new(model: &VtmModel, w: &TrainingWindow, mode: FeatureMode) -> Result<Self> {
        let motion = motion_tensors(&w.motion, &model.normalizer, &model.partition)?;
        let (keypoints, features) = match &model.tpve {
            None => (None, None),
            Some(tpve) => {
                let k = keypoint_tensors(&w.keypoints, &model.normalizer, &model.partition)?;
                let feats = match mode {
                    FeatureMode::Zeros => None,
                    FeatureMode::File => Some(w.features.as_ref().ok_or_else(|| {
                        VtmError::Config(format!(
                            "feature_mode = file but sequence {} has no features",
                            w.sequence_id
                        ))
                    })?),
                };
                let f = feature_tensor(feats, tpve.feature_dim(), w.motion.frames())?;
                (Some(k), Some(f))
            }
        };
        let bones = w.ratios.0.len();
        if bones + 1 != model.partition.num_joints() {
            return Err(VtmError::shape(format!("{bones} bone ratios for a window")));
        }
        Ok(WindowTensors {
            motion,
            keypoints,
            features,
            ratios: Tensor::new(vec![1, bones], w.ratios.0.clone())?,
        })
    }
}

/// Scalar nodes of the autoencoder objective.
#[derive(Clone, Copy, Debug)]
pub struct TpmaeLoss {
    pub total: Var,
    pub reconstruction: Var,
    pub smoothness: Var,
}

/// Builds the autoencoder loss for one window on `g`.
pub fn tpmae_loss_graph(
    g: &mut Graph,
    model: &VtmModel,
    p: &Bound,
    data: &WindowTensors,
    w: &JointWeights,
) -> Result<TpmaeLoss> {
    let xu = g.constant(data.motion.upper.clone());
    let xl = g.constant(data.motion.lower.clone());
    let xr = g.constant(data.motion.root.clone());
    let xnr = g.constant(data.motion.non_root.clone());
    let (zu, zl) = model.tpmae.encode(g, p, xu, xl)?;
    let (pnr, pr) = model.tpmae.decode(g, p, zu, zl)?;
    let reconstruction = motion_rec_loss(g, pr, xr, pnr, xnr, w)?;
    let smoothness = smoothness_loss(g, pr, xr, pnr, xnr, w)?;
    let total = g.add(reconstruction, smoothness)?;
    Ok(TpmaeLoss {
        total,
        reconstruction,
        smoothness,
    })
}

/// Builds the joint objective for one window on `g`; returns the total
/// and its terms.
pub fn vtm_loss_graph(
    g: &mut Graph,
    model: &VtmModel,
    p: &Bound,
    data: &WindowTensors,
    jw: &JointWeights,
    lw: &VtmLossWeights,
) -> Result<(Var, VtmLossTerms)> {
    let tpve = model
        .tpve
        .as_ref()
        .ok_or_else(|| VtmError::Checkpoint("joint training needs a visual encoder".into()))?;
    let (k, f) = match (&data.keypoints, &data.features) {
        (Some(k), Some(f)) => (k, f),
        _ => return Err(VtmError::shape("window tensors lack keypoints")),
    };
    let xu = g.constant(data.motion.upper.clone());
    let xl = g.constant(data.motion.lower.clone());
    let xr = g.constant(data.motion.root.clone());
    let xnr = g.constant(data.motion.non_root.clone());
    let ku = g.constant(k.upper.clone());
    let kl = g.constant(k.lower.clone());
    let fv = g.constant(f.clone());
    let b = g.constant(data.ratios.clone());

    let (zu, zl) = model.tpmae.encode(g, p, xu, xl)?;
    let (pnr, pr) = model.tpmae.decode(g, p, zu, zl)?;
    let reconstruction = motion_rec_loss(g, pr, xr, pnr, xnr, jw)?;
    let smoothness = smoothness_loss(g, pr, xr, pnr, xnr, jw)?;

    let v = tpve.forward(g, p, ku, kl, fv)?;
    let (vnr, vr) = model.tpmae.decode(g, p, v.z_u, v.z_l)?;
    let terms = VtmLossTerms {
        alignment: manifold_alignment_loss(g, v.z_u, zu, v.z_l, zl)?,
        bone: bone_loss(g, v.ratios, b)?,
        prediction: motion_rec_loss(g, vr, xr, vnr, xnr, jw)?,
        prediction_smoothness: smoothness_loss(g, vr, xr, vnr, xnr, jw)?,
        reconstruction,
        smoothness,
    };
    let total = vtm_total_loss(g, &terms, lw)?;
    Ok((total, terms))
}

/// Summed gradients and loss terms of a group of windows.
struct Accum {
    grads: Vec<Vec<f64>>,
    terms: [f64; 6],
}

impl Accum {
    fn new(sizes: &[usize]) -> Self {
        Accum {
            grads: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            terms: [0.0; 6],
        }
    }

    fn add(&mut self, other: &Accum) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.terms.iter_mut().zip(&other.terms) {
            *a += b;
        }
    }
}

fn window_gradients(
    model: &VtmModel,
    data: &WindowTensors,
    cfg: &TrainConfig,
    joint: bool,
    acc: &mut Accum,
) -> Result<()> {
    let mut g = Graph::new();
    let p = model.store.bind(&mut g, true);
    let (total, vars): (Var, Vec<Var>) = if joint {
        let (total, t) = vtm_loss_graph(&mut g, model, &p, data, &cfg.joint_weights, &cfg.loss_weights)?;
        (
            total,
            vec![
                t.reconstruction,
                t.smoothness,
                t.alignment,
                t.bone,
                t.prediction,
                t.prediction_smoothness,
            ],
        )
    } else {
        let l = tpmae_loss_graph(&mut g, model, &p, data, &cfg.joint_weights)?;
        (l.total, vec![l.reconstruction, l.smoothness])
    };
    for (slot, v) in acc.terms.iter_mut().zip(&vars) {
        *slot += g.value(*v).item();
    }
    g.backward(total)?;
    for (a, grad) in acc.grads.iter_mut().zip(p.gradients(&mut g)) {
        a.iter_mut().zip(&grad).for_each(|(x, y)| *x += y);
    }
    Ok(())
}

/// Gradient sums over `batch`, split into contiguous shards that are
/// reduced in shard order.
fn batch_gradients(
    model: &VtmModel,
    data: &[WindowTensors],
    batch: &[usize],
    cfg: &TrainConfig,
    joint: bool,
) -> Result<Accum> {
    let sizes = model.store.sizes();
    let shards = cfg.threads.min(batch.len()).max(1);
    if shards == 1 {
        let mut acc = Accum::new(&sizes);
        for &i in batch {
            window_gradients(model, &data[i], cfg, joint, &mut acc)?;
        }
        return Ok(acc);
    }
    let chunk = batch.len().div_ceil(shards);
    let results: Vec<Result<Accum>> = std::thread::scope(|s| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .map(|part| {
                let sizes = &sizes;
                s.spawn(move || {
                    let mut acc = Accum::new(sizes);
                    for &i in part {
                        window_gradients(model, &data[i], cfg, joint, &mut acc)?;
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training worker panicked"))
            .collect()
    });
    let mut total = Accum::new(&sizes);
    for r in results {
        total.add(&r?);
    }
    Ok(total)
}

fn train(
    model: &mut VtmModel,
    windows: &[TrainingWindow],
    cfg: &TrainConfig,
    joint: bool,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(VtmError::Config("no training windows".into()));
    }
    let data = windows
        .iter()
        .map(|w| WindowTensors::new(model, w, cfg.feature_mode))
        .collect::<Result<Vec<_>>>()?;
    let adam_cfg = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(adam_cfg, &model.store.sizes());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sums = [0.0; 6];
        for batch in order.chunks(cfg.batch_size) {
            let acc = batch_gradients(model, &data, batch, cfg, joint)?;
            let inv = 1.0 / batch.len() as f64;
            let grads: Vec<Vec<f64>> = acc
                .grads
                .into_iter()
                .map(|mut g| {
                    g.iter_mut().for_each(|v| *v *= inv);
                    g
                })
                .collect();
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut [f64]> = model
                .store
                .tensors_mut()
                .iter_mut()
                .map(Tensor::data_mut)
                .collect();
            opt.step(&mut params, &grad_refs, lr)?;
            for (s, t) in sums.iter_mut().zip(&acc.terms) {
                *s += t;
            }
        }
        let n = data.len() as f64;
        let log = EpochLog {
            epoch,
            lr,
            reconstruction: sums[0] / n,
            smoothness: sums[1] / n,
            visual: joint.then(|| VisualTerms {
                alignment: sums[2] / n,
                bone: sums[3] / n,
                prediction: sums[4] / n,
                prediction_smoothness: sums[5] / n,
            }),
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Trains the motion autoencoder in place.
pub fn train_tpmae(
    model: &mut VtmModel,
    windows: &[TrainingWindow],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    train(model, windows, cfg, false, &mut on_epoch)
}

/// Jointly trains the visual encoder and the autoencoder in place.
pub fn train_vtm(
    model: &mut VtmModel,
    windows: &[TrainingWindow],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if model.tpve.is_none() {
        return Err(VtmError::Checkpoint(
            "joint training needs a visual encoder".into(),
        ));
    }
    train(model, windows, cfg, true, &mut on_epoch)
}
