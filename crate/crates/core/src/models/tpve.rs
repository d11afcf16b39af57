use super::layers::{Conv, ConvStack, Dense, Encoder, ResidualBlock, TemporalAttention};
use super::params::{Bound, ParamStore, LEAKY_SLOPE};
use super::{LOWER_LATENT, UPPER_LATENT};
use crate::autodiff::{Graph, Var};
use crate::error::{Result, VtmError};
use crate::representation::{BodyPartition, KEYPOINT_CHANNELS, LATENT_STRIDE};

const KEYPOINT_WIDTH: usize = 128;
const FEATURE_WIDTH_U: usize = 64;
const FEATURE_WIDTH_L: usize = 32;
const BONE_WIDTH: usize = 64;
pub const ATTENTION_WINDOW: usize = 8;

/// Outputs of the visual encoder.
#[derive(Clone, Copy, Debug)]
pub struct TpveOutput {
    pub z_u: Var,
    pub z_l: Var,
    /// `[B, J-1]`, strictly positive.
    pub ratios: Var,
}

/// Two-part visual encoder mapping keypoints and optional per-frame
/// features onto the motion latents, plus a bone-ratio head.
#[derive(Clone, Debug)]
pub struct Tpve {
    kp_u: ConvStack,
    kp_l: ConvStack,
    feat_u: Conv,
    feat_l: Conv,
    fuse_u: ResidualBlock,
    fuse_l: ResidualBlock,
    enc_u: Encoder,
    enc_l: Encoder,
    attn_u: TemporalAttention,
    attn_l: TemporalAttention,
    bone_enc: Encoder,
    bone_head: Dense,
    upper_channels: usize,
    lower_channels: usize,
    feature_dim: usize,
}

impl Tpve {
    pub fn new(store: &mut ParamStore, partition: &BodyPartition, feature_dim: usize) -> Self {
        let cu = partition.upper().len() * KEYPOINT_CHANNELS;
        let cl = partition.lower().len() * KEYPOINT_CHANNELS;
        let bones = partition.num_joints() - 1;
        let fu = FEATURE_WIDTH_U + KEYPOINT_WIDTH;
        let fl = FEATURE_WIDTH_L + KEYPOINT_WIDTH;
        // softplus(ln(e - 1)) = 1: ratios start at the virtual skeleton.
        let unit_ratio = (std::f64::consts::E - 1.0).ln();
        Tpve {
            kp_u: ConvStack::new(store, "tpve.kp_u", cu, KEYPOINT_WIDTH, 3),
            kp_l: ConvStack::new(store, "tpve.kp_l", cl, KEYPOINT_WIDTH, 3),
            feat_u: Conv::new(store, "tpve.feat_u", feature_dim, FEATURE_WIDTH_U, 1, 1, 0),
            feat_l: Conv::new(store, "tpve.feat_l", feature_dim, FEATURE_WIDTH_L, 1, 1, 0),
            fuse_u: ResidualBlock::new(store, "tpve.fuse_u", fu, UPPER_LATENT),
            fuse_l: ResidualBlock::new(store, "tpve.fuse_l", fl, LOWER_LATENT),
            enc_u: Encoder::new(store, "tpve.enc_u", UPPER_LATENT, UPPER_LATENT, UPPER_LATENT),
            enc_l: Encoder::new(store, "tpve.enc_l", LOWER_LATENT, LOWER_LATENT, LOWER_LATENT),
            attn_u: TemporalAttention::new(store, "tpve.attn_u", UPPER_LATENT, ATTENTION_WINDOW),
            attn_l: TemporalAttention::new(store, "tpve.attn_l", LOWER_LATENT, ATTENTION_WINDOW),
            bone_enc: Encoder::new(
                store,
                "tpve.bone_enc",
                UPPER_LATENT + LOWER_LATENT,
                BONE_WIDTH,
                BONE_WIDTH,
            ),
            bone_head: Dense::new(store, "tpve.bone_head", BONE_WIDTH, bones, unit_ratio),
            upper_channels: cu,
            lower_channels: cl,
            feature_dim,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// `k_u: [B, U*4, T]`, `k_l: [B, L*4, T]`, `features: [B, F, T]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, k_u: Var, k_l: Var, features: Var) -> Result<TpveOutput> {
        let (su, sl, sf) = (
            g.shape(k_u).to_vec(),
            g.shape(k_l).to_vec(),
            g.shape(features).to_vec(),
        );
        let ok = su.len() == 3
            && sl.len() == 3
            && sf.len() == 3
            && su[1] == self.upper_channels
            && sl[1] == self.lower_channels
            && sf[1] == self.feature_dim
            && su[0] == sl[0]
            && su[0] == sf[0]
            && su[2] == sl[2]
            && su[2] == sf[2];
        if !ok {
            return Err(VtmError::shape(format!(
                "tpve: keypoints {su:?} / {sl:?}, features {sf:?}"
            )));
        }
        if su[2] == 0 || su[2] % LATENT_STRIDE != 0 {
            return Err(VtmError::shape(format!(
                "tpve: length {} is not a positive multiple of {LATENT_STRIDE}",
                su[2]
            )));
        }
        let ku = self.kp_u.forward(g, p, k_u)?;
        let kl = self.kp_l.forward(g, p, k_l)?;
        let vu = self.feat_u.forward(g, p, features)?;
        let vl = self.feat_l.forward(g, p, features)?;
        let cat_u = g.concat(&[vu, ku], 1)?;
        let cat_l = g.concat(&[vl, kl], 1)?;
        let fused_u = self.fuse_u.forward(g, p, cat_u)?;
        let fused_l = self.fuse_l.forward(g, p, cat_l)?;

        let h_u = self.enc_u.forward(g, p, fused_u)?;
        let z_u = self.attn_u.forward(g, p, h_u)?;
        let h_l = self.enc_l.forward(g, p, fused_l)?;
        let z_l = self.attn_l.forward(g, p, h_l)?;

        let both = g.concat(&[fused_u, fused_l], 1)?;
        let h = self.bone_enc.forward(g, p, both)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let pooled = g.mean_last(h);
        let logits = self.bone_head.forward(g, p, pooled)?;
        let ratios = g.softplus(logits);
        Ok(TpveOutput { z_u, z_l, ratios })
    }
}
