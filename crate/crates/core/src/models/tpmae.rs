use super::layers::{Conv, ConvTranspose, Decoder, Encoder};
use super::params::{Bound, ParamStore, LEAKY_SLOPE};
use super::{LOWER_HIDDEN, LOWER_LATENT, ROOT_FIELDS, UPPER_HIDDEN, UPPER_LATENT};
use crate::autodiff::{Graph, Var};
use crate::error::{Result, VtmError};
use crate::representation::{BodyPartition, LATENT_STRIDE, MOTION_CHANNELS};

/// Two-part motion autoencoder.
#[derive(Clone, Debug)]
pub struct Tpmae {
    enc_u: Encoder,
    enc_l: Encoder,
    dec_u: Decoder,
    dec_l: Decoder,
    aggregate: Conv,
    root_up: ConvTranspose,
    root_out: ConvTranspose,
    upper_channels: usize,
    lower_channels: usize,
}

impl Tpmae {
    pub fn new(store: &mut ParamStore, partition: &BodyPartition) -> Self {
        let cu = partition.upper().len() * MOTION_CHANNELS;
        let cl = partition.lower().len() * MOTION_CHANNELS;
        let non_root = (partition.num_joints() - 1) * MOTION_CHANNELS;
        let latent = UPPER_LATENT + LOWER_LATENT;
        Tpmae {
            enc_u: Encoder::new(store, "tpmae.enc_u", cu, UPPER_HIDDEN, UPPER_LATENT),
            enc_l: Encoder::new(store, "tpmae.enc_l", cl, LOWER_HIDDEN, LOWER_LATENT),
            dec_u: Decoder::new(store, "tpmae.dec_u", UPPER_LATENT, UPPER_HIDDEN, cu),
            dec_l: Decoder::new(store, "tpmae.dec_l", LOWER_LATENT, LOWER_HIDDEN, cl),
            aggregate: Conv::new(store, "tpmae.aggregate", cu + cl, non_root, 3, 1, 1),
            root_up: ConvTranspose::new(store, "tpmae.root.0", latent, 64, 4, 2, 1),
            root_out: ConvTranspose::new(store, "tpmae.root.1", 64, ROOT_FIELDS.len(), 4, 2, 1),
            upper_channels: cu,
            lower_channels: cl,
        }
    }

    /// `x_u: [B, U*12, T]`, `x_l: [B, L*12, T]` to latents `[B, 128, T/4]`
    /// and `[B, 64, T/4]`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, x_u: Var, x_l: Var) -> Result<(Var, Var)> {
        let (su, sl) = (g.shape(x_u).to_vec(), g.shape(x_l).to_vec());
        if su.len() != 3
            || sl.len() != 3
            || su[1] != self.upper_channels
            || sl[1] != self.lower_channels
            || su[2] != sl[2]
            || su[0] != sl[0]
        {
            return Err(VtmError::shape(format!("tpmae encode: inputs {su:?} and {sl:?}")));
        }
        if su[2] == 0 || su[2] % LATENT_STRIDE != 0 {
            return Err(VtmError::shape(format!(
                "tpmae encode: length {} is not a positive multiple of {LATENT_STRIDE}",
                su[2]
            )));
        }
        let z_u = self.enc_u.forward(g, p, x_u)?;
        let z_l = self.enc_l.forward(g, p, x_l)?;
        Ok((z_u, z_l))
    }

    /// Latents to `(non_root [B, (J-1)*12, T], root [B, 8, T])`.
    pub fn decode(&self, g: &mut Graph, p: &Bound, z_u: Var, z_l: Var) -> Result<(Var, Var)> {
        let (su, sl) = (g.shape(z_u).to_vec(), g.shape(z_l).to_vec());
        if su.len() != 3
            || sl.len() != 3
            || su[1] != UPPER_LATENT
            || sl[1] != LOWER_LATENT
            || su[2] != sl[2]
            || su[0] != sl[0]
        {
            return Err(VtmError::shape(format!(
                "tpmae decode: latents {su:?} and {sl:?}"
            )));
        }
        let d_u = self.dec_u.forward(g, p, z_u)?;
        let d_l = self.dec_l.forward(g, p, z_l)?;
        let joined = g.concat(&[d_u, d_l], 1)?;
        let non_root = self.aggregate.forward(g, p, joined)?;
        let z = g.concat(&[z_u, z_l], 1)?;
        let h = self.root_up.forward(g, p, z)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let root = self.root_out.forward(g, p, h)?;
        Ok((non_root, root))
    }
}
