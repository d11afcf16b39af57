//! Network definitions, their state and inference.

mod checkpoint;
mod layers;
mod model;
mod normalize;
mod params;
mod reconstruct;
mod tpmae;
mod tpve;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use layers::{Conv, ConvStack, ConvTranspose, Decoder, Dense, Encoder, ResidualBlock, TemporalAttention};
pub use model::{ModelKind, Prediction, VtmModel};
pub use normalize::{
    decode_motion, feature_tensor, keypoint_tensors, motion_tensors, DecodedMotion, KeypointTensors,
    MotionTensors, Normalizer, STD_FLOOR,
};
pub use params::{bind_tensors, Bound, Init, ParamId, ParamStore, LEAKY_SLOPE};
pub use reconstruct::{decoded_rotations, reconstruct, unalign_depth, unalign_root, Reconstruction};
pub use tpmae::Tpmae;
pub use tpve::{Tpve, TpveOutput, ATTENTION_WINDOW};

/// Width of the upper-body latent.
pub const UPPER_LATENT: usize = 128;
/// Width of the lower-body latent.
pub const LOWER_LATENT: usize = 64;
pub(crate) const UPPER_HIDDEN: usize = 96;
pub(crate) const LOWER_HIDDEN: usize = 48;

/// Root-row channels predicted by the root decoder: the 6D rotation, the
/// depth and the depth velocity.
pub const ROOT_FIELDS: [usize; 8] = [0, 1, 2, 3, 4, 5, 8, 11];
