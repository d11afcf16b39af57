use super::normalize::{
    decode_motion, feature_tensor, keypoint_tensors, motion_tensors, DecodedMotion, Normalizer,
};
use super::params::ParamStore;
use super::tpmae::Tpmae;
use super::tpve::Tpve;
use crate::autodiff::Graph;
use crate::error::{Result, VtmError};
use crate::representation::{BodyPartition, FeatureArray, JointArray};
use crate::skeleton::{BoneRatios, Skeleton};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Motion autoencoder only.
    Tpmae,
    /// Autoencoder plus visual encoder.
    Vtm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Tpmae => "tpmae",
            ModelKind::Vtm => "vtm",
        }
    }
}

/// Networks together with everything needed to use them on new data.
#[derive(Clone, Debug)]
pub struct VtmModel {
    pub store: ParamStore,
    pub tpmae: Tpmae,
    pub tpve: Option<Tpve>,
    pub normalizer: Normalizer,
    pub virtual_skeleton: Skeleton,
    pub partition: BodyPartition,
}

/// Visual-path prediction in physical units.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub motion: DecodedMotion,
    pub ratios: BoneRatios,
}

impl VtmModel {
    pub fn new_tpmae(
        seed: u64,
        normalizer: Normalizer,
        virtual_skeleton: Skeleton,
        partition: BodyPartition,
    ) -> Result<Self> {
        if normalizer.joints() != partition.num_joints()
            || virtual_skeleton.num_joints() != partition.num_joints()
        {
            return Err(VtmError::shape(
                "normalizer, skeleton and partition disagree on the joint count",
            ));
        }
        let mut store = ParamStore::new(seed);
        let tpmae = Tpmae::new(&mut store, &partition);
        Ok(VtmModel {
            store,
            tpmae,
            tpve: None,
            normalizer,
            virtual_skeleton,
            partition,
        })
    }

    /// Adds a freshly initialized visual encoder.
    pub fn attach_tpve(&mut self, seed: u64, feature_dim: usize) -> Result<()> {
        if self.tpve.is_some() {
            return Err(VtmError::Checkpoint("model already has a visual encoder".into()));
        }
        if feature_dim == 0 {
            return Err(VtmError::Config("feature_dim must be positive".into()));
        }
        self.store.set_seed(seed);
        self.tpve = Some(Tpve::new(&mut self.store, &self.partition, feature_dim));
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        if self.tpve.is_some() {
            ModelKind::Vtm
        } else {
            ModelKind::Tpmae
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.tpve.as_ref().map_or(0, Tpve::feature_dim)
    }

    fn tpve(&self) -> Result<&Tpve> {
        self.tpve
            .as_ref()
            .ok_or_else(|| VtmError::Checkpoint("model has no visual encoder".into()))
    }

    /// Encodes and decodes camera-space motion on the virtual skeleton.
    pub fn autoencode(&self, motion: &JointArray) -> Result<DecodedMotion> {
        let x = motion_tensors(motion, &self.normalizer, &self.partition)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let xu = g.constant(x.upper);
        let xl = g.constant(x.lower);
        let (zu, zl) = self.tpmae.encode(&mut g, &p, xu, xl)?;
        let (nr, r) = self.tpmae.decode(&mut g, &p, zu, zl)?;
        decode_motion(g.value(r), g.value(nr), &self.normalizer)
    }

    /// Visual path: keypoints (pixels) and optional features to motion and
    /// bone ratios.
    pub fn predict(&self, keypoints: &JointArray, features: Option<&FeatureArray>) -> Result<Prediction> {
        let tpve = self.tpve()?;
        let k = keypoint_tensors(keypoints, &self.normalizer, &self.partition)?;
        let f = feature_tensor(features, tpve.feature_dim(), keypoints.frames())?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let ku = g.constant(k.upper);
        let kl = g.constant(k.lower);
        let fv = g.constant(f);
        let out = tpve.forward(&mut g, &p, ku, kl, fv)?;
        let (nr, r) = self.tpmae.decode(&mut g, &p, out.z_u, out.z_l)?;
        let motion = decode_motion(g.value(r), g.value(nr), &self.normalizer)?;
        let ratios = BoneRatios(g.value(out.ratios).data().to_vec());
        Ok(Prediction { motion, ratios })
    }
}
