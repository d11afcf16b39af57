//! Motion reconstruction from 2D keypoints via two-part latent motion priors.
//!
//! The crate covers motion ingestion ([`bvh`]), skeleton normalization
//! ([`skeleton`]), rotation and kinematics utilities ([`kinematics`]),
//! pinhole geometry ([`camera`]), tensor layouts and datasets
//! ([`representation`], [`dataset`]), a small reverse-mode differentiation
//! engine ([`autodiff`]), the networks ([`models`]), their objectives
//! ([`losses`]), evaluation ([`metrics`]) and training loops ([`training`]).

pub mod autodiff;
pub mod bvh;
pub mod camera;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod kinematics;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod representation;
pub mod skeleton;
pub mod training;

pub use error::{Result, VtmError};
