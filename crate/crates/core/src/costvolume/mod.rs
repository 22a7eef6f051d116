//! Plane-sweep feature volumes, variance-style cost fusion, guided
//! aggregation with the coarser stage, 3-D U-Net regularisation and
//! winner-take-all depth.

mod dfga;
mod unet;
mod volume;

pub use dfga::{dfga, DfgaParams};
pub use unet::{regularization_scores, regularize, Regularizer, UNetParams};
pub use volume::{
    build_feature_volume, fuse_variance, reference_volume, wta_depth, CostVolume, DepthMap, FeatureVolume,
    FusionMode, ProbabilityVolume, INVALID_COST,
};
