//! Cameras, depth hypotheses, plane-induced warping, bilinear sampling and
//! the forward–backward reprojection chain.
//!
//! Extrinsics are stored world-to-camera; pairwise transforms are derived on
//! demand.

mod camera;
mod hypotheses;
mod reproject;
mod warp;

pub use camera::{look_at, CameraModel, PairHomography};
pub use hypotheses::{make_hypotheses, DepthHypotheses, Refinement};
pub use reproject::{reproject_round_trip, sample_depth, ReprojectionResult, DEPTH_EDGE_TOLERANCE};
pub use warp::{grid_sample, warp_grid, warp_pixel, WarpField, WarpedPixel};

pub(crate) use warp::sample_plane;
