use nalgebra::Vector2;

use super::camera::CameraModel;
use super::warp::{in_bounds, warp_pixel};
use crate::numerics::Tensor;

/// Maximum relative spread of the four depth samples around a sub-pixel
/// lookup before the lookup is treated as straddling an occlusion edge.
pub const DEPTH_EDGE_TOLERANCE: f64 = 0.01;

/// Forward–backward chain `p → p'_i → p''` for every reference pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprojectionResult {
    /// `2×H×W` source-image location `p'_i`.
    pub p_src: Tensor,
    /// `3×H×W` world point recovered at `p'_i` from the source depth.
    pub src_points: Tensor,
    /// `2×H×W` location `p''` back in the reference image.
    pub p_roundtrip: Tensor,
    pub valid: Vec<bool>,
}

impl ReprojectionResult {
    /// `‖p'' − p‖` at each pixel (`NaN`-free; 0 where invalid).
    pub fn residuals(&self) -> Vec<f64> {
        let (h, w) = (self.p_roundtrip.shape()[1], self.p_roundtrip.shape()[2]);
        let n = h * w;
        let d = self.p_roundtrip.data();
        (0..n)
            .map(|i| {
                if !self.valid[i] {
                    return 0.0;
                }
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                ((d[i] - x).powi(2) + (d[n + i] - y).powi(2)).sqrt()
            })
            .collect()
    }
}

/// Bilinear depth lookup that refuses to blend across discontinuities or
/// missing (non-positive) samples.
///
/// Blending happens in inverse depth, which is affine in pixel coordinates on
/// any plane, so planar surfaces are reproduced exactly.
pub fn sample_depth(depth: &Tensor, x: f64, y: f64) -> Option<f64> {
    let dims = depth.hw();
    if !in_bounds(x, y, dims) {
        return None;
    }
    let (h, w) = dims;
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let d = depth.data();
    let taps = [d[y0 * w + x0], d[y0 * w + x1], d[y1 * w + x0], d[y1 * w + x1]];
    let lo = taps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = taps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) || hi > lo * (1.0 + DEPTH_EDGE_TOLERANCE) {
        return None;
    }
    let inv = taps.map(|d| 1.0 / d);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = inv[0] + (inv[1] - inv[0]) * fx;
    let bot = inv[2] + (inv[3] - inv[2]) * fx;
    Some(1.0 / (top + (bot - top) * fy))
}

/// Projects every reference pixel into `source` with the predicted depth
/// `d0`, lifts it back to 3-D with the source's ground-truth depth sampled at
/// the landing point, and projects that point into the reference image.
pub fn reproject_round_trip(
    reference: &CameraModel,
    source: &CameraModel,
    d0: &Tensor,
    d_src_gt: &Tensor,
) -> ReprojectionResult {
    let (h, w) = d0.hw();
    let n = h * w;
    let mut p_src = vec![0.0; 2 * n];
    let mut pts = vec![0.0; 3 * n];
    let mut p_rt = vec![0.0; 2 * n];
    let mut valid = vec![false; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = d0.data()[i];
            if !(d > 0.0) {
                continue;
            }
            let fwd = warp_pixel(Vector2::new(x as f64, y as f64), d, reference, source);
            p_src[i] = fwd.coords.x;
            p_src[n + i] = fwd.coords.y;
            if !(fwd.depth > 0.0) {
                continue;
            }
            let Some(d_src) = sample_depth(d_src_gt, fwd.coords.x, fwd.coords.y) else {
                continue;
            };
            let world = source.back_project(fwd.coords, d_src);
            pts[i] = world.x;
            pts[n + i] = world.y;
            pts[2 * n + i] = world.z;
            let (back, z) = reference.project(&world);
            p_rt[i] = back.x;
            p_rt[n + i] = back.y;
            valid[i] = z > 0.0 && in_bounds(back.x, back.y, (h, w));
        }
    }
    ReprojectionResult {
        p_src: Tensor::new(&[2, h, w], p_src).expect("sized"),
        src_points: Tensor::new(&[3, h, w], pts).expect("sized"),
        p_roundtrip: Tensor::new(&[2, h, w], p_rt).expect("sized"),
        valid,
    }
}
