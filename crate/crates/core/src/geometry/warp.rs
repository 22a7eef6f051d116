use nalgebra::Vector2;
use rayon::prelude::*;

use super::camera::{CameraModel, PairHomography};
use super::hypotheses::DepthHypotheses;
use crate::numerics::Tensor;

/// A reference pixel carried into a source image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpedPixel {
    pub coords: Vector2<f64>,
    /// Depth of the point in the source camera.
    pub depth: f64,
}

/// Source-image coordinates for every reference pixel under one depth hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpField {
    /// `2×H×W`: x then y.
    pub coords: Tensor,
    /// Inside `[0, W_src-1]×[0, H_src-1]` with positive projected depth.
    pub valid: Vec<bool>,
}

impl WarpField {
    pub fn dims(&self) -> (usize, usize) {
        (self.coords.shape()[1], self.coords.shape()[2])
    }
}

/// Warps reference pixel `p` at depth `d` into the source camera through the
/// plane-induced homography, with division by the projected depth.
pub fn warp_pixel(p: Vector2<f64>, depth: f64, reference: &CameraModel, source: &CameraModel) -> WarpedPixel {
    let hom = PairHomography::new(reference, source);
    let q = hom.apply(p.x, p.y, depth);
    WarpedPixel {
        coords: Vector2::new(q.x / q.z, q.y / q.z),
        depth: q.z,
    }
}

#[inline]
pub(crate) fn in_bounds(x: f64, y: f64, dims: (usize, usize)) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (dims.1 - 1) as f64 && y <= (dims.0 - 1) as f64
}

/// One [`WarpField`] per hypothesis slice; `src_dims` is `(H_src, W_src)`.
pub fn warp_grid(
    reference: &CameraModel,
    source: &CameraModel,
    hyps: &DepthHypotheses,
    src_dims: (usize, usize),
) -> Vec<WarpField> {
    let hom = PairHomography::new(reference, source);
    let (h, w) = hyps.dims();
    (0..hyps.count())
        .into_par_iter()
        .map(|m| {
            let mut coords = vec![0.0; 2 * h * w];
            let mut valid = vec![false; h * w];
            for y in 0..h {
                for x in 0..w {
                    let pix = y * w + x;
                    let q = hom.apply(x as f64, y as f64, hyps.at(m, pix));
                    let (u, v) = (q.x / q.z, q.y / q.z);
                    coords[pix] = u;
                    coords[h * w + pix] = v;
                    valid[pix] = q.z > 0.0 && in_bounds(u, v, src_dims);
                }
            }
            WarpField {
                coords: Tensor::new(&[2, h, w], coords).expect("sized above"),
                valid,
            }
        })
        .collect()
}

/// Bilinear lookup in an `H×W` plane; the point must lie inside the image.
#[inline]
pub(crate) fn sample_plane(plane: &[f64], dims: (usize, usize), x: f64, y: f64) -> f64 {
    let (h, w) = dims;
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let v00 = plane[y0 * w + x0];
    let v01 = plane[y0 * w + x1];
    let v10 = plane[y1 * w + x0];
    let v11 = plane[y1 * w + x1];
    let top = v00 + (v01 - v00) * fx;
    let bot = v10 + (v11 - v10) * fx;
    top + (bot - top) * fy
}

/// Samples a `C×H×W` feature map at the warp coordinates. Invalid locations
/// yield 0 and a false mask entry.
pub fn grid_sample(feature: &Tensor, warp: &WarpField) -> (Tensor, Vec<bool>) {
    let (c, fh, fw) = feature.chw();
    let (h, w) = warp.dims();
    let n = h * w;
    let xs = &warp.coords.data()[..n];
    let ys = &warp.coords.data()[n..];
    let mut out = vec![0.0; c * n];
    for (ch, dst) in out.chunks_mut(n).enumerate() {
        let plane = &feature.data()[ch * fh * fw..(ch + 1) * fh * fw];
        for pix in 0..n {
            if warp.valid[pix] {
                dst[pix] = sample_plane(plane, (fh, fw), xs[pix], ys[pix]);
            }
        }
    }
    (
        Tensor::new(&[c, h, w], out).expect("sized above"),
        warp.valid.clone(),
    )
}
