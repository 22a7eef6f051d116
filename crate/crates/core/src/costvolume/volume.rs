use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{grid_sample, warp_grid, CameraModel, DepthHypotheses};
use crate::numerics::Tensor;

/// Cost assigned where no source view sees the hypothesised point.
pub const INVALID_COST: f64 = 1e4;

/// A view's features resampled onto the reference frustum.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    /// `C×M×H×W`; exactly 0 wherever `validity` is false.
    pub data: Tensor,
    /// `M×H×W`.
    pub validity: Vec<bool>,
    pub view: usize,
}

/// Matching cost per hypothesis and pixel, `M×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    pub data: Tensor,
    pub stage: usize,
}

/// Per-pixel distribution over hypotheses, `M×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    pub data: Tensor,
}

/// Depth and its winning probability per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    /// `H×W`
    pub depth: Tensor,
    /// `H×W`, in `[0, 1]`.
    pub confidence: Tensor,
}

/// How source-vs-reference differences are reduced into a cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Mean of signed differences.
    Literal,
    /// Mean of squared differences.
    #[default]
    Squared,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(FusionMode::Literal),
            "squared" => Ok(FusionMode::Squared),
            other => Err(Error::Config(format!("unknown fusion mode '{other}'"))),
        }
    }
}

/// The reference feature map broadcast along the hypothesis axis.
pub fn reference_volume(feature_ref: &Tensor, hyps: &DepthHypotheses) -> Result<FeatureVolume> {
    feature_ref.expect_ndim("reference_volume", 3)?;
    let (c, h, w) = feature_ref.chw();
    if hyps.dims() != (h, w) {
        return Err(Error::shape("reference_volume", &[h, w], hyps.values.shape()));
    }
    let m = hyps.count();
    let plane = h * w;
    let src = feature_ref.data();
    let data = Tensor::from_fn(&[c, m, h, w], |i| src[(i / (m * plane)) * plane + i % plane]);
    Ok(FeatureVolume {
        data,
        validity: vec![true; m * plane],
        view: 0,
    })
}

/// Sweeps `feature_src` across every hypothesis plane of the reference camera.
pub fn build_feature_volume(
    feature_src: &Tensor,
    reference: &CameraModel,
    source: &CameraModel,
    hyps: &DepthHypotheses,
    view: usize,
) -> Result<FeatureVolume> {
    feature_src.expect_ndim("build_feature_volume", 3)?;
    let (c, fh, fw) = feature_src.chw();
    let (h, w) = hyps.dims();
    let m = hyps.count();
    let plane = h * w;
    let fields = warp_grid(reference, source, hyps, (fh, fw));
    let slices: Vec<(Tensor, Vec<bool>)> = fields.par_iter().map(|f| grid_sample(feature_src, f)).collect();
    let mut data = vec![0.0; c * m * plane];
    let mut validity = vec![false; m * plane];
    for (mi, (sampled, mask)) in slices.iter().enumerate() {
        for ch in 0..c {
            let dst = (ch * m + mi) * plane;
            data[dst..dst + plane].copy_from_slice(&sampled.data()[ch * plane..(ch + 1) * plane]);
        }
        validity[mi * plane..(mi + 1) * plane].copy_from_slice(mask);
    }
    Ok(FeatureVolume {
        data: Tensor::new(&[c, m, h, w], data)?,
        validity,
        view,
    })
}

/// Reduces the reference volume (`volumes[0]`) and the source volumes into a
/// cost. Sources are accumulated in ascending view id; samples a source
/// cannot see are left out of the mean, and a point seen by no source gets
/// [`INVALID_COST`].
pub fn fuse_variance(volumes: &[FeatureVolume], mode: FusionMode, stage: usize) -> Result<CostVolume> {
    if volumes.len() < 2 {
        return Err(Error::invalid(
            "fuse_variance",
            format!("need a reference and at least one source, got {} volumes", volumes.len()),
        ));
    }
    let reference = &volumes[0];
    let shape = reference.data.shape();
    for v in volumes {
        v.data.expect_shape("fuse_variance", shape)?;
    }
    let (c, m, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let cells = m * h * w;
    let mut sources: Vec<&FeatureVolume> = volumes[1..].iter().collect();
    sources.sort_by_key(|v| v.view);

    let r = reference.data.data();
    let out: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let seen: Vec<&FeatureVolume> = sources.iter().copied().filter(|v| v.validity[cell]).collect();
            if seen.is_empty() {
                return INVALID_COST;
            }
            let inv = 1.0 / seen.len() as f64;
            let mut total = 0.0;
            for ch in 0..c {
                let idx = ch * cells + cell;
                let mut acc = 0.0;
                for v in &seen {
                    let d = v.data.data()[idx] - r[idx];
                    acc += match mode {
                        FusionMode::Literal => d,
                        FusionMode::Squared => d * d,
                    };
                }
                total += acc * inv;
            }
            total / c as f64
        })
        .collect();
    Ok(CostVolume {
        data: Tensor::new(&[m, h, w], out)?,
        stage,
    })
}

/// Winner-take-all depth: the hypothesis with the highest probability at each
/// pixel, ties going to the smallest index.
pub fn wta_depth(prob: &ProbabilityVolume, hyps: &DepthHypotheses) -> Result<DepthMap> {
    prob.data.expect_shape("wta_depth", hyps.values.shape())?;
    let (h, w) = hyps.dims();
    let m = hyps.count();
    let plane = h * w;
    let p = prob.data.data();
    let mut depth = vec![0.0; plane];
    let mut conf = vec![0.0; plane];
    for pix in 0..plane {
        let mut best = 0;
        for k in 1..m {
            if p[k * plane + pix] > p[best * plane + pix] {
                best = k;
            }
        }
        depth[pix] = hyps.at(best, pix);
        conf[pix] = p[best * plane + pix];
    }
    Ok(DepthMap {
        depth: Tensor::new(&[h, w], depth)?,
        confidence: Tensor::new(&[h, w], conf)?,
    })
}
