use serde::{Deserialize, Serialize};

use super::LossValue;
use crate::error::{Error, Result};
use crate::geometry::{sample_plane, ReprojectionResult};
use crate::numerics::Tensor;

/// Clamp bounds and guard for the feature-metric weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FmWeightConfig {
    pub upsilon1: f64,
    pub upsilon2: f64,
    pub eps: f64,
    /// `|ln υ|` when set; the signed `ln |υ|` otherwise.
    pub abs_log: bool,
}

impl Default for FmWeightConfig {
    fn default() -> Self {
        Self {
            upsilon1: 0.6,
            upsilon2: 1.7,
            eps: 1e-3,
            abs_log: true,
        }
    }
}

impl FmWeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.upsilon1 > 0.0 && self.upsilon1 < self.upsilon2) {
            return Err(Error::Config(format!(
                "feature-metric clamp needs 0 < upsilon1 < upsilon2, got {} and {}",
                self.upsilon1, self.upsilon2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("feature-metric eps must be positive".into()));
        }
        Ok(())
    }

    /// Clamps a raw ratio into `[υ₁, υ₂]` and takes its log.
    pub fn weight(&self, raw: f64) -> f64 {
        let v = raw.clamp(self.upsilon1, self.upsilon2);
        if self.abs_log {
            v.ln().abs()
        } else {
            v.abs().ln()
        }
    }
}

/// Per-pixel `Υ` from the change in feature deviation along the
/// reprojection chain: the channel-mean of `F̂(p'') − F̂(p)` over the same
/// quantity on `F` (plus `ε`). Invalid chains get 0.
pub fn feature_metric_weight(
    f0: &Tensor,
    f0_hat: &Tensor,
    chain: &ReprojectionResult,
    cfg: &FmWeightConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let (c, h, w) = f0.chw();
    f0_hat.expect_shape("feature_metric_weight", &[c, h, w])?;
    chain.p_roundtrip.expect_shape("feature_metric_weight", &[2, h, w])?;
    if c == 0 {
        return Err(Error::invalid("feature_metric_weight", "feature maps have no channels"));
    }
    let n = h * w;
    let rt = chain.p_roundtrip.data();
    let delta = |f: &Tensor, pix: usize| -> f64 {
        let (x, y) = (rt[pix], rt[n + pix]);
        let s: f64 = (0..c)
            .map(|ch| {
                let plane = &f.data()[ch * n..(ch + 1) * n];
                sample_plane(plane, (h, w), x, y) - plane[pix]
            })
            .sum();
        s / c as f64
    };
    Ok(Tensor::from_fn(&[h, w], |pix| {
        if !chain.valid[pix] {
            return 0.0;
        }
        cfg.weight(delta(f0_hat, pix) / (delta(f0, pix) + cfg.eps))
    }))
}

/// Mean over valid pixels of `Υ·|D − gt|` and its gradient with respect to
/// `D`, `Υ·sign(D − gt)/|Ψ|` (0 at equality).
pub fn fm_loss(depth: &Tensor, depth_gt: &Tensor, upsilon: &Tensor, mask: &[bool]) -> Result<(LossValue, Tensor)> {
    let (h, w) = depth.hw();
    depth_gt.expect_shape("fm_loss", &[h, w])?;
    upsilon.expect_shape("fm_loss", &[h, w])?;
    if mask.len() != h * w {
        return Err(Error::shape("fm_loss", &[h * w], &[mask.len()]));
    }
    let count = mask.iter().filter(|&&m| m).count();
    let mut grad = Tensor::zeros(&[h, w]);
    if count == 0 {
        log::warn!("feature-metric loss evaluated on an empty valid-pixel set");
        return Ok((
            LossValue {
                value: 0.0,
                empty_mask: true,
            },
            grad,
        ));
    }
    let inv = 1.0 / count as f64;
    let (d, g, u) = (depth.data(), depth_gt.data(), upsilon.data());
    let mut total = 0.0;
    let out = grad.data_mut();
    for i in (0..h * w).filter(|&i| mask[i]) {
        let err = d[i] - g[i];
        total += u[i] * err.abs();
        out[i] = if err == 0.0 { 0.0 } else { u[i] * err.signum() * inv };
    }
    Ok((
        LossValue {
            value: total * inv,
            empty_mask: false,
        },
        grad,
    ))
}
