use super::LossValue;
use crate::costvolume::ProbabilityVolume;
use crate::error::{Error, Result};
use crate::geometry::DepthHypotheses;
use crate::numerics::{softmax_axis, Tensor};

/// Added inside the logarithm so a zero probability costs a finite amount.
pub const CE_FLOOR: f64 = 1e-12;

/// Ground-truth depth, its one-hot encoding over the hypotheses, and the mask
/// of pixels that carry supervision.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthBundle {
    /// `H×W`
    pub depth_gt: Tensor,
    /// `M×H×W`; one-hot where `valid`, all zero elsewhere.
    pub one_hot: Tensor,
    pub valid: Vec<bool>,
}

impl GroundTruthBundle {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// One-hot labels at the hypothesis nearest the ground truth. An exact tie
/// between two neighbours goes to the lower one. Pixels whose ground truth
/// lies outside their hypothesis window are dropped from the mask.
pub fn one_hot_ground_truth(depth_gt: &Tensor, mask: &[bool], hyps: &DepthHypotheses) -> Result<GroundTruthBundle> {
    let (h, w) = hyps.dims();
    depth_gt.expect_shape("one_hot_ground_truth", &[h, w])?;
    if mask.len() != h * w {
        return Err(Error::shape("one_hot_ground_truth", &[h * w], &[mask.len()]));
    }
    let m = hyps.count();
    let plane = h * w;
    let mut one_hot = Tensor::zeros(&[m, h, w]);
    let mut valid = vec![false; plane];
    for pix in 0..plane {
        let d = depth_gt.data()[pix];
        if !mask[pix] || !(d >= hyps.at(0, pix) && d <= hyps.at(m - 1, pix)) {
            continue;
        }
        let mut best = 0;
        let mut best_err = (d - hyps.at(0, pix)).abs();
        for k in 1..m {
            let err = (d - hyps.at(k, pix)).abs();
            if err < best_err {
                best = k;
                best_err = err;
            }
        }
        one_hot.data_mut()[best * plane + pix] = 1.0;
        valid[pix] = true;
    }
    Ok(GroundTruthBundle {
        depth_gt: depth_gt.clone(),
        one_hot,
        valid,
    })
}

fn check(p: &Tensor, gt: &GroundTruthBundle) -> Result<()> {
    p.expect_shape("ce_loss", gt.one_hot.shape())
}

/// Mean over valid pixels of `−Σ_d G log(P + floor)`.
pub fn ce_loss(prob: &ProbabilityVolume, gt: &GroundTruthBundle) -> Result<LossValue> {
    check(&prob.data, gt)?;
    let (m, h, w) = prob.data.chw();
    let plane = h * w;
    let count = gt.valid_count();
    if count == 0 {
        log::warn!("cross-entropy evaluated on an empty valid-pixel set");
        return Ok(LossValue {
            value: 0.0,
            empty_mask: true,
        });
    }
    let (p, g) = (prob.data.data(), gt.one_hot.data());
    let mut total = 0.0;
    for pix in (0..plane).filter(|&i| gt.valid[i]) {
        for k in 0..m {
            let label = g[k * plane + pix];
            if label != 0.0 {
                total -= label * (p[k * plane + pix] + CE_FLOOR).ln();
            }
        }
    }
    Ok(LossValue {
        value: total / count as f64,
        empty_mask: false,
    })
}

/// Cross-entropy of `softmax(scores)` and its gradient with respect to the
/// scores, `(P − G)/|Ψ|` on valid pixels and 0 elsewhere.
pub fn ce_loss_with_grad(scores: &Tensor, gt: &GroundTruthBundle) -> Result<(LossValue, Tensor)> {
    check(scores, gt)?;
    let prob = ProbabilityVolume {
        data: softmax_axis(scores, 0)?,
    };
    let loss = ce_loss(&prob, gt)?;
    let (m, h, w) = scores.chw();
    let plane = h * w;
    let mut grad = Tensor::zeros(&[m, h, w]);
    if !loss.empty_mask {
        let inv = 1.0 / gt.valid_count() as f64;
        let (p, g) = (prob.data.data(), gt.one_hot.data());
        let out = grad.data_mut();
        for pix in (0..plane).filter(|&i| gt.valid[i]) {
            for k in 0..m {
                let i = k * plane + pix;
                out[i] = (p[i] - g[i]) * inv;
            }
        }
    }
    Ok((loss, grad))
}
