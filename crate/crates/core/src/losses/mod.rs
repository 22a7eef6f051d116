//! Ground-truth encoding, the cross-entropy and feature-metric losses with
//! analytic gradients, the weighted total, and a central finite-difference
//! checker for the gradients.

mod ce;
mod fm;
mod gradcheck;

pub use ce::{ce_loss, ce_loss_with_grad, one_hot_ground_truth, GroundTruthBundle, CE_FLOOR};
pub use fm::{feature_metric_weight, fm_loss, FmWeightConfig};
pub use gradcheck::{central_difference, max_relative_error, run_gradient_suite, GradCheckReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A loss value plus a flag raised when the valid-pixel set was empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub empty_mask: bool,
}

/// Per-stage weights of the two loss terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_ce: Vec<f64>,
    pub lambda_fm: Vec<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ce: vec![2.0; 3],
            lambda_fm: vec![1.2; 3],
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_ce.len() != self.lambda_fm.len() {
            return Err(Error::Config("lambda_ce and lambda_fm must have one entry per stage".into()));
        }
        if self.lambda_ce.iter().chain(&self.lambda_fm).any(|&l| !(l >= 0.0)) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `Σ_ℓ λ_ce[ℓ]·CE_ℓ + λ_fm[ℓ]·FM_ℓ` over `(CE, FM)` pairs, one per stage.
pub fn total_loss(per_stage: &[(f64, f64)], weights: &LossWeights) -> Result<f64> {
    if per_stage.len() > weights.lambda_ce.len() || per_stage.len() > weights.lambda_fm.len() {
        return Err(Error::invalid(
            "total_loss",
            format!("{} stages but only {} weights", per_stage.len(), weights.lambda_ce.len()),
        ));
    }
    Ok(per_stage
        .iter()
        .enumerate()
        .map(|(l, &(ce, fm))| weights.lambda_ce[l] * ce + weights.lambda_fm[l] * fm)
        .sum())
}
