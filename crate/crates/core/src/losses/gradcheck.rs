use nalgebra::Vector3;
use serde::Serialize;

use super::ce::{ce_loss_with_grad, one_hot_ground_truth};
use super::fm::fm_loss;
use crate::error::Result;
use crate::geometry::{make_hypotheses, CameraModel};
use crate::numerics::{SeededRng, Tensor};

/// Finite-difference step used by the suite.
pub const FD_STEP: f64 = 1e-5;
/// FM entries closer than this to the `|·|` kink are skipped.
pub const FM_KINK_EXCLUSION: f64 = 1e-3;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate `i`.
pub fn central_difference(f: impl Fn(&Tensor) -> Result<f64>, x: &Tensor, step: f64) -> Result<Tensor> {
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Largest `|a − n| / max(|a|, |n|)` over the selected entries; entries where
/// both are exactly zero count as agreeing.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, select: impl Fn(usize) -> bool) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .enumerate()
        .filter(|(i, _)| select(*i))
        .map(|(_, (&a, &n))| {
            let scale = a.abs().max(n.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub step: f64,
    /// Worst relative error of each CE instance.
    pub ce: Vec<f64>,
    /// Worst relative error of each FM instance.
    pub fm: Vec<f64>,
}

impl GradCheckReport {
    pub fn ce_max(&self) -> f64 {
        self.ce.iter().cloned().fold(0.0, f64::max)
    }

    pub fn fm_max(&self) -> f64 {
        self.fm.iter().cloned().fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.ce_max() < tolerance && self.fm_max() < tolerance
    }
}

fn ce_instance(rng: &mut SeededRng) -> Result<f64> {
    let (m, h, w) = (8, 4, 4);
    let cam = CameraModel::simple(10.0, 2.0, 2.0, Vector3::zeros(), (425.0, 935.0))?;
    let hyps = make_hypotheses(1, &cam, m, (h, w), None)?;
    let gt = Tensor::from_fn(&[h, w], |_| 425.0 + 510.0 * rng.next_uniform());
    let mask: Vec<bool> = (0..h * w).map(|_| rng.next_uniform() < 0.8).collect();
    let bundle = one_hot_ground_truth(&gt, &mask, &hyps)?;
    let scores = Tensor::from_fn(&[m, h, w], |_| 4.0 * rng.next_uniform() - 2.0);
    let (_, analytic) = ce_loss_with_grad(&scores, &bundle)?;
    let numeric = central_difference(|s| Ok(ce_loss_with_grad(s, &bundle)?.0.value), &scores, FD_STEP)?;
    Ok(max_relative_error(&analytic, &numeric, |_| true))
}

fn fm_instance(rng: &mut SeededRng) -> Result<f64> {
    let (h, w) = (8, 8);
    let gt = Tensor::from_fn(&[h, w], |_| 425.0 + 510.0 * rng.next_uniform());
    let offsets = Tensor::from_fn(&[h, w], |_| 20.0 * rng.next_uniform() - 10.0);
    let depth = gt.add(&offsets)?;
    // weights near zero shrink the loss change below what a difference of two
    // O(1) doubles can resolve at this step, so keep them away from zero
    let upsilon = Tensor::from_fn(&[h, w], |_| 0.05 + 0.5 * rng.next_uniform());
    let mask: Vec<bool> = (0..h * w).map(|_| rng.next_uniform() < 0.8).collect();
    let (_, analytic) = fm_loss(&depth, &gt, &upsilon, &mask)?;
    let numeric = central_difference(|d| Ok(fm_loss(d, &gt, &upsilon, &mask)?.0.value), &depth, FD_STEP)?;
    Ok(max_relative_error(&analytic, &numeric, |i| {
        offsets.data()[i].abs() >= FM_KINK_EXCLUSION
    }))
}

/// Compares both analytic gradients with central differences on
/// `instances` random problems each.
pub fn run_gradient_suite(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let root = SeededRng::new(seed);
    let mut ce_rng = root.split(1);
    let mut fm_rng = root.split(2);
    let ce = (0..instances).map(|_| ce_instance(&mut ce_rng)).collect::<Result<Vec<_>>>()?;
    let fm = (0..instances).map(|_| fm_instance(&mut fm_rng)).collect::<Result<Vec<_>>>()?;
    Ok(GradCheckReport {
        instances,
        step: FD_STEP,
        ce,
        fm,
    })
}
