use super::camera::CameraModel;
use crate::error::{Error, Result};
use crate::numerics::{bilinear_resize, Tensor};

/// Per-pixel candidate depths for one stage of the coarse-to-fine sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthHypotheses {
    pub stage: usize,
    /// `M×H×W`, strictly increasing along the first axis.
    pub values: Tensor,
    /// Distance between neighbouring hypotheses, identical at every pixel.
    pub spacing: f64,
}

impl DepthHypotheses {
    pub fn count(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.values.shape()[1], self.values.shape()[2])
    }

    /// Depth of hypothesis `m` at flat pixel index `pix`.
    #[inline]
    pub fn at(&self, m: usize, pix: usize) -> f64 {
        let (h, w) = self.dims();
        self.values.data()[m * h * w + pix]
    }
}

/// Narrowing input for stages after the first: the previous stage's depth map
/// (at half the current resolution) and its hypothesis spacing.
#[derive(Clone, Copy, Debug)]
pub struct Refinement<'a> {
    pub prev_depth: &'a Tensor,
    pub prev_spacing: f64,
}

/// Builds the depth hypotheses for `stage` (1-based).
///
/// Stage 1 samples `count` depths uniformly across the camera's depth range,
/// both endpoints included. Later stages upsample the previous depth ×2 and
/// centre a window of `count` depths on it with half the previous spacing,
/// shifted (not squeezed) to stay inside the depth range.
pub fn make_hypotheses(
    stage: usize,
    cam: &CameraModel,
    count: usize,
    dims: (usize, usize),
    refine: Option<Refinement<'_>>,
) -> Result<DepthHypotheses> {
    if count < 2 {
        return Err(Error::invalid(
            "make_hypotheses",
            format!("need at least 2 hypotheses, got {count}"),
        ));
    }
    let (h, w) = dims;
    let (d_min, d_max) = cam.depth_range;
    let plane = h * w;
    match (stage, refine) {
        (1, None) => {
            let last = (count - 1) as f64;
            let values = Tensor::from_fn(&[count, h, w], |i| {
                let t = (i / plane) as f64 / last;
                d_min * (1.0 - t) + d_max * t
            });
            Ok(DepthHypotheses {
                stage,
                values,
                spacing: (d_max - d_min) / last,
            })
        }
        (1, Some(_)) => Err(Error::invalid(
            "make_hypotheses",
            "stage 1 does not take a previous depth map",
        )),
        (_, None) => Err(Error::invalid(
            "make_hypotheses",
            format!("stage {stage} needs the previous stage's depth map"),
        )),
        (_, Some(refine)) => {
            let prev = refine.prev_depth;
            prev.expect_ndim("make_hypotheses", 2)?;
            if prev.hw() != (h / 2, w / 2) || h % 2 != 0 || w % 2 != 0 {
                return Err(Error::shape("make_hypotheses", &[h / 2, w / 2], prev.shape()));
            }
            let up = bilinear_resize(&prev.clone().reshape(&[1, h / 2, w / 2])?, (h, w))?;
            let mut spacing = refine.prev_spacing / 2.0;
            let half_span = (count - 1) as f64 / 2.0;
            if spacing * (count - 1) as f64 > d_max - d_min {
                spacing = (d_max - d_min) / (count - 1) as f64;
            }
            let span = spacing * (count - 1) as f64;
            let starts: Vec<f64> = up
                .data()
                .iter()
                .map(|&c| (c - half_span * spacing).clamp(d_min, d_max - span))
                .collect();
            let values = Tensor::from_fn(&[count, h, w], |i| {
                starts[i % plane] + (i / plane) as f64 * spacing
            });
            Ok(DepthHypotheses {
                stage,
                values,
                spacing,
            })
        }
    }
}
