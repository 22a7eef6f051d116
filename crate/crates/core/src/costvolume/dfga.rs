use super::volume::CostVolume;
use crate::error::{Error, Result};
use crate::numerics::{bilinear_resize, conv2d, seeded_init, ConvSpec, SeededRng, Tensor};

/// Convolutions of the guided aggregation between a stage's cost volume and
/// the upsampled cost volume of the stage before it.
#[derive(Clone, Debug, PartialEq)]
pub struct DfgaParams {
    /// 3×3, `M_prev → M`, applied to the upsampled coarse cost.
    pub coarse: ConvSpec,
    /// 3×3, `M → M`, applied to the current cost.
    pub local: ConvSpec,
    /// 1×1, `3M → M`, over `[coarse branch, local branch, current cost]`.
    pub fuse: ConvSpec,
}

impl DfgaParams {
    pub fn zeros(m_prev: usize, m: usize) -> Self {
        Self {
            coarse: conv(Tensor::zeros(&[m, m_prev, 3, 3]), m),
            local: conv(Tensor::zeros(&[m, m, 3, 3]), m),
            fuse: conv(Tensor::zeros(&[m, 3 * m, 1, 1]), m),
        }
    }

    /// Zero branches and a fuse kernel that copies the current cost through.
    pub fn pass_through(m_prev: usize, m: usize) -> Self {
        let mut p = Self::zeros(m_prev, m);
        p.fuse.kernel = identity_fuse(m);
        p
    }

    /// Seeded branch convolutions; the fuse kernel copies the current cost and
    /// mixes in the two branches with weights of standard deviation
    /// `branch_gain / sqrt(2M)`.
    pub fn seeded(m_prev: usize, m: usize, rng: &SeededRng, branch_gain: f64) -> Result<Self> {
        let coarse = conv(seeded_init(&[m, m_prev, 3, 3], &mut rng.split(1), 1.0)?, m);
        let local = conv(seeded_init(&[m, m, 3, 3], &mut rng.split(2), 1.0)?, m);
        let mut kernel = identity_fuse(m);
        if branch_gain > 0.0 {
            let mix = seeded_init(&[m, 2 * m], &mut rng.split(3), branch_gain)?;
            for o in 0..m {
                for i in 0..2 * m {
                    kernel.set(&[o, i, 0, 0], mix.get(&[o, i]));
                }
            }
        }
        Ok(Self {
            coarse,
            local,
            fuse: conv(kernel, m),
        })
    }
}

fn conv(kernel: Tensor, m: usize) -> ConvSpec {
    ConvSpec::new(kernel, Tensor::zeros(&[m]), 1).expect("kernel shapes are built consistently")
}

fn identity_fuse(m: usize) -> Tensor {
    let mut k = Tensor::zeros(&[m, 3 * m, 1, 1]);
    for o in 0..m {
        k.set(&[o, 2 * m + o, 0, 0], 1.0);
    }
    k
}

/// Guided aggregation for stages 2 and 3: the previous stage's cost is
/// upsampled ×2 (hypotheses as channels), both costs pass through 3×3
/// convolutions, and `[coarse, local, current]` is reduced by a 1×1 convolution.
pub fn dfga(current: &CostVolume, previous: &CostVolume, params: &DfgaParams) -> Result<CostVolume> {
    if !(2..=3).contains(&current.stage) {
        return Err(Error::invalid(
            "dfga",
            format!("guided aggregation applies to stages 2 and 3 only, got stage {}", current.stage),
        ));
    }
    if previous.stage + 1 != current.stage {
        return Err(Error::invalid(
            "dfga",
            format!("previous cost is from stage {}, expected {}", previous.stage, current.stage - 1),
        ));
    }
    let (m, h, w) = current.data.chw();
    let (m_prev, ph, pw) = previous.data.chw();
    if (ph * 2, pw * 2) != (h, w) {
        return Err(Error::shape("dfga", &[m_prev, h / 2, w / 2], previous.data.shape()));
    }
    if params.coarse.in_channels() != m_prev || params.local.in_channels() != m || params.fuse.out_channels() != m {
        return Err(Error::invalid(
            "dfga",
            format!("parameters do not fit volumes with {m_prev} and {m} hypotheses"),
        ));
    }
    let up = bilinear_resize(&previous.data, (h, w))?;
    let a = conv2d(&up, &params.coarse)?;
    let b = conv2d(&current.data, &params.local)?;
    let stacked = Tensor::concat_outer(&[&a, &b, &current.data])?;
    Ok(CostVolume {
        data: conv2d(&stacked, &params.fuse)?,
        stage: current.stage,
    })
}
