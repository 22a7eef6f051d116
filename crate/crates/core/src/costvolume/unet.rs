use super::volume::{CostVolume, ProbabilityVolume};
use crate::error::Result;
use crate::numerics::{conv3d, relu, seeded_init, softmax_axis, upsample_nearest3d, ConvSpec, SeededRng, Tensor};

/// Two-level 3-D U-Net over a `1×M×H×W` cost volume.
///
/// ```text
/// x ──conv s2 (1→4)──▶ e1 ──conv s2 (4→8)──▶ e2
///                      │                     │ up×2, conv (8→4)
///                      └────────(+)◀─────────┘
///                            d1 ── up×2, conv (4→4) ──▶ d0 ── conv (4→1) ──(+ x)──▶ out
/// ```
///
/// Extents not divisible by 4 are edge-padded before the encoder and cropped
/// after the head.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetParams {
    pub enc1: ConvSpec,
    pub enc2: ConvSpec,
    pub dec1: ConvSpec,
    pub dec0: ConvSpec,
    pub head: ConvSpec,
}

impl UNetParams {
    pub fn seeded(rng: &SeededRng, scale: f64) -> Result<Self> {
        let layer = |label: u64, cout: usize, cin: usize, stride: usize| -> Result<ConvSpec> {
            let mut r = rng.split(label);
            ConvSpec::new(seeded_init(&[cout, cin, 3, 3, 3], &mut r, scale)?, Tensor::zeros(&[cout]), stride)
        };
        Ok(Self {
            enc1: layer(1, 4, 1, 2)?,
            enc2: layer(2, 8, 4, 2)?,
            dec1: layer(3, 4, 8, 1)?,
            dec0: layer(4, 4, 4, 1)?,
            head: layer(5, 1, 4, 1)?,
        })
    }
}

/// Cost-to-probability stage.
#[derive(Clone, Debug, PartialEq)]
pub enum Regularizer {
    /// `P = softmax(−C)` with no network.
    Bypass,
    UNet(Box<UNetParams>),
}

fn pad_edge(x: &Tensor, to: [usize; 3]) -> Tensor {
    let s = x.shape();
    let (c, m, h, w) = (s[0], s[1], s[2], s[3]);
    if [m, h, w] == to {
        return x.clone();
    }
    Tensor::from_fn(&[c, to[0], to[1], to[2]], |i| {
        let xx = (i % to[2]).min(w - 1);
        let yy = (i / to[2] % to[1]).min(h - 1);
        let zz = (i / (to[2] * to[1]) % to[0]).min(m - 1);
        let ch = i / (to[2] * to[1] * to[0]);
        x.data()[((ch * m + zz) * h + yy) * w + xx]
    })
}

fn crop(x: &Tensor, to: [usize; 3]) -> Tensor {
    let s = x.shape();
    let (h, w) = (s[2], s[3]);
    Tensor::from_fn(&to, |i| {
        let xx = i % to[2];
        let yy = i / to[2] % to[1];
        let zz = i / (to[2] * to[1]);
        x.data()[(zz * h + yy) * w + xx]
    })
}

fn round_up4(n: usize) -> usize {
    n.div_ceil(4) * 4
}

fn unet_forward(cost: &Tensor, p: &UNetParams) -> Result<Tensor> {
    let (m, h, w) = cost.chw();
    let padded_ext = [round_up4(m), round_up4(h), round_up4(w)];
    let x = pad_edge(&cost.clone().reshape(&[1, m, h, w])?, padded_ext);
    let e1 = relu(&conv3d(&x, &p.enc1)?);
    let e2 = relu(&conv3d(&e1, &p.enc2)?);
    let d1 = relu(&conv3d(&upsample_nearest3d(&e2)?, &p.dec1)?).add(&e1)?;
    let d0 = relu(&conv3d(&upsample_nearest3d(&d1)?, &p.dec0)?);
    let out = conv3d(&d0, &p.head)?.add(&x)?;
    Ok(crop(&out, [m, h, w]))
}

/// Pre-softmax scores: `−C` for the bypass, `−UNet(C)` otherwise.
pub fn regularization_scores(cost: &CostVolume, reg: &Regularizer) -> Result<Tensor> {
    let filtered = match reg {
        Regularizer::Bypass => cost.data.clone(),
        Regularizer::UNet(p) => unet_forward(&cost.data, p)?,
    };
    Ok(filtered.map(|v| -v))
}

/// Regularises the cost and normalises it over the hypothesis axis; lower
/// cost means higher probability.
pub fn regularize(cost: &CostVolume, reg: &Regularizer) -> Result<ProbabilityVolume> {
    let scores = regularization_scores(cost, reg)?;
    Ok(ProbabilityVolume {
        data: softmax_axis(&scores, 0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost(m: usize, h: usize, w: usize, seed: u64) -> CostVolume {
        CostVolume {
            data: seeded_init(&[m, h, w], &mut SeededRng::new(seed), 1.0).unwrap(),
            stage: 1,
        }
    }

    #[test]
    fn bypass_is_softmax_of_negated_cost() {
        let c = cost(6, 3, 4, 1);
        let p = regularize(&c, &Regularizer::Bypass).unwrap();
        let want = softmax_axis(&c.data.map(|v| -v), 0).unwrap();
        assert_eq!(p.data, want);
    }

    #[test]
    fn unet_output_is_distribution_for_odd_sizes() {
        let reg = Regularizer::UNet(Box::new(UNetParams::seeded(&SeededRng::new(3), 1.0).unwrap()));
        for (m, h, w) in [(8, 8, 8), (5, 7, 6), (48, 4, 4)] {
            let p = regularize(&cost(m, h, w, 2), &reg).unwrap();
            assert_eq!(p.data.shape(), &[m, h, w]);
            for pix in 0..h * w {
                let s: f64 = (0..m).map(|k| p.data.data()[k * h * w + pix]).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
            assert!(p.data.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn unet_fixture_8x8x8() {
        let reg = Regularizer::UNet(Box::new(UNetParams::seeded(&SeededRng::new(2024), 1.0).unwrap()));
        let p = regularize(&cost(8, 8, 8, 2025), &reg).unwrap();
        // recorded after the bypass and shape checks passed
        let got = [p.data.get(&[0, 0, 0]), p.data.get(&[3, 4, 5]), p.data.get(&[7, 7, 7])];
        let want = [FIXTURE_P000, FIXTURE_P345, FIXTURE_P777];
        for (g, e) in got.iter().zip(want) {
            assert!((g - e).abs() < 1e-12, "got {got:?}, recorded {want:?}");
        }
    }

    const FIXTURE_P000: f64 = 0.10690870073758825;
    const FIXTURE_P345: f64 = 0.12721681172829982;
    const FIXTURE_P777: f64 = 0.11494640830889806;
}
