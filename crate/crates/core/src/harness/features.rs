use crate::error::{Error, Result};
use crate::numerics::{bilinear_resize, conv2d, relu, seeded_init, ConvSpec, SeededRng, Tensor};

/// Feature channels at stages 1, 2, 3 (quarter, half, full resolution).
pub const STAGE_CHANNELS: [usize; 3] = [16, 8, 4];

/// Downsampling factor of each stage relative to the input image.
pub const STAGE_FACTORS: [usize; 3] = [4, 2, 1];

/// Small feature pyramid: a three-level strided encoder and a top-down path
/// with lateral 1×1 connections.
///
/// ```text
/// img ─c0─▶ e0 (8, 1) ─c1 s2─▶ e1 (16, 1/2) ─c2 s2─▶ e2 (32, 1/4)
///                                                     │ top (1×1)
///                                                     ▼
///                                   t2 ─────────────▶ stage 1 (16)
///                     lat1(e1) + up(t2) = t1 ─out2─▶ stage 2 (8)
///   lat0(e0) + up(t1) = t0 ─out3─▶ stage 3 (4)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct FpnParams {
    pub c0: ConvSpec,
    pub c1: ConvSpec,
    pub c2: ConvSpec,
    pub top: ConvSpec,
    pub lat1: ConvSpec,
    pub lat0: ConvSpec,
    pub out2: ConvSpec,
    pub out3: ConvSpec,
}

impl FpnParams {
    pub fn seeded(rng: &SeededRng, scale: f64) -> Result<Self> {
        let layer = |label: u64, cout: usize, cin: usize, k: usize, stride: usize| -> Result<ConvSpec> {
            let kernel = seeded_init(&[cout, cin, k, k], &mut rng.split(label), scale)?;
            ConvSpec::new(kernel, Tensor::zeros(&[cout]), stride)
        };
        Ok(Self {
            c0: layer(1, 8, 1, 3, 1)?,
            c1: layer(2, 16, 8, 3, 2)?,
            c2: layer(3, 32, 16, 3, 2)?,
            top: layer(4, 16, 32, 1, 1)?,
            lat1: layer(5, 16, 16, 1, 1)?,
            lat0: layer(6, 16, 8, 1, 1)?,
            out2: layer(7, STAGE_CHANNELS[1], 16, 3, 1)?,
            out3: layer(8, STAGE_CHANNELS[2], 16, 3, 1)?,
        })
    }
}

/// How images become feature maps.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureExtractor {
    /// Luminance replicated to each stage's channel count; coarser stages are
    /// point-sampled at pixel centres (bilinear, same centre convention as
    /// [`CameraModel::scaled`](crate::geometry::CameraModel::scaled)). Keeps
    /// the features photometric; unlike box filtering, the samples stay
    /// consistent under a perspective warp.
    Identity,
    Fpn(Box<FpnParams>),
}

fn check_image(image: &Tensor) -> Result<(usize, usize)> {
    image.expect_ndim("extract_features", 2)?;
    let (h, w) = image.hw();
    if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
        return Err(Error::invalid(
            "extract_features",
            format!("image {h}×{w} must be a positive multiple of 4 in each extent"),
        ));
    }
    Ok((h, w))
}

fn replicate(plane: &Tensor, c: usize) -> Tensor {
    let (_, h, w) = plane.chw();
    let src = plane.data();
    Tensor::from_fn(&[c, h, w], |i| src[i % (h * w)])
}

/// Feature maps for stages 1–3 at 1/4, 1/2 and full resolution.
pub fn extract_pyramid(image: &Tensor, extractor: &FeatureExtractor) -> Result<[Tensor; 3]> {
    let (h, w) = check_image(image)?;
    let x = image.clone().reshape(&[1, h, w])?;
    match extractor {
        FeatureExtractor::Identity => Ok([
            replicate(&bilinear_resize(&x, (h / 4, w / 4))?, STAGE_CHANNELS[0]),
            replicate(&bilinear_resize(&x, (h / 2, w / 2))?, STAGE_CHANNELS[1]),
            replicate(&x, STAGE_CHANNELS[2]),
        ]),
        FeatureExtractor::Fpn(p) => {
            let e0 = relu(&conv2d(&x, &p.c0)?);
            let e1 = relu(&conv2d(&e0, &p.c1)?);
            let e2 = relu(&conv2d(&e1, &p.c2)?);
            let t2 = conv2d(&e2, &p.top)?;
            let t1 = conv2d(&e1, &p.lat1)?.add(&bilinear_resize(&t2, (h / 2, w / 2))?)?;
            let t0 = conv2d(&e0, &p.lat0)?.add(&bilinear_resize(&t1, (h, w))?)?;
            Ok([t2, conv2d(&t1, &p.out2)?, conv2d(&t0, &p.out3)?])
        }
    }
}

/// Feature map for a single stage (1-based).
pub fn extract_features(image: &Tensor, stage: usize, extractor: &FeatureExtractor) -> Result<Tensor> {
    if !(1..=3).contains(&stage) {
        return Err(Error::invalid("extract_features", format!("unknown stage {stage}")));
    }
    let [a, b, c] = extract_pyramid(image, extractor)?;
    Ok([a, b, c].into_iter().nth(stage - 1).expect("three stages"))
}
