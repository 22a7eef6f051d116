use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weights of a 2-D or 3-D convolution layer.
///
/// The kernel is `out × in × k × k` (2-D) or `out × in × k × k × k` (3-D) with
/// `k ∈ {1, 3}`. Padding is always `(k - 1) / 2`, so stride 1 preserves the
/// spatial extent.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub padding: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(kernel: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        let shape = kernel.shape();
        if shape.len() != 4 && shape.len() != 5 {
            return Err(Error::invalid(
                "ConvSpec::new",
                format!("kernel must be 4-d or 5-d, got {:?}", shape),
            ));
        }
        let k = shape[2];
        if k != 1 && k != 3 {
            return Err(Error::invalid(
                "ConvSpec::new",
                format!("kernel size must be 1 or 3, got {k}"),
            ));
        }
        if shape[2..].iter().any(|&e| e != k) {
            return Err(Error::invalid(
                "ConvSpec::new",
                format!("kernel must be cubic/square, got {:?}", shape),
            ));
        }
        if bias.shape() != [shape[0]] {
            return Err(Error::shape("ConvSpec::new", &[shape[0]], bias.shape()));
        }
        if stride == 0 {
            return Err(Error::invalid("ConvSpec::new", "stride must be positive"));
        }
        Ok(Self {
            kernel,
            bias,
            padding: (k - 1) / 2,
            stride,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    fn out_extent(&self, n: usize) -> usize {
        (n + 2 * self.padding - self.kernel_size()) / self.stride + 1
    }
}

/// Zero-padded 2-D cross-correlation plus bias. Input `C_in×H×W`.
pub fn conv2d(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    input.expect_ndim("conv2d", 3)?;
    if spec.kernel.ndim() != 4 {
        return Err(Error::invalid("conv2d", "kernel is not 2-d"));
    }
    let (cin, h, w) = input.chw();
    if spec.in_channels() != cin {
        return Err(Error::Shape {
            op: "conv2d",
            expected: spec.kernel.shape().to_vec(),
            actual: input.shape().to_vec(),
        });
    }
    let (cout, k, pad, stride) = (spec.out_channels(), spec.kernel_size(), spec.padding, spec.stride);
    let (ho, wo) = (spec.out_extent(h), spec.out_extent(w));
    let x = input.data();
    let kern = spec.kernel.data();
    let bias = spec.bias.data();

    let mut out = vec![0.0; cout * ho * wo];
    out.par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(co, plane)| {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        let kbase = (co * cin + ci) * k * k;
                        let xbase = ci * h * w;
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += kern[kbase + ky * k + kx]
                                    * x[xbase + iy as usize * w + ix as usize];
                            }
                        }
                    }
                    plane[oy * wo + ox] = acc;
                }
            }
        });
    Tensor::new(&[cout, ho, wo], out)
}

/// Zero-padded 3-D cross-correlation plus bias. Input `C_in×M×H×W`.
pub fn conv3d(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    input.expect_ndim("conv3d", 4)?;
    if spec.kernel.ndim() != 5 {
        return Err(Error::invalid("conv3d", "kernel is not 3-d"));
    }
    let s = input.shape();
    let (cin, m, h, w) = (s[0], s[1], s[2], s[3]);
    if spec.in_channels() != cin {
        return Err(Error::Shape {
            op: "conv3d",
            expected: spec.kernel.shape().to_vec(),
            actual: input.shape().to_vec(),
        });
    }
    let (cout, k, pad, stride) = (spec.out_channels(), spec.kernel_size(), spec.padding, spec.stride);
    let (mo, ho, wo) = (spec.out_extent(m), spec.out_extent(h), spec.out_extent(w));
    let x = input.data();
    let kern = spec.kernel.data();
    let bias = spec.bias.data();
    let in_vol = m * h * w;

    let mut out = vec![0.0; cout * mo * ho * wo];
    // one task per (output channel, output depth slice)
    out.par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(idx, plane)| {
            let co = idx / mo;
            let om = idx % mo;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for kz in 0..k {
                            let iz = (om * stride + kz) as isize - pad as isize;
                            if iz < 0 || iz >= m as isize {
                                continue;
                            }
                            for ky in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let kbase = (((co * cin + ci) * k + kz) * k + ky) * k;
                                let xbase = ci * in_vol + (iz as usize * h + iy as usize) * w;
                                for kx in 0..k {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += kern[kbase + kx] * x[xbase + ix as usize];
                                }
                            }
                        }
                    }
                    plane[oy * wo + ox] = acc;
                }
            }
        });
    Tensor::new(&[cout, mo, ho, wo], out)
}

/// Elementwise `max(x, 0)`.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}
