use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Source sampling position and blend weight along one axis, align-corners-false.
fn axis_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = if i0 == i1 { 0.0 } else { src - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}

/// Bilinear resize of a `C×H×W` tensor with align-corners-false sampling
/// (pixel centres at half-integer positions).
pub fn bilinear_resize(input: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    input.expect_ndim("bilinear_resize", 3)?;
    let (c, h, w) = input.chw();
    let (th, tw) = target;
    if th == 0 || tw == 0 || h == 0 || w == 0 {
        return Err(Error::invalid(
            "bilinear_resize",
            format!("cannot resize {:?} to {:?}", input.shape(), target),
        ));
    }
    if (th, tw) == (h, w) {
        return Ok(input.clone());
    }
    let ys = axis_taps(th, h);
    let xs = axis_taps(tw, w);
    let src = input.data();
    let mut out = vec![0.0; c * th * tw];
    out.par_chunks_mut(th * tw)
        .enumerate()
        .for_each(|(ch, plane)| {
            let base = ch * h * w;
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let v00 = src[base + y0 * w + x0];
                    let v01 = src[base + y0 * w + x1];
                    let v10 = src[base + y1 * w + x0];
                    let v11 = src[base + y1 * w + x1];
                    let top = v00 + (v01 - v00) * fx;
                    let bot = v10 + (v11 - v10) * fx;
                    plane[oy * tw + ox] = top + (bot - top) * fy;
                }
            }
        });
    Tensor::new(&[c, th, tw], out)
}

/// Non-overlapping `factor×factor` box average of a `C×H×W` tensor.
/// Extents must be divisible by `factor`.
pub fn average_pool(input: &Tensor, factor: usize) -> Result<Tensor> {
    input.expect_ndim("average_pool", 3)?;
    let (c, h, w) = input.chw();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::invalid(
            "average_pool",
            format!("extent {h}×{w} is not divisible by {factor}"),
        ));
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let src = input.data();
    let out = Tensor::from_fn(&[c, oh, ow], |i| {
        let ch = i / (oh * ow);
        let oy = (i / ow) % oh;
        let ox = i % ow;
        let mut acc = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                acc += src[ch * h * w + (oy * factor + dy) * w + ox * factor + dx];
            }
        }
        acc * norm
    });
    Ok(out)
}

/// Nearest-neighbour ×2 upsampling along the last three axes of a `C×M×H×W` tensor.
pub fn upsample_nearest3d(input: &Tensor) -> Result<Tensor> {
    input.expect_ndim("upsample_nearest3d", 4)?;
    let s = input.shape();
    let (c, m, h, w) = (s[0], s[1], s[2], s[3]);
    let (m2, h2, w2) = (2 * m, 2 * h, 2 * w);
    Ok(Tensor::from_fn(&[c, m2, h2, w2], |i| {
        let x = i % w2;
        let y = (i / w2) % h2;
        let z = (i / (w2 * h2)) % m2;
        let ch = i / (w2 * h2 * m2);
        input.data()[((ch * m + z / 2) * h + y / 2) * w + x / 2]
    }))
}
