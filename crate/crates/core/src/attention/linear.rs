use crate::error::{Error, Result};
use crate::numerics::{phi_scalar, Tensor};

/// How the kernelised attention output is scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Divide by `Φ(q)·ΣΦ(k)`, making each output a convex combination of values.
    #[default]
    Normalized,
    /// Numerator only: `Φ(Q)(Φ(K)ᵀV)`.
    Literal,
}

fn check_inputs(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize, usize)> {
    q.expect_ndim("linear_attention", 2)?;
    k.expect_ndim("linear_attention", 2)?;
    v.expect_ndim("linear_attention", 2)?;
    let (n, c) = (q.shape()[0], q.shape()[1]);
    let m = k.shape()[0];
    if m == 0 {
        return Err(Error::invalid("linear_attention", "keys/values must not be empty"));
    }
    if k.shape()[1] != c {
        return Err(Error::shape("linear_attention", &[m, c], k.shape()));
    }
    if v.shape()[0] != m {
        return Err(Error::shape("linear_attention", &[m, v.shape()[1]], v.shape()));
    }
    Ok((n, m, c, v.shape()[1]))
}

/// Kernelised attention `Φ(Q)(Φ(K)ᵀV)`, evaluated keys-first so the cost is
/// `O((n + m)·C·C_v)` rather than `O(n·m·C)`.
///
/// `q` is `n×C`, `k` is `m×C`, `v` is `m×C_v`.
pub fn linear_attention(q: &Tensor, k: &Tensor, v: &Tensor, mode: AttentionMode) -> Result<Tensor> {
    let (n, m, c, cv) = check_inputs(q, k, v)?;
    let (kd, vd) = (k.data(), v.data());

    // kv[a][b] = Σ_j Φ(k_ja) v_jb ; z[a] = Σ_j Φ(k_ja)
    let mut kv = vec![0.0; c * cv];
    let mut z = vec![0.0; c];
    let mut phik = vec![0.0; c];
    for j in 0..m {
        for a in 0..c {
            phik[a] = phi_scalar(kd[j * c + a]);
            z[a] += phik[a];
        }
        let vrow = &vd[j * cv..(j + 1) * cv];
        for a in 0..c {
            let row = &mut kv[a * cv..(a + 1) * cv];
            for (dst, &vb) in row.iter_mut().zip(vrow) {
                *dst += phik[a] * vb;
            }
        }
    }

    let qd = q.data();
    let mut out = vec![0.0; n * cv];
    let mut phiq = vec![0.0; c];
    for i in 0..n {
        for a in 0..c {
            phiq[a] = phi_scalar(qd[i * c + a]);
        }
        let orow = &mut out[i * cv..(i + 1) * cv];
        for a in 0..c {
            let row = &kv[a * cv..(a + 1) * cv];
            for (dst, &x) in orow.iter_mut().zip(row) {
                *dst += phiq[a] * x;
            }
        }
        if mode == AttentionMode::Normalized {
            let denom: f64 = phiq.iter().zip(&z).map(|(a, b)| a * b).sum();
            for dst in orow.iter_mut() {
                *dst /= denom;
            }
        }
    }
    Tensor::new(&[n, cv], out)
}

/// The same attention evaluated query-by-key (`O(n·m·C)`), materialising
/// every weight `Φ(q_i)·Φ(k_j)`. Used for timing comparisons.
pub fn quadratic_attention(q: &Tensor, k: &Tensor, v: &Tensor, mode: AttentionMode) -> Result<Tensor> {
    let (n, m, c, cv) = check_inputs(q, k, v)?;
    let phiq: Vec<f64> = q.data().iter().map(|&x| phi_scalar(x)).collect();
    let phik: Vec<f64> = k.data().iter().map(|&x| phi_scalar(x)).collect();
    let vd = v.data();
    let mut out = vec![0.0; n * cv];
    let mut weights = vec![0.0; m];
    for i in 0..n {
        let qi = &phiq[i * c..(i + 1) * c];
        let mut total = 0.0;
        for (j, wj) in weights.iter_mut().enumerate() {
            let kj = &phik[j * c..(j + 1) * c];
            *wj = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
            total += *wj;
        }
        let orow = &mut out[i * cv..(i + 1) * cv];
        for (j, &wj) in weights.iter().enumerate() {
            for (dst, &vb) in orow.iter_mut().zip(&vd[j * cv..(j + 1) * cv]) {
                *dst += wj * vb;
            }
        }
        if mode == AttentionMode::Normalized {
            for dst in orow.iter_mut() {
                *dst /= total;
            }
        }
    }
    Tensor::new(&[n, cv], out)
}
