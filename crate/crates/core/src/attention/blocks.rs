use super::linear::{linear_attention, AttentionMode};
use crate::error::{Error, Result};
use crate::numerics::{seeded_init, SeededRng, Tensor};

/// A `C×H×W` feature map flattened to `n×C` tokens (`n = H·W`, row-major pixels).
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedFeatureMap {
    pub tokens: Tensor,
    pub height: usize,
    pub width: usize,
    pub view: usize,
}

impl TokenizedFeatureMap {
    pub fn from_feature_map(map: &Tensor, view: usize) -> Result<Self> {
        map.expect_ndim("TokenizedFeatureMap::from_feature_map", 3)?;
        let (c, h, w) = map.chw();
        let n = h * w;
        let src = map.data();
        let tokens = Tensor::from_fn(&[n, c], |i| src[(i % c) * n + i / c]);
        Ok(Self {
            tokens,
            height: h,
            width: w,
            view,
        })
    }

    pub fn to_feature_map(&self) -> Tensor {
        let n = self.height * self.width;
        let c = self.channels();
        let src = self.tokens.data();
        Tensor::from_fn(&[c, self.height, self.width], |i| src[(i % n) * c + i / n])
    }

    pub fn channels(&self) -> usize {
        self.tokens.shape()[1]
    }
}

/// Projection weights of one attention block (single head, no feed-forward).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlockParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_out: Tensor,
}

impl AttentionBlockParams {
    pub fn zeros(channels: usize) -> Self {
        let z = Tensor::zeros(&[channels, channels]);
        Self {
            w_q: z.clone(),
            w_k: z.clone(),
            w_v: z.clone(),
            w_out: z,
        }
    }

    pub fn seeded(channels: usize, rng: &mut SeededRng, scale: f64) -> Result<Self> {
        let shape = [channels, channels];
        Ok(Self {
            w_q: seeded_init(&shape, rng, scale)?,
            w_k: seeded_init(&shape, rng, scale)?,
            w_v: seeded_init(&shape, rng, scale)?,
            w_out: seeded_init(&shape, rng, scale)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.w_q.shape()[0]
    }
}

/// `tokens · Wᵀ`: applies `W` to every token.
pub(crate) fn project(tokens: &Tensor, weight: &Tensor) -> Tensor {
    let (n, c) = (tokens.shape()[0], tokens.shape()[1]);
    let co = weight.shape()[0];
    let (x, wt) = (tokens.data(), weight.data());
    Tensor::from_fn(&[n, co], |i| {
        let (t, a) = (i / co, i % co);
        let row = &wt[a * c..(a + 1) * c];
        row.iter().zip(&x[t * c..(t + 1) * c]).map(|(p, q)| p * q).sum()
    })
}

fn check_channels(op: &'static str, map: &TokenizedFeatureMap, params: &AttentionBlockParams) -> Result<()> {
    if map.channels() != params.channels() {
        return Err(Error::invalid(
            op,
            format!("feature map has {} channels, block expects {}", map.channels(), params.channels()),
        ));
    }
    Ok(())
}

fn attend(
    query_src: &Tensor,
    kv_src: &Tensor,
    residual: &TokenizedFeatureMap,
    params: &AttentionBlockParams,
    mode: AttentionMode,
) -> Result<TokenizedFeatureMap> {
    let q = project(query_src, &params.w_q);
    let k = project(kv_src, &params.w_k);
    let v = project(kv_src, &params.w_v);
    let att = project(&linear_attention(&q, &k, &v, mode)?, &params.w_out);
    Ok(TokenizedFeatureMap {
        tokens: residual.tokens.add(&att)?,
        ..residual.clone()
    })
}

/// Self-attention within one view, added residually.
pub fn intra_attention(
    map: &TokenizedFeatureMap,
    params: &AttentionBlockParams,
    mode: AttentionMode,
) -> Result<TokenizedFeatureMap> {
    check_channels("intra_attention", map, params)?;
    attend(&map.tokens, &map.tokens, map, params, mode)
}

/// Source queries attend to reference keys/values; only the source map is
/// updated.
pub fn inter_attention(
    source: &TokenizedFeatureMap,
    reference: &TokenizedFeatureMap,
    params: &AttentionBlockParams,
    mode: AttentionMode,
) -> Result<TokenizedFeatureMap> {
    check_channels("inter_attention", source, params)?;
    check_channels("inter_attention", reference, params)?;
    attend(&source.tokens, &reference.tokens, source, params, mode)
}
