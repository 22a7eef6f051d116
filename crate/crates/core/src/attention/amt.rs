use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::blocks::{inter_attention, intra_attention, AttentionBlockParams, TokenizedFeatureMap};
use super::linear::AttentionMode;
use crate::error::{Error, Result};
use crate::numerics::{bilinear_resize, SeededRng, Tensor};

/// Resolution at which a stage's attention blocks run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingRate {
    #[serde(rename = "1")]
    Full,
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "1/4")]
    Quarter,
}

impl SamplingRate {
    pub fn factor(self) -> f64 {
        match self {
            SamplingRate::Full => 1.0,
            SamplingRate::Half => 0.5,
            SamplingRate::Quarter => 0.25,
        }
    }

    fn reduced(self, n: usize) -> usize {
        ((n as f64 * self.factor()).round() as usize).max(1)
    }
}

/// Block counts and sampling rate for one stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub n_intra: usize,
    pub n_inter: usize,
    pub rate: SamplingRate,
}

/// Per-stage interleaving of intra- and inter-view attention.
///
/// Blocks alternate starting with intra: with counts `(2, 1)` the order is
/// intra, inter, intra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmtScheduleConfig {
    pub stages: [StageSchedule; 3],
    #[serde(default)]
    pub mode: AttentionMode,
}

const DEFAULT_RATES: [SamplingRate; 3] = [SamplingRate::Full, SamplingRate::Half, SamplingRate::Quarter];

impl AmtScheduleConfig {
    /// Builds a schedule from per-stage `(n_intra, n_inter)` pairs with the
    /// default sampling rates 1, 1/2, 1/4.
    pub fn from_counts(counts: [(usize, usize); 3]) -> Self {
        let mut stages = [StageSchedule {
            n_intra: 0,
            n_inter: 0,
            rate: SamplingRate::Full,
        }; 3];
        for (i, (a, e)) in counts.into_iter().enumerate() {
            stages[i] = StageSchedule {
                n_intra: a,
                n_inter: e,
                rate: DEFAULT_RATES[i],
            };
        }
        Self {
            stages,
            mode: AttentionMode::Normalized,
        }
    }

    /// No attention at any stage.
    pub fn none() -> Self {
        Self::from_counts([(0, 0); 3])
    }

    /// Ablation presets (a)–(e); intra counts per stage then inter counts per stage.
    /// Row (e) is the default.
    pub fn ablation(row: char) -> Option<Self> {
        let (intra, inter) = match row {
            'a' => ([4, 0, 0], [4, 0, 0]),
            'b' => ([2, 0, 0], [2, 0, 0]),
            'c' => ([1, 2, 0], [2, 1, 0]),
            'd' => ([1, 2, 2], [2, 2, 1]),
            'e' => ([1, 1, 2], [2, 1, 1]),
            _ => return None,
        };
        Some(Self::from_counts([
            (intra[0], inter[0]),
            (intra[1], inter[1]),
            (intra[2], inter[2]),
        ]))
    }

    pub fn stage(&self, stage: usize) -> Result<&StageSchedule> {
        if !(1..=3).contains(&stage) {
            return Err(Error::invalid("amt_stage", format!("unknown stage {stage}")));
        }
        Ok(&self.stages[stage - 1])
    }

    /// Parses `s1=i,j s2=i,j s3=i,j` (any subset; missing stages keep defaults).
    pub fn parse_counts(text: &str) -> Result<Self> {
        let mut sched = Self::default();
        for item in text.split_whitespace() {
            let bad = || Error::Config(format!("bad schedule item '{item}', expected sN=intra,inter"));
            let (key, val) = item.split_once('=').ok_or_else(bad)?;
            let stage: usize = key.strip_prefix('s').and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let (a, e) = val.split_once(',').ok_or_else(bad)?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let e: usize = e.trim().parse().map_err(|_| bad())?;
            if !(1..=3).contains(&stage) {
                return Err(Error::Config(format!("unknown stage s{stage} in schedule")));
            }
            sched.stages[stage - 1].n_intra = a;
            sched.stages[stage - 1].n_inter = e;
        }
        Ok(sched)
    }
}

impl Default for AmtScheduleConfig {
    fn default() -> Self {
        Self::ablation('e').expect("preset exists")
    }
}

/// Weights of all blocks in one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct AmtStageParams {
    pub intra: Vec<AttentionBlockParams>,
    pub inter: Vec<AttentionBlockParams>,
}

/// Weights for all three stages.
#[derive(Clone, Debug, PartialEq)]
pub struct AmtParams {
    pub stages: Vec<AmtStageParams>,
}

impl AmtParams {
    /// Seeded weights sized for `channels[s]` features at stage `s + 1`.
    pub fn seeded(channels: [usize; 3], schedule: &AmtScheduleConfig, rng: &SeededRng, scale: f64) -> Result<Self> {
        let mut stages = Vec::with_capacity(3);
        for (s, st) in schedule.stages.iter().enumerate() {
            let make = |kind: u64, count: usize| -> Result<Vec<AttentionBlockParams>> {
                (0..count)
                    .map(|b| {
                        let label = (s as u64) << 16 | kind << 8 | b as u64;
                        AttentionBlockParams::seeded(channels[s], &mut rng.split(label), scale)
                    })
                    .collect()
            };
            stages.push(AmtStageParams {
                intra: make(1, st.n_intra)?,
                inter: make(2, st.n_inter)?,
            });
        }
        Ok(Self { stages })
    }

    pub fn zeros(channels: [usize; 3], schedule: &AmtScheduleConfig) -> Self {
        let stages = schedule
            .stages
            .iter()
            .enumerate()
            .map(|(s, st)| AmtStageParams {
                intra: vec![AttentionBlockParams::zeros(channels[s]); st.n_intra],
                inter: vec![AttentionBlockParams::zeros(channels[s]); st.n_inter],
            })
            .collect();
        Self { stages }
    }
}

/// Runs one stage of the attention schedule over `features` (index 0 is the
/// reference view, each map `C×H×W`).
///
/// Attention runs at the stage's sampling rate; the change it produces is
/// upsampled bilinearly and added to the full-resolution input. Inter blocks
/// update every source against the reference as it stood at block entry and
/// never touch the reference itself.
pub fn amt_stage(
    features: &[Tensor],
    stage: usize,
    schedule: &AmtScheduleConfig,
    params: &AmtParams,
) -> Result<Vec<Tensor>> {
    let st = schedule.stage(stage)?;
    if features.is_empty() {
        return Err(Error::invalid("amt_stage", "no feature maps"));
    }
    if st.n_intra == 0 && st.n_inter == 0 {
        return Ok(features.to_vec());
    }
    let sp = params
        .stages
        .get(stage - 1)
        .ok_or_else(|| Error::invalid("amt_stage", format!("no parameters for stage {stage}")))?;
    if sp.intra.len() < st.n_intra || sp.inter.len() < st.n_inter {
        return Err(Error::invalid(
            "amt_stage",
            format!("stage {stage} parameters cover fewer blocks than the schedule"),
        ));
    }
    let (_, h, w) = features[0].chw();
    for f in features {
        f.expect_shape("amt_stage", features[0].shape())?;
    }
    let low = (st.rate.reduced(h), st.rate.reduced(w));

    let inputs: Vec<TokenizedFeatureMap> = features
        .par_iter()
        .enumerate()
        .map(|(v, f)| TokenizedFeatureMap::from_feature_map(&bilinear_resize(f, low)?, v))
        .collect::<Result<_>>()?;

    let mut maps = inputs.clone();
    let mode = schedule.mode;
    for b in 0..st.n_intra.max(st.n_inter) {
        if b < st.n_intra {
            maps = maps
                .par_iter()
                .map(|m| intra_attention(m, &sp.intra[b], mode))
                .collect::<Result<_>>()?;
        }
        if b < st.n_inter {
            let reference = maps[0].clone();
            let sources = maps[1..]
                .par_iter()
                .map(|m| inter_attention(m, &reference, &sp.inter[b], mode))
                .collect::<Result<Vec<_>>>()?;
            maps.truncate(1);
            maps.extend(sources);
        }
    }

    features
        .par_iter()
        .zip(maps.par_iter().zip(inputs.par_iter()))
        .map(|(full, (out, inp))| {
            let delta = out.to_feature_map().sub(&inp.to_feature_map())?;
            full.add(&bilinear_resize(&delta, (h, w))?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_init;

    fn views(n: usize, c: usize, hw: usize, seed: u64) -> Vec<Tensor> {
        (0..n)
            .map(|v| seeded_init(&[c, hw, hw], &mut SeededRng::new(seed + v as u64), 2.0).unwrap())
            .collect()
    }

    #[test]
    fn parse_schedule_string() {
        let s = AmtScheduleConfig::parse_counts("s1=1,2 s2=1,1 s3=2,1").unwrap();
        assert_eq!(s, AmtScheduleConfig::default());
        assert!(AmtScheduleConfig::parse_counts("s4=1,1").is_err());
        assert!(AmtScheduleConfig::parse_counts("s1=1").is_err());
    }

    #[test]
    fn default_counts_and_rates() {
        let s = AmtScheduleConfig::default();
        assert_eq!((s.stages[0].n_intra, s.stages[0].n_inter), (1, 2));
        assert_eq!((s.stages[1].n_intra, s.stages[1].n_inter), (1, 1));
        assert_eq!((s.stages[2].n_intra, s.stages[2].n_inter), (2, 1));
        assert_eq!(s.stages.map(|x| x.rate), DEFAULT_RATES);
    }

    #[test]
    fn empty_schedule_is_identity() {
        let f = views(3, 4, 8, 1);
        let s = AmtScheduleConfig::none();
        let p = AmtParams::zeros([4, 4, 4], &s);
        for stage in 1..=3 {
            assert_eq!(amt_stage(&f, stage, &s, &p).unwrap(), f);
        }
    }

    #[test]
    fn zero_weights_are_identity_at_every_rate() {
        let f = views(3, 4, 16, 2);
        let s = AmtScheduleConfig::default();
        let p = AmtParams::zeros([4, 4, 4], &s);
        for stage in 1..=3 {
            assert_eq!(amt_stage(&f, stage, &s, &p).unwrap(), f);
        }
    }

    #[test]
    fn unknown_stage_rejected() {
        let f = views(2, 4, 4, 3);
        let s = AmtScheduleConfig::default();
        let p = AmtParams::zeros([4, 4, 4], &s);
        assert!(amt_stage(&f, 0, &s, &p).is_err());
        assert!(amt_stage(&f, 4, &s, &p).is_err());
    }

    #[test]
    fn reference_ignores_source_content() {
        let s = AmtScheduleConfig::default();
        let p = AmtParams::seeded([4, 4, 4], &s, &SeededRng::new(11), 1.0).unwrap();
        let a = views(3, 4, 16, 20);
        let mut b = views(3, 4, 16, 40);
        b[0] = a[0].clone();
        for stage in 1..=3 {
            let oa = amt_stage(&a, stage, &s, &p).unwrap();
            let ob = amt_stage(&b, stage, &s, &p).unwrap();
            assert_eq!(oa[0], ob[0]);
            assert_ne!(oa[1], ob[1]);
        }
    }

    #[test]
    fn all_ablation_rows_preserve_shapes() {
        for row in ['a', 'b', 'c', 'd', 'e'] {
            let s = AmtScheduleConfig::ablation(row).unwrap();
            let p = AmtParams::seeded([4, 4, 4], &s, &SeededRng::new(3), 1.0).unwrap();
            let f = views(3, 4, 16, 7);
            for stage in 1..=3 {
                let out = amt_stage(&f, stage, &s, &p).unwrap();
                assert_eq!(out.len(), 3);
                assert!(out.iter().all(|t| t.shape() == [4, 16, 16] && t.all_finite()));
            }
        }
    }

    #[test]
    fn result_independent_of_source_order() {
        let s = AmtScheduleConfig::default();
        let p = AmtParams::seeded([4, 4, 4], &s, &SeededRng::new(5), 1.0).unwrap();
        let f = views(3, 4, 8, 30);
        let swapped = vec![f[0].clone(), f[2].clone(), f[1].clone()];
        let a = amt_stage(&f, 1, &s, &p).unwrap();
        let b = amt_stage(&swapped, 1, &s, &p).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[2]);
        assert_eq!(a[2], b[1]);
    }
}
