use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fusion::FusionThresholds;
use super::metrics::DEFAULT_INLIER_THRESHOLD;
use super::scene::SceneSpec;
use crate::attention::{AmtScheduleConfig, AttentionMode, SamplingRate};
use crate::costvolume::FusionMode;
use crate::error::{Error, Result};
use crate::losses::{FmWeightConfig, LossWeights};

/// Network and sweep settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// Hypotheses per stage.
    pub hypotheses: [usize; 3],
    /// Replace the feature pyramid with raw luminance.
    pub identity_features: bool,
    /// `P = softmax(−C)` without the 3-D U-Net.
    pub unet_bypass: bool,
    /// Guided aggregation with the previous stage's cost (stages 2, 3).
    pub dfga: bool,
    /// Strength of the two learned branches relative to the pass-through.
    pub dfga_gain: f64,
    /// How source/reference differences are reduced into a cost.
    pub cost_fusion: FusionMode,
    /// Initialisation scale of the feature pyramid and U-Net.
    pub weight_scale: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            hypotheses: [48, 32, 8],
            identity_features: false,
            unet_bypass: false,
            dfga: true,
            dfga_gain: 0.1,
            cost_fusion: FusionMode::Squared,
            weight_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionSection {
    pub mode: AttentionMode,
    /// `s1=i,j s2=i,j s3=i,j` (intra, inter per stage), a preset letter
    /// `a`–`e`, or `none`.
    pub schedule: String,
    pub rates: [SamplingRate; 3],
    pub weight_scale: f64,
}

impl Default for AttentionSection {
    fn default() -> Self {
        Self {
            mode: AttentionMode::Normalized,
            schedule: "e".into(),
            rates: [SamplingRate::Full, SamplingRate::Half, SamplingRate::Quarter],
            weight_scale: 0.1,
        }
    }
}

impl AttentionSection {
    pub fn schedule(&self) -> Result<AmtScheduleConfig> {
        let text = self.schedule.trim();
        let mut sched = match text {
            "none" => AmtScheduleConfig::none(),
            t if t.len() == 1 => AmtScheduleConfig::ablation(t.chars().next().expect("one char"))
                .ok_or_else(|| Error::Config(format!("unknown schedule preset '{t}'")))?,
            t => AmtScheduleConfig::parse_counts(t)?,
        };
        for (st, rate) in sched.stages.iter_mut().zip(self.rates) {
            st.rate = rate;
        }
        sched.mode = self.mode;
        Ok(sched)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub lambda_ce: Vec<f64>,
    pub lambda_fm: Vec<f64>,
    pub upsilon1: f64,
    pub upsilon2: f64,
    pub eps: f64,
    pub abs_log: bool,
}

impl Default for LossSection {
    fn default() -> Self {
        let w = LossWeights::default();
        let f = FmWeightConfig::default();
        Self {
            lambda_ce: w.lambda_ce,
            lambda_fm: w.lambda_fm,
            upsilon1: f.upsilon1,
            upsilon2: f.upsilon2,
            eps: f.eps,
            abs_log: f.abs_log,
        }
    }
}

impl LossSection {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_ce: self.lambda_ce.clone(),
            lambda_fm: self.lambda_fm.clone(),
        }
    }

    pub fn fm(&self) -> FmWeightConfig {
        FmWeightConfig {
            upsilon1: self.upsilon1,
            upsilon2: self.upsilon2,
            eps: self.eps,
            abs_log: self.abs_log,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub inlier_threshold: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            inlier_threshold: DEFAULT_INLIER_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub scene_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Everything a run needs. Loaded from TOML; unknown keys are errors and
/// missing keys take the defaults shown in `configs/default.toml`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Seeds the texture and every set of network weights.
    pub seed: u64,
    pub scene: SceneSpec,
    pub pipeline: PipelineSection,
    pub attention: AttentionSection,
    pub fusion: FusionThresholds,
    pub losses: LossSection,
    pub evaluation: EvaluationSection,
    pub paths: PathsSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        let p = &self.pipeline;
        if p.hypotheses.iter().any(|&m| m < 2) {
            return Err(Error::Config(format!("pipeline: every stage needs ≥ 2 hypotheses, got {:?}", p.hypotheses)));
        }
        if !(p.dfga_gain >= 0.0) || !(p.weight_scale > 0.0) || !(self.attention.weight_scale > 0.0) {
            return Err(Error::Config("weight scales must be positive and dfga_gain nonnegative".into()));
        }
        self.attention.schedule()?;
        self.fusion.validate()?;
        let w = self.losses.weights();
        w.validate()?;
        if w.lambda_ce.len() != 3 {
            return Err(Error::Config(format!("losses: need 3 per-stage weights, got {}", w.lambda_ce.len())));
        }
        self.losses.fm().validate()?;
        if !(self.evaluation.inlier_threshold > 0.0) {
            return Err(Error::Config("evaluation: inlier_threshold must be positive".into()));
        }
        Ok(())
    }
}
