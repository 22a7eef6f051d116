//! Linear attention and the per-stage interleaved intra/inter attention
//! schedule that enhances reference and source feature maps.

mod amt;
mod blocks;
mod linear;

pub use amt::{amt_stage, AmtParams, AmtScheduleConfig, AmtStageParams, SamplingRate, StageSchedule};
pub use blocks::{inter_attention, intra_attention, AttentionBlockParams, TokenizedFeatureMap};
pub use linear::{linear_attention, quadratic_attention, AttentionMode};
