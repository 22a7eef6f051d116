//! Synthetic scenes, the feature-pyramid stand-in, file formats, depth-map
//! fusion, cloud metrics, configuration and the end-to-end pipeline.

mod cloud;
mod config;
mod features;
mod fusion;
mod io;
mod metrics;
mod pipeline;
mod scene;

pub use cloud::PointCloud;
pub use config::{AttentionSection, EvaluationSection, LossSection, PathsSection, PipelineConfig, PipelineSection};
pub use features::{extract_features, extract_pyramid, FeatureExtractor, FpnParams, STAGE_CHANNELS, STAGE_FACTORS};
pub use fusion::{fuse_all_views, fuse_depth_maps, FusionThresholds, ViewDepth};
pub use io::{
    decode_pfm, decode_ply, encode_pfm, encode_ply, format_cam, parse_cam, read_cam, read_pfm, read_ply, write_cam,
    write_pfm, write_ply, DEFAULT_STAGE1_HYPOTHESES,
};
pub use metrics::{evaluate_clouds, MetricsReport, DEFAULT_INLIER_THRESHOLD};
pub use pipeline::{
    estimate_view, format_report, load_scene_dir, report_json, run_pipeline, write_outputs, write_scene_dir,
    PipelineModels, PipelineOutput, SceneData, StageResult, ViewResult,
};
pub use scene::{generate_scene, plane_depth_at, SceneSpec, SyntheticScene, ValueNoise};
