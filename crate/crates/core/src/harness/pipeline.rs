use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::cloud::PointCloud;
use super::config::PipelineConfig;
use super::features::{extract_pyramid, FeatureExtractor, FpnParams, STAGE_CHANNELS, STAGE_FACTORS};
use super::fusion::{fuse_all_views, ViewDepth};
use super::io::{read_cam, read_pfm, write_bytes, write_cam, write_pfm, write_ply};
use super::metrics::{evaluate_clouds, MetricsReport};
use super::scene::SyntheticScene;
use crate::attention::{amt_stage, AmtParams, AmtScheduleConfig};
use crate::costvolume::{
    build_feature_volume, dfga, fuse_variance, reference_volume, regularization_scores, wta_depth, CostVolume,
    DepthMap, DfgaParams, ProbabilityVolume, Regularizer, UNetParams,
};
use crate::error::{Error, Result};
use crate::geometry::{make_hypotheses, reproject_round_trip, CameraModel, Refinement};
use crate::losses::{ce_loss_with_grad, feature_metric_weight, fm_loss, one_hot_ground_truth, total_loss, LossValue};
use crate::numerics::{bilinear_resize, softmax_axis, SeededRng, Tensor};

/// Cameras, images and (optionally) ground-truth depth for every view.
#[derive(Clone, Debug)]
pub struct SceneData {
    pub cameras: Vec<CameraModel>,
    pub images: Vec<Tensor>,
    pub gt_depth: Vec<Option<Tensor>>,
}

impl From<&SyntheticScene> for SceneData {
    fn from(s: &SyntheticScene) -> Self {
        Self {
            cameras: s.cameras.clone(),
            images: s.images.clone(),
            gt_depth: s.gt_depth.iter().cloned().map(Some).collect(),
        }
    }
}

fn view_name(v: usize) -> String {
    format!("{v:08}")
}

/// Writes `images/NNNNNNNN.pfm`, `cams/NNNNNNNN_cam.txt` and
/// `depth_gt/NNNNNNNN.pfm` for every view.
pub fn write_scene_dir(scene: &SyntheticScene, dir: &Path) -> Result<()> {
    for v in 0..scene.cameras.len() {
        let name = view_name(v);
        write_pfm(&dir.join("images").join(format!("{name}.pfm")), &scene.images[v])?;
        write_cam(&dir.join("cams").join(format!("{name}_cam.txt")), &scene.cameras[v])?;
        write_pfm(&dir.join("depth_gt").join(format!("{name}.pfm")), &scene.gt_depth[v])?;
    }
    Ok(())
}

/// Reads a directory in the layout of [`write_scene_dir`]. Views are the
/// camera files in name order; ground truth is optional per view.
pub fn load_scene_dir(dir: &Path) -> Result<SceneData> {
    let cam_dir = dir.join("cams");
    let mut names: Vec<String> = std::fs::read_dir(&cam_dir)
        .map_err(|e| Error::io(&cam_dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_cam.txt")).map(String::from))
        .collect();
    names.sort();
    if names.len() < 2 {
        return Err(Error::invalid(
            "load_scene_dir",
            format!("{} holds {} cameras, need at least 2", cam_dir.display(), names.len()),
        ));
    }
    let mut data = SceneData {
        cameras: Vec::new(),
        images: Vec::new(),
        gt_depth: Vec::new(),
    };
    for n in &names {
        data.cameras.push(read_cam(&cam_dir.join(format!("{n}_cam.txt")))?);
        data.images.push(read_pfm(&dir.join("images").join(format!("{n}.pfm")))?);
        let gt = dir.join("depth_gt").join(format!("{n}.pfm"));
        data.gt_depth.push(if gt.exists() { Some(read_pfm(&gt)?) } else { None });
    }
    Ok(data)
}

/// All seeded weights of the network, derived from one seed.
#[derive(Clone, Debug)]
pub struct PipelineModels {
    pub extractor: FeatureExtractor,
    pub schedule: AmtScheduleConfig,
    pub amt: AmtParams,
    /// Guided-aggregation weights for stages 2 and 3.
    pub dfga: Option<[DfgaParams; 2]>,
    pub regularizer: Regularizer,
}

impl PipelineModels {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let root = SeededRng::new(cfg.seed);
        let p = &cfg.pipeline;
        let extractor = if p.identity_features {
            FeatureExtractor::Identity
        } else {
            FeatureExtractor::Fpn(Box::new(FpnParams::seeded(&root.split(1), p.weight_scale)?))
        };
        let schedule = cfg.attention.schedule()?;
        let amt = AmtParams::seeded(STAGE_CHANNELS, &schedule, &root.split(2), cfg.attention.weight_scale)?;
        let m = p.hypotheses;
        let dfga = if p.dfga {
            Some([
                DfgaParams::seeded(m[0], m[1], &root.split(3), p.dfga_gain)?,
                DfgaParams::seeded(m[1], m[2], &root.split(4), p.dfga_gain)?,
            ])
        } else {
            None
        };
        let regularizer = if p.unet_bypass {
            Regularizer::Bypass
        } else {
            Regularizer::UNet(Box::new(UNetParams::seeded(&root.split(5), p.weight_scale)?))
        };
        Ok(Self {
            extractor,
            schedule,
            amt,
            dfga,
            regularizer,
        })
    }
}

/// One stage of one reference view.
#[derive(Clone, Debug)]
pub struct StageResult {
    pub stage: usize,
    pub spacing: f64,
    pub depth: DepthMap,
    pub ce: LossValue,
    pub fm: LossValue,
    /// Pixels with usable ground truth inside the hypothesis window.
    pub valid_pixels: usize,
    /// Per-pixel supervision mask (empty without ground truth).
    pub valid: Vec<bool>,
    /// Ground truth resampled to this stage (absent without ground truth).
    pub gt: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct ViewResult {
    pub view: usize,
    pub stages: Vec<StageResult>,
}

impl ViewResult {
    pub fn last(&self) -> &StageResult {
        self.stages.last().expect("three stages")
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub views: Vec<ViewResult>,
    /// Mean over reference views with supervision, per stage.
    pub stage_ce: [f64; 3],
    pub stage_fm: [f64; 3],
    pub total_loss: f64,
    pub cloud: PointCloud,
    pub gt_cloud: PointCloud,
    pub metrics: Option<MetricsReport>,
}

fn stage_gt(gt: &Tensor, dims: (usize, usize)) -> Result<Tensor> {
    let (h, w) = gt.hw();
    bilinear_resize(&gt.clone().reshape(&[1, h, w])?, dims)?.reshape(&[dims.0, dims.1])
}

fn mean_fm_weight(per_source: &[(Tensor, Vec<bool>)], dims: (usize, usize)) -> Tensor {
    let n = dims.0 * dims.1;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (u, valid) in per_source {
        for i in 0..n {
            if valid[i] {
                sum[i] += u.data()[i];
                count[i] += 1;
            }
        }
    }
    let data = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Tensor::new(&[dims.0, dims.1], data).expect("sized")
}

/// Runs the three coarse-to-fine stages with `reference` as the reference
/// view and every other view (ascending) as a source.
pub fn estimate_view(
    scene: &SceneData,
    pyramids: &[[Tensor; 3]],
    reference: usize,
    models: &PipelineModels,
    cfg: &PipelineConfig,
) -> Result<ViewResult> {
    let order: Vec<usize> = std::iter::once(reference)
        .chain((0..scene.cameras.len()).filter(|&v| v != reference))
        .collect();
    let (h, w) = scene.images[reference].hw();
    let fm_cfg = cfg.losses.fm();
    let mut stages: Vec<StageResult> = Vec::with_capacity(3);
    let mut prev_cost: Option<CostVolume> = None;

    for s in 1..=3 {
        let run = || -> Result<(StageResult, CostVolume)> {
            let factor = STAGE_FACTORS[s - 1];
            let dims = (h / factor, w / factor);
            let cams: Vec<CameraModel> = order.iter().map(|&v| scene.cameras[v].scaled(1.0 / factor as f64)).collect();
            let feats: Vec<Tensor> = order.iter().map(|&v| pyramids[v][s - 1].clone()).collect();
            let enhanced = amt_stage(&feats, s, &models.schedule, &models.amt)?;

            let refine = stages.last().map(|p: &StageResult| Refinement {
                prev_depth: &p.depth.depth,
                prev_spacing: p.spacing,
            });
            let hyps = make_hypotheses(s, &cams[0], cfg.pipeline.hypotheses[s - 1], dims, refine)?;

            let mut volumes = vec![reference_volume(&enhanced[0], &hyps)?];
            let sources: Vec<_> = (1..order.len())
                .into_par_iter()
                .map(|j| build_feature_volume(&enhanced[j], &cams[0], &cams[j], &hyps, order[j]))
                .collect::<Result<_>>()?;
            volumes.extend(sources);
            let mut cost = fuse_variance(&volumes, cfg.pipeline.cost_fusion, s)?;
            if let (Some(params), Some(prev)) = (&models.dfga, &prev_cost) {
                cost = dfga(&cost, prev, &params[s - 2])?;
            }

            let scores = regularization_scores(&cost, &models.regularizer)?;
            let prob = ProbabilityVolume {
                data: softmax_axis(&scores, 0)?,
            };
            let depth = wta_depth(&prob, &hyps)?;

            let empty = LossValue {
                value: 0.0,
                empty_mask: true,
            };
            let mut result = StageResult {
                stage: s,
                spacing: hyps.spacing,
                depth,
                ce: empty,
                fm: empty,
                valid_pixels: 0,
                valid: Vec::new(),
                gt: None,
            };
            if let Some(gt_full) = &scene.gt_depth[reference] {
                let gt = stage_gt(gt_full, dims)?;
                let mask: Vec<bool> = gt.data().iter().map(|d| d.is_finite() && *d > 0.0).collect();
                let bundle = one_hot_ground_truth(&gt, &mask, &hyps)?;
                result.ce = ce_loss_with_grad(&scores, &bundle)?.0;

                let mut weights = Vec::new();
                for (j, &v) in order.iter().enumerate().skip(1) {
                    if let Some(src_gt) = &scene.gt_depth[v] {
                        let src_gt = stage_gt(src_gt, dims)?;
                        let chain = reproject_round_trip(&cams[0], &cams[j], &result.depth.depth, &src_gt);
                        let u = feature_metric_weight(&feats[0], &enhanced[0], &chain, &fm_cfg)?;
                        weights.push((u, chain.valid));
                    }
                }
                let upsilon = mean_fm_weight(&weights, dims);
                result.fm = fm_loss(&result.depth.depth, &gt, &upsilon, &bundle.valid)?.0;
                result.valid_pixels = bundle.valid_count();
                result.valid = bundle.valid;
                result.gt = Some(gt);
            }
            Ok((result, cost))
        };
        let (result, cost) = run().map_err(|e| e.at_stage(s))?;
        stages.push(result);
        prev_cost = Some(cost);
    }
    Ok(ViewResult {
        view: reference,
        stages,
    })
}

/// Depth for every view as reference, fused into a cloud, with per-stage
/// losses and (when ground truth exists) cloud metrics.
pub fn run_pipeline(scene: &SceneData, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let n = scene.cameras.len();
    if n < 2 || scene.images.len() != n || scene.gt_depth.len() != n {
        return Err(Error::invalid(
            "run_pipeline",
            format!("need ≥ 2 views with one image each, got {n} cameras and {} images", scene.images.len()),
        ));
    }
    let models = PipelineModels::from_config(cfg)?;
    let pyramids: Vec<[Tensor; 3]> = scene
        .images
        .par_iter()
        .map(|img| extract_pyramid(img, &models.extractor))
        .collect::<Result<_>>()?;
    let views: Vec<ViewResult> = (0..n)
        .into_par_iter()
        .map(|r| estimate_view(scene, &pyramids, r, &models, cfg))
        .collect::<Result<_>>()?;

    let mut stage_ce = [0.0; 3];
    let mut stage_fm = [0.0; 3];
    for s in 0..3 {
        let supervised: Vec<&StageResult> = views.iter().map(|v| &v.stages[s]).filter(|r| !r.ce.empty_mask).collect();
        if !supervised.is_empty() {
            let k = supervised.len() as f64;
            stage_ce[s] = supervised.iter().map(|r| r.ce.value).sum::<f64>() / k;
            stage_fm[s] = supervised.iter().map(|r| r.fm.value).sum::<f64>() / k;
        }
    }
    let pairs: Vec<(f64, f64)> = (0..3).map(|s| (stage_ce[s], stage_fm[s])).collect();
    let total = total_loss(&pairs, &cfg.losses.weights())?;

    let view_depths: Vec<ViewDepth> = views
        .iter()
        .map(|v| ViewDepth {
            depth: &v.last().depth.depth,
            confidence: &v.last().depth.confidence,
            camera: &scene.cameras[v.view],
        })
        .collect();
    let cloud = fuse_all_views(&view_depths, &cfg.fusion)?;

    let mut gt_cloud = PointCloud::default();
    for (v, gt) in scene.gt_depth.iter().enumerate() {
        if let Some(gt) = gt {
            gt_cloud.extend(PointCloud::from_depth(gt, &scene.cameras[v])?);
        }
    }
    let metrics = if cloud.is_empty() || gt_cloud.is_empty() {
        log::warn!("skipping cloud metrics: {} fused points, {} ground-truth points", cloud.len(), gt_cloud.len());
        None
    } else {
        Some(evaluate_clouds(&cloud, &gt_cloud, cfg.evaluation.inlier_threshold)?)
    };
    Ok(PipelineOutput {
        views,
        stage_ce,
        stage_fm,
        total_loss: total,
        cloud,
        gt_cloud,
        metrics,
    })
}

#[derive(Serialize)]
struct StageReport {
    stage: usize,
    ce: f64,
    fm: f64,
    valid_pixels: usize,
}

#[derive(Serialize)]
struct ViewReport {
    view: usize,
    stages: Vec<StageReport>,
}

#[derive(Serialize)]
struct Report<'a> {
    views: usize,
    stage_ce: [f64; 3],
    stage_fm: [f64; 3],
    total_loss: f64,
    points: usize,
    metrics: Option<&'a MetricsReport>,
    per_view: Vec<ViewReport>,
}

/// The line-oriented `key = value` report. Floats use shortest round-trip
/// formatting so totals can be recombined exactly from the per-stage lines.
pub fn format_report(out: &PipelineOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "views = {}", out.views.len());
    for st in 0..3 {
        let _ = writeln!(s, "stage{}.ce = {}", st + 1, out.stage_ce[st]);
        let _ = writeln!(s, "stage{}.fm = {}", st + 1, out.stage_fm[st]);
    }
    let _ = writeln!(s, "total_loss = {}", out.total_loss);
    let _ = writeln!(s, "points = {}", out.cloud.len());
    if let Some(m) = &out.metrics {
        let _ = writeln!(s, "accuracy = {}", m.accuracy);
        let _ = writeln!(s, "completeness = {}", m.completeness);
        let _ = writeln!(s, "overall = {}", m.overall);
        let _ = writeln!(s, "inlier_threshold = {}", m.inlier_threshold);
    }
    for v in &out.views {
        for r in &v.stages {
            let _ = writeln!(s, "view{}.stage{}.ce = {}", v.view, r.stage, r.ce.value);
            let _ = writeln!(s, "view{}.stage{}.fm = {}", v.view, r.stage, r.fm.value);
            let _ = writeln!(s, "view{}.stage{}.valid_pixels = {}", v.view, r.stage, r.valid_pixels);
        }
    }
    s
}

pub fn report_json(out: &PipelineOutput) -> String {
    let report = Report {
        views: out.views.len(),
        stage_ce: out.stage_ce,
        stage_fm: out.stage_fm,
        total_loss: out.total_loss,
        points: out.cloud.len(),
        metrics: out.metrics.as_ref(),
        per_view: out
            .views
            .iter()
            .map(|v| ViewReport {
                view: v.view,
                stages: v
                    .stages
                    .iter()
                    .map(|r| StageReport {
                        stage: r.stage,
                        ce: r.ce.value,
                        fm: r.fm.value,
                        valid_pixels: r.valid_pixels,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&report).expect("report serialises")
}

/// Writes depth maps per view and stage, final confidences, the fused cloud
/// and both reports. Returns the files written, in order.
pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for v in &out.views {
        let name = view_name(v.view);
        for r in &v.stages {
            let p = dir.join("depth").join(format!("{name}_stage{}.pfm", r.stage));
            write_pfm(&p, &r.depth.depth)?;
            written.push(p);
        }
        let p = dir.join("confidence").join(format!("{name}.pfm"));
        write_pfm(&p, &v.last().depth.confidence)?;
        written.push(p);
    }
    let ply = dir.join("cloud.ply");
    write_ply(&ply, &out.cloud)?;
    written.push(ply);
    let txt = dir.join("report.txt");
    write_bytes(&txt, format_report(out).as_bytes())?;
    written.push(txt);
    let json = dir.join("report.json");
    write_bytes(&json, report_json(out).as_bytes())?;
    written.push(json);
    Ok(written)
}
