use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{sample_depth, CameraModel};
use crate::numerics::Tensor;

/// Geometric-consistency thresholds for depth-map fusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionThresholds {
    pub min_confidence: f64,
    /// Source views that must agree with the reference.
    pub min_consistent: usize,
    /// Round-trip reprojection error, pixels.
    pub max_reprojection: f64,
    /// `|d'' − d| / d`.
    pub max_relative_depth: f64,
}

impl Default for FusionThresholds {
    fn default() -> Self {
        Self {
            min_confidence: 0.3,
            min_consistent: 2,
            max_reprojection: 1.0,
            max_relative_depth: 0.01,
        }
    }
}

impl FusionThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_reprojection > 0.0 && self.max_relative_depth > 0.0) || self.min_consistent == 0 {
            return Err(Error::Config("fusion thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// One view's estimate: `H×W` depth and confidence plus its camera.
#[derive(Clone, Copy, Debug)]
pub struct ViewDepth<'a> {
    pub depth: &'a Tensor,
    pub confidence: &'a Tensor,
    pub camera: &'a CameraModel,
}

/// Projects reference pixel `p` at depth `d` into `src`, lifts it with the
/// source's own depth there and brings it back. Returns the reprojected
/// reference depth when the round trip passes both thresholds.
fn check_source(p: Vector2<f64>, d: f64, reference: &ViewDepth<'_>, src: &ViewDepth<'_>, th: &FusionThresholds) -> Option<f64> {
    let world = reference.camera.back_project(p, d);
    let (q, z) = src.camera.project(&world);
    if !(z > 0.0) {
        return None;
    }
    let d_src = sample_depth(src.depth, q.x, q.y)?;
    let back = src.camera.back_project(q, d_src);
    let (p2, d2) = reference.camera.project(&back);
    if !(d2 > 0.0) {
        return None;
    }
    let reproj = (p2 - p).norm();
    let rel = (d2 - d).abs() / d;
    (reproj < th.max_reprojection && rel < th.max_relative_depth).then_some(d2)
}

/// Fuses `views[0]` (the reference) against the remaining views. A pixel is
/// kept when its confidence reaches the threshold and enough sources agree;
/// its depth is the mean of the reference depth and the agreeing reprojected
/// depths, lifted back into the world.
pub fn fuse_depth_maps(views: &[ViewDepth<'_>], th: &FusionThresholds) -> Result<PointCloud> {
    th.validate()?;
    if views.len() < 2 {
        return Err(Error::invalid(
            "fuse_depth_maps",
            format!("need a reference and at least one source, got {} views", views.len()),
        ));
    }
    for v in views {
        v.depth.expect_ndim("fuse_depth_maps", 2)?;
        v.confidence.expect_shape("fuse_depth_maps", v.depth.shape())?;
    }
    let reference = &views[0];
    let (h, w) = reference.depth.hw();
    let rows: Vec<Vec<(nalgebra::Vector3<f64>, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::new();
            for x in 0..w {
                let i = y * w + x;
                let d = reference.depth.data()[i];
                let conf = reference.confidence.data()[i];
                if !(d > 0.0) || !(conf >= th.min_confidence) {
                    continue;
                }
                let p = Vector2::new(x as f64, y as f64);
                let agreeing: Vec<f64> = views[1..]
                    .iter()
                    .filter_map(|s| check_source(p, d, reference, s, th))
                    .collect();
                if agreeing.len() < th.min_consistent {
                    continue;
                }
                let mean = (d + agreeing.iter().sum::<f64>()) / (agreeing.len() + 1) as f64;
                row.push((reference.camera.back_project(p, mean), conf));
            }
            row
        })
        .collect();
    let (points, conf): (Vec<_>, Vec<_>) = rows.into_iter().flatten().unzip();
    Ok(PointCloud {
        points,
        confidence: Some(conf),
    })
}

/// Runs [`fuse_depth_maps`] with every view in turn as the reference (others
/// in ascending order as sources) and concatenates the clouds.
pub fn fuse_all_views(views: &[ViewDepth<'_>], th: &FusionThresholds) -> Result<PointCloud> {
    let mut cloud = PointCloud {
        points: Vec::new(),
        confidence: Some(Vec::new()),
    };
    for r in 0..views.len() {
        let mut order = vec![views[r]];
        order.extend(views.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, v)| *v));
        cloud.extend(fuse_depth_maps(&order, th)?);
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use nalgebra::{Matrix3, Vector3};

    fn ring(n: usize) -> Vec<CameraModel> {
        let k = Matrix3::new(80.0, 0.0, 15.5, 0.0, 80.0, 15.5, 0.0, 0.0, 1.0);
        let mut cams = vec![CameraModel::new(k, Matrix3::identity(), Vector3::zeros(), (425.0, 935.0)).unwrap()];
        for i in 1..n {
            let a = std::f64::consts::TAU * (i - 1) as f64 / (n - 1) as f64;
            let c = Vector3::new(150.0 * a.cos(), 150.0 * a.sin(), 0.0);
            let r = look_at(&c, &Vector3::new(0.0, 0.0, 600.0));
            cams.push(CameraModel::new(k, r, -(r * c), (425.0, 935.0)).unwrap());
        }
        cams
    }

    /// Depth of the plane z = 600 seen by `cam` at every pixel.
    fn plane_depth(cam: &CameraModel) -> Tensor {
        let c = cam.center();
        Tensor::from_fn(&[32, 32], |i| {
            let ray = cam.r.transpose() * cam.k_inv() * Vector3::new((i % 32) as f64, (i / 32) as f64, 1.0);
            (600.0 - c.z) / ray.z
        })
    }

    #[test]
    fn consistent_depths_land_on_plane() {
        let cams = ring(4);
        let depths: Vec<Tensor> = cams.iter().map(plane_depth).collect();
        let conf = Tensor::full(&[32, 32], 1.0);
        let views: Vec<ViewDepth> = (0..4).map(|i| ViewDepth { depth: &depths[i], confidence: &conf, camera: &cams[i] }).collect();
        let cloud = fuse_depth_maps(&views, &FusionThresholds::default()).unwrap();
        assert!(cloud.len() > 900);
        for p in &cloud.points {
            assert!((p.z - 600.0).abs() < 0.5);
        }
    }

    #[test]
    fn zero_confidence_gives_empty_cloud() {
        let cams = ring(3);
        let depths: Vec<Tensor> = cams.iter().map(plane_depth).collect();
        let conf = Tensor::zeros(&[32, 32]);
        let views: Vec<ViewDepth> = (0..3).map(|i| ViewDepth { depth: &depths[i], confidence: &conf, camera: &cams[i] }).collect();
        assert!(fuse_all_views(&views, &FusionThresholds::default()).unwrap().is_empty());
    }

    #[test]
    fn emitted_points_reproject_within_threshold() {
        let cams = ring(3);
        let mut depths: Vec<Tensor> = cams.iter().map(plane_depth).collect();
        // bias one source so some pixels fail
        depths[1] = depths[1].map(|d| d * 1.004);
        let conf = Tensor::full(&[32, 32], 1.0);
        let views: Vec<ViewDepth> = (0..3).map(|i| ViewDepth { depth: &depths[i], confidence: &conf, camera: &cams[i] }).collect();
        let th = FusionThresholds { min_consistent: 1, ..Default::default() };
        let cloud = fuse_depth_maps(&views, &th).unwrap();
        assert!(!cloud.is_empty());
        for p in &cloud.points {
            let (q, _) = cams[0].project(p);
            let (x, y) = (q.x.round(), q.y.round());
            assert!((q - Vector2::new(x, y)).norm() < th.max_reprojection);
        }
    }
}
