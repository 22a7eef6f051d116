use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::numerics::Tensor;

/// A set of 3-D points in world millimetres.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub confidence: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            confidence: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("PointCloud", format!("point {i} is not finite")));
        }
        if let Some(c) = &self.confidence {
            if c.len() != self.points.len() {
                return Err(Error::shape("PointCloud", &[self.points.len()], &[c.len()]));
            }
        }
        Ok(())
    }

    /// Lifts every pixel with a positive, finite depth.
    pub fn from_depth(depth: &Tensor, camera: &CameraModel) -> Result<Self> {
        depth.expect_ndim("PointCloud::from_depth", 2)?;
        let (_, w) = depth.hw();
        let points = depth
            .data()
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_finite() && **d > 0.0)
            .map(|(i, &d)| camera.back_project(nalgebra::Vector2::new((i % w) as f64, (i / w) as f64), d))
            .collect();
        Ok(Self::new(points))
    }

    pub fn extend(&mut self, other: PointCloud) {
        match (&mut self.confidence, other.confidence) {
            (Some(a), Some(b)) => a.extend(b),
            (a, _) => *a = None,
        }
        self.points.extend(other.points);
    }
}
