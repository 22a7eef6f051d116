use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use crate::error::{Error, Result};

/// Default outlier cut-off in millimetres.
pub const DEFAULT_INLIER_THRESHOLD: f64 = 20.0;

/// Accuracy, completeness and their mean, all in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub completeness: f64,
    pub overall: f64,
    pub inlier_threshold: f64,
}

type Cell = (i64, i64, i64);

/// Uniform hash grid with cells as wide as the search radius, so every
/// neighbour within the radius lies in the 27 cells around the query.
struct Grid<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { points, cell, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> Cell {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Distance to the nearest point if it is within the cell width.
    fn nearest_within(&self, q: &Vector3<f64>) -> Option<f64> {
        let (cx, cy, cz) = Self::key(q, self.cell);
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            best = best.min(distance(q, &self.points[i]));
                        }
                    }
                }
            }
        }
        (best <= self.cell).then_some(best)
    }
}

#[inline]
pub(crate) fn distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = a - b;
    (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
}

/// Mean inlier distance from each query point to its nearest target, or the
/// threshold itself when no query point has a target within range.
fn directed(queries: &[Vector3<f64>], grid: &Grid<'_>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for q in queries {
        if let Some(d) = grid.nearest_within(q) {
            sum += d;
            count += 1;
        }
    }
    if count == 0 {
        grid.cell
    } else {
        sum / count as f64
    }
}

/// Accuracy (prediction → ground truth), completeness (ground truth →
/// prediction) and overall = their mean. Nearest-neighbour distances above
/// `inlier_threshold` are treated as outliers and left out of the means.
pub fn evaluate_clouds(pred: &PointCloud, gt: &PointCloud, inlier_threshold: f64) -> Result<MetricsReport> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::invalid(
            "evaluate_clouds",
            format!("clouds must be non-empty (pred {}, gt {})", pred.len(), gt.len()),
        ));
    }
    if !(inlier_threshold > 0.0 && inlier_threshold.is_finite()) {
        return Err(Error::invalid("evaluate_clouds", "inlier threshold must be positive"));
    }
    pred.validate()?;
    gt.validate()?;
    let accuracy = directed(&pred.points, &Grid::new(&gt.points, inlier_threshold));
    let completeness = directed(&gt.points, &Grid::new(&pred.points, inlier_threshold));
    Ok(MetricsReport {
        accuracy,
        completeness,
        overall: (accuracy + completeness) / 2.0,
        inlier_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_clouds_score_zero() {
        let c = PointCloud::new(vec![Vector3::new(0.0, 0.0, 600.0), Vector3::new(5.0, 1.0, 610.0)]);
        let m = evaluate_clouds(&c, &c, DEFAULT_INLIER_THRESHOLD).unwrap();
        assert_eq!((m.accuracy, m.completeness, m.overall), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_point_at_three_mm() {
        let a = PointCloud::new(vec![Vector3::new(0.0, 0.0, 600.0)]);
        let b = PointCloud::new(vec![Vector3::new(0.0, 3.0, 600.0)]);
        let m = evaluate_clouds(&a, &b, 20.0).unwrap();
        assert_eq!((m.accuracy, m.completeness, m.overall), (3.0, 3.0, 3.0));
    }

    #[test]
    fn outliers_are_dropped_and_swap_is_symmetric() {
        let a = PointCloud::new(vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(100.0, 0.0, 0.0)]);
        let b = PointCloud::new(vec![Vector3::new(4.0, 0.0, 0.0)]);
        let ab = evaluate_clouds(&a, &b, 20.0).unwrap();
        assert_eq!(ab.accuracy, 4.0);
        let ba = evaluate_clouds(&b, &a, 20.0).unwrap();
        assert_eq!((ab.accuracy, ab.completeness), (ba.completeness, ba.accuracy));
    }

    #[test]
    fn no_inliers_reports_threshold() {
        let a = PointCloud::new(vec![Vector3::zeros()]);
        let b = PointCloud::new(vec![Vector3::new(0.0, 0.0, 50.0)]);
        assert_eq!(evaluate_clouds(&a, &b, 20.0).unwrap().overall, 20.0);
    }

    #[test]
    fn rejects_empty() {
        let a = PointCloud::new(vec![Vector3::zeros()]);
        assert!(evaluate_clouds(&a, &PointCloud::default(), 20.0).is_err());
        assert!(evaluate_clouds(&PointCloud::default(), &a, 20.0).is_err());
    }
}
