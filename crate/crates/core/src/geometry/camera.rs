use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Pinhole camera with world-to-camera extrinsics.
///
/// A world point `X` maps to camera coordinates `R·X + t` and to pixels via `K`.
/// Pixel centres sit at integer coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    /// `(d_min, d_max)` in the same unit as `t` (mm in the fixtures).
    pub depth_range: (f64, f64),
}

impl CameraModel {
    pub fn new(
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        depth_range: (f64, f64),
    ) -> Result<Self> {
        let cam = Self {
            k,
            r,
            t,
            depth_range,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let ortho = (self.r.transpose() * self.r - Matrix3::identity()).amax();
        if !(ortho < 1e-9) || !((self.r.determinant() - 1.0).abs() < 1e-9) {
            return Err(Error::invalid(
                "CameraModel",
                format!("rotation is not orthonormal (|RᵀR - I| = {ortho:e})"),
            ));
        }
        let k = &self.k;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::invalid("CameraModel", "intrinsics must be upper-triangular"));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0) {
            return Err(Error::invalid("CameraModel", "intrinsics need a positive diagonal"));
        }
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::invalid(
                "CameraModel",
                format!("depth range ({lo}, {hi}) must satisfy 0 < d_min < d_max"),
            ));
        }
        Ok(())
    }

    /// Pinhole with identity rotation and the given translation.
    pub fn simple(focal: f64, cx: f64, cy: f64, t: Vector3<f64>, depth_range: (f64, f64)) -> Result<Self> {
        let k = Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0);
        Self::new(k, Matrix3::identity(), t, depth_range)
    }

    /// Intrinsics for an image resampled by `factor` (e.g. 0.25 for quarter
    /// resolution), keeping pixel centres aligned: `c' = (c + 0.5)·s - 0.5`.
    pub fn scaled(&self, factor: f64) -> CameraModel {
        let mut k = self.k;
        k[(0, 0)] *= factor;
        k[(0, 1)] *= factor;
        k[(1, 1)] *= factor;
        k[(0, 2)] = (k[(0, 2)] + 0.5) * factor - 0.5;
        k[(1, 2)] = (k[(1, 2)] + 0.5) * factor - 0.5;
        CameraModel { k, ..self.clone() }
    }

    pub fn k_inv(&self) -> Matrix3<f64> {
        // upper-triangular with positive diagonal, always invertible
        self.k.try_inverse().expect("validated intrinsics are invertible")
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.r.transpose() * self.t)
    }

    /// Projects a world point; returns the pixel and the depth along the
    /// optical axis. The pixel is meaningless when the depth is not positive.
    pub fn project(&self, world: &Vector3<f64>) -> (Vector2<f64>, f64) {
        let h = self.k * (self.r * world + self.t);
        (Vector2::new(h.x / h.z, h.y / h.z), h.z)
    }

    /// Lifts pixel `p` at `depth` to world coordinates.
    pub fn back_project(&self, p: Vector2<f64>, depth: f64) -> Vector3<f64> {
        let ray = self.k_inv() * Vector3::new(p.x, p.y, 1.0);
        self.r.transpose() * (ray * depth - self.t)
    }

    /// Depth interval for `count` uniformly spaced hypotheses spanning the range.
    pub fn interval(&self, count: usize) -> f64 {
        (self.depth_range.1 - self.depth_range.0) / (count.max(2) - 1) as f64
    }
}

/// Relative transform taking reference-camera coordinates to source-camera
/// coordinates, folded together with both intrinsics: a reference pixel `p`
/// at depth `d` lands at `d·A·p̃ + b` (homogeneous) in the source image.
#[derive(Clone, Copy, Debug)]
pub struct PairHomography {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
}

impl PairHomography {
    pub fn new(reference: &CameraModel, source: &CameraModel) -> Self {
        let r_rel = source.r * reference.r.transpose();
        let t_rel = source.t - r_rel * reference.t;
        Self {
            a: source.k * r_rel * reference.k_inv(),
            b: source.k * t_rel,
        }
    }

    /// Homogeneous source-image point; `.z` is the depth in the source camera.
    #[inline]
    pub fn apply(&self, x: f64, y: f64, depth: f64) -> Vector3<f64> {
        self.a * Vector3::new(x, y, 1.0) * depth + self.b
    }
}

/// Rotation whose optical axis (+z) points from `eye` towards `target`, with
/// image +y roughly along world +y.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Matrix3<f64> {
    let z = (target - eye).normalize();
    let up = Vector3::new(0.0, 1.0, 0.0);
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    // rows are the camera axes expressed in world coordinates
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}
