use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{look_at, CameraModel};
use crate::numerics::{SeededRng, Tensor};

/// Parameters of a synthetic textured-plane scene. Lengths are millimetres,
/// intensities are on an 8-bit scale (0–255).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Reference plus sources.
    pub views: usize,
    pub focal: f64,
    /// Radius of the ring of source cameras around the reference.
    pub baseline: f64,
    /// Depth of the plane along the reference optical axis.
    pub plane_depth: f64,
    /// Plane normal in reference-camera coordinates (normalised on use).
    pub plane_normal: [f64; 3],
    pub depth_min: f64,
    pub depth_max: f64,
    /// Coarsest lattice spacing of the value-noise texture on the plane.
    pub texture_cell: f64,
    pub texture_octaves: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            views: 3,
            focal: 160.0,
            baseline: 150.0,
            plane_depth: 600.0,
            plane_normal: [0.0, 0.0, 1.0],
            depth_min: 425.0,
            depth_max: 935.0,
            texture_cell: 256.0,
            texture_octaves: 1,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("scene: {m}")));
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(4) || !self.height.is_multiple_of(4) {
            return fail(format!("image {}×{} must be a positive multiple of 4", self.width, self.height));
        }
        if self.views < 2 {
            return fail(format!("need at least 2 views, got {}", self.views));
        }
        if !(self.focal > 0.0 && self.baseline >= 0.0 && self.texture_cell > 0.0) {
            return fail("focal and texture cell must be positive, baseline nonnegative".into());
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max) {
            return fail(format!("depth range ({}, {}) is empty", self.depth_min, self.depth_max));
        }
        if self.texture_octaves == 0 {
            return fail("texture needs at least one octave".into());
        }
        let n = Vector3::from(self.plane_normal);
        if !(n.norm() > 0.0) {
            return fail("plane normal must be nonzero".into());
        }
        Ok(())
    }

    /// Camera rig: the reference at the origin looking down +z, sources on a
    /// circle of radius `baseline` in the z = 0 plane, each aimed at the
    /// point where the reference axis meets the plane. Sources are spread
    /// evenly, except that a pair sits 90° apart rather than opposite so the
    /// two epipolar directions cross.
    pub fn cameras(&self) -> Result<Vec<CameraModel>> {
        let k = Matrix3::new(
            self.focal,
            0.0,
            (self.width as f64 - 1.0) / 2.0,
            0.0,
            self.focal,
            (self.height as f64 - 1.0) / 2.0,
            0.0,
            0.0,
            1.0,
        );
        let range = (self.depth_min, self.depth_max);
        let target = Vector3::new(0.0, 0.0, self.plane_depth);
        let mut cams = vec![CameraModel::new(k, Matrix3::identity(), Vector3::zeros(), range)?];
        let sources = self.views - 1;
        for i in 0..sources {
            let step = if sources == 2 {
                std::f64::consts::FRAC_PI_2
            } else {
                std::f64::consts::TAU / sources as f64
            };
            let a = step * i as f64;
            let c = Vector3::new(self.baseline * a.cos(), self.baseline * a.sin(), 0.0);
            let r = look_at(&c, &target);
            cams.push(CameraModel::new(k, r, -(r * c), range)?);
        }
        Ok(cams)
    }
}

/// Seeded value noise: lattice values blended bilinearly, summed over octaves
/// that halve in cell size and amplitude. The lattice table wraps every 256
/// cells.
///
/// Bilinear rather than a smooth fade on purpose: inside a cell the texture
/// has no curvature along either axis, so bilinear resampling of a rendered
/// view is close to exact and plain per-pixel matching is not swamped by
/// interpolation error at coarse stages.
#[derive(Clone, Debug)]
pub struct ValueNoise {
    table: Vec<f64>,
    cell: f64,
    octaves: usize,
}

const TABLE: usize = 256;

impl ValueNoise {
    pub fn new(seed: u64, cell: f64, octaves: usize) -> Self {
        let mut rng = SeededRng::new(seed).split(0x7e57);
        let table = (0..TABLE * TABLE * octaves).map(|_| rng.next_uniform()).collect();
        Self { table, cell, octaves }
    }

    fn lattice(&self, o: usize, ix: i64, iy: i64) -> f64 {
        let x = ix.rem_euclid(TABLE as i64) as usize;
        let y = iy.rem_euclid(TABLE as i64) as usize;
        self.table[(o * TABLE + y) * TABLE + x]
    }

    /// Intensity in `[0, 255]` at plane coordinates `(u, v)`.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut cell = self.cell;
        for o in 0..self.octaves {
            let (x, y) = (u / cell, v / cell);
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (ix, iy) = (x0 as i64, y0 as i64);
            let top = self.lattice(o, ix, iy) * (1.0 - fx) + self.lattice(o, ix + 1, iy) * fx;
            let bot = self.lattice(o, ix, iy + 1) * (1.0 - fx) + self.lattice(o, ix + 1, iy + 1) * fx;
            total += amp * (top * (1.0 - fy) + bot * fy);
            norm += amp;
            amp *= 0.5;
            cell *= 0.5;
        }
        255.0 * total / norm
    }
}

/// Rendered views of a textured plane with analytic depth.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub cameras: Vec<CameraModel>,
    /// `H×W` intensities per view.
    pub images: Vec<Tensor>,
    /// `H×W` ground-truth depth per view.
    pub gt_depth: Vec<Tensor>,
    /// Unit normal `n` and offset `c` of the plane `n·X = c` (world frame).
    pub plane: (Vector3<f64>, f64),
}

/// Ray–plane intersection depth for pixel `p` of `cam`, if the plane lies in
/// front of the camera along that ray.
pub fn plane_depth_at(cam: &CameraModel, plane: &(Vector3<f64>, f64), p: Vector2<f64>) -> Option<f64> {
    let (n, c) = plane;
    // ray in world frame with unit z in camera coordinates, so the ray
    // parameter is the depth
    let ray = cam.r.transpose() * (cam.k_inv() * Vector3::new(p.x, p.y, 1.0));
    let denom = n.dot(&ray);
    if denom == 0.0 {
        return None;
    }
    let s = (c - n.dot(&cam.center())) / denom;
    (s > 0.0 && s.is_finite()).then_some(s)
}

/// Renders the scene. Texture is a function of world `(x, y)` on the plane,
/// so all views are exactly photoconsistent up to sampling.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let cameras = spec.cameras()?;
    let n = Vector3::from(spec.plane_normal).normalize();
    let plane = (n, n.dot(&Vector3::new(0.0, 0.0, spec.plane_depth)));
    let noise = ValueNoise::new(spec.seed, spec.texture_cell, spec.texture_octaves);
    let (h, w) = (spec.height, spec.width);
    let mut images = Vec::with_capacity(cameras.len());
    let mut gt_depth = Vec::with_capacity(cameras.len());
    for (v, cam) in cameras.iter().enumerate() {
        let mut depth = vec![0.0; h * w];
        let mut image = vec![0.0; h * w];
        for i in 0..h * w {
            let p = Vector2::new((i % w) as f64, (i / w) as f64);
            let d = plane_depth_at(cam, &plane, p).ok_or_else(|| {
                Error::invalid(
                    "generate_scene",
                    format!("plane is behind or parallel to view {v} at pixel ({}, {})", p.x, p.y),
                )
            })?;
            let x = cam.back_project(p, d);
            depth[i] = d;
            image[i] = noise.sample(x.x, x.y);
        }
        images.push(Tensor::new(&[h, w], image)?);
        gt_depth.push(Tensor::new(&[h, w], depth)?);
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        cameras,
        images,
        gt_depth,
        plane,
    })
}
