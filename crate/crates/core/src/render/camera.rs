use crate::error::{Error, Result};
use crate::grid::Shape;

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Pinhole camera. World space coincides with voxel space: the grid spans
/// `[0, h-1] x [0, w-1] x [0, k-1]`.
///
/// `rotation` maps camera to world coordinates; its columns are the camera
/// right, down and forward axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub rotation: [[f64; 3]; 3],
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        position: Vec3,
        rotation: [[f64; 3]; 3],
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::InvalidConfig(format!("focal length {focal} must be > 0")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig("image must have at least one pixel".into()));
        }
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("camera position".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let col_dot: f64 = (0..3).map(|r| rotation[r][i] * rotation[r][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (col_dot - expect).abs() > 1e-6 {
                    return Err(Error::InvalidConfig("camera rotation is not orthonormal".into()));
                }
            }
        }
        Ok(Self {
            position,
            rotation,
            focal,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`. `up` only needs to be non-parallel
    /// to the view direction.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let fwd = normalize([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]]);
        let mut right = cross(fwd, up);
        if dot(right, right) < 1e-12 {
            // up parallel to the view direction; pick any perpendicular axis
            let alt = if fwd[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            right = cross(fwd, alt);
        }
        let right = normalize(right);
        let down = cross(fwd, right);
        let rotation = [
            [right[0], down[0], fwd[0]],
            [right[1], down[1], fwd[1]],
            [right[2], down[2], fwd[2]],
        ];
        Self::new(eye, rotation, focal, width, height)
    }

    /// Camera on a sphere of `radius` around the centre of `shape`, looking at
    /// the centre from unit direction `dir`, with a field of view that just
    /// encloses the grid's bounding sphere.
    pub fn orbit(shape: Shape, dir: Vec3, radius_factor: f64, resolution: usize) -> Result<Self> {
        let center = grid_center(shape);
        let half_diag = grid_half_diagonal(shape);
        let radius = radius_factor * half_diag;
        let d = normalize(dir);
        let eye = [
            center[0] + radius * d[0],
            center[1] + radius * d[1],
            center[2] + radius * d[2],
        ];
        let half_angle = (half_diag / radius).clamp(-1.0, 1.0).asin();
        let focal = 0.5 * resolution as f64 / half_angle.tan();
        Self::look_at(eye, center, [0.0, 0.0, 1.0], focal, resolution, resolution)
    }

    /// Ray through the centre of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Ray {
        let cx = (u as f64 + 0.5 - 0.5 * self.width as f64) / self.focal;
        let cy = (v as f64 + 0.5 - 0.5 * self.height as f64) / self.focal;
        let cam = [cx, cy, 1.0];
        let r = &self.rotation;
        let d = normalize([dot(r[0], cam), dot(r[1], cam), dot(r[2], cam)]);
        Ray {
            origin: self.position,
            direction: d,
            t_near: 0.0,
            t_far: f64::INFINITY,
        }
    }
}

pub fn grid_center(shape: Shape) -> Vec3 {
    [
        (shape.h - 1) as f64 * 0.5,
        (shape.w - 1) as f64 * 0.5,
        (shape.k - 1) as f64 * 0.5,
    ]
}

pub fn grid_half_diagonal(shape: Shape) -> f64 {
    let c = grid_center(shape);
    dot(c, c).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64) -> Result<Self> {
        let len = dot(direction, direction).sqrt();
        if (len - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!("ray direction has length {len}")));
        }
        if !(t_near >= 0.0 && t_near < t_far) {
            return Err(Error::InvalidConfig(format!(
                "ray interval [{t_near}, {t_far}] is empty"
            )));
        }
        Ok(Self {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        [
            self.origin[0] + t * self.direction[0],
            self.origin[1] + t * self.direction[1],
            self.origin[2] + t * self.direction[2],
        ]
    }

    /// Intersection of the ray interval with the grid box, if non-empty.
    pub fn clip_to_grid(&self, shape: Shape) -> Option<(f64, f64)> {
        let hi = [
            (shape.h - 1) as f64,
            (shape.w - 1) as f64,
            (shape.k - 1) as f64,
        ];
        let mut t0 = self.t_near;
        let mut t1 = self.t_far;
        for a in 0..3 {
            let o = self.origin[a];
            let d = self.direction[a];
            if d == 0.0 {
                if o < 0.0 || o > hi[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut ta, mut tb) = ((0.0 - o) * inv, (hi[a] - o) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 < t1).then_some((t0, t1))
    }
}
