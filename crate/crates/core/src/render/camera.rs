//! Pinhole camera above the water plane `y = 0`.
//!
//! The camera sits at `(0, height, 0)`. Its tilt is measured from nadir:
//! 0° looks straight down, 90° looks at the horizon along `+z`. Screen `x`
//! runs along world `+x`, screen `y` runs downwards. Pixel `i` spans
//! `[i, i+1)` with its centre at `i + 0.5`.

use thiserror::Error;

use crate::geom::Vec3;
use crate::real::Real;

use super::params::WaterParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("camera height must be positive, got {0}")]
    BelowPlane(f64),
    #[error("no view ray reaches the water plane")]
    AboveHorizon,
    #[error("raster size must be non-zero")]
    ZeroRaster,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel<T> {
    pub height: T,
    pub angle_deg: T,
    pub fov_deg: T,
    pub width: usize,
    pub raster_height: usize,
    forward: Vec3<T>,
    up: Vec3<T>,
    right: Vec3<T>,
    tan_half: T,
    aspect: T,
}

impl<T: Real> CameraModel<T> {
    pub fn new(height: T, angle_deg: T, fov_deg: T, width: usize, raster_height: usize) -> Result<Self, CameraError> {
        if !(height > T::zero()) {
            return Err(CameraError::BelowPlane(height.as_f64()));
        }
        if width == 0 || raster_height == 0 {
            return Err(CameraError::ZeroRaster);
        }
        let (s, c) = angle_deg.to_radians().sin_cos();
        Ok(Self {
            height,
            angle_deg,
            fov_deg,
            width,
            raster_height,
            forward: Vec3::new(T::zero(), -c, s),
            up: Vec3::new(T::zero(), s, c),
            right: Vec3::new(T::one(), T::zero(), T::zero()),
            tan_half: (fov_deg.to_radians() / T::lit(2.0)).tan(),
            aspect: T::lit(width as f64) / T::lit(raster_height as f64),
        })
    }

    pub fn from_params(p: &WaterParams<T>, width: usize, height: usize) -> Result<Self, CameraError> {
        Self::new(p.cam_height, p.cam_angle, p.cam_fov, width, height)
    }

    pub fn position(&self) -> Vec3<T> {
        Vec3::new(T::zero(), self.height, T::zero())
    }

    pub fn forward(&self) -> Vec3<T> {
        self.forward
    }

    pub fn up(&self) -> Vec3<T> {
        self.up
    }

    pub fn right(&self) -> Vec3<T> {
        self.right
    }

    /// Unit view ray through continuous screen position `(sx, sy)` in pixels.
    pub fn ray(&self, sx: T, sy: T) -> Vec3<T> {
        let two = T::lit(2.0);
        let nx = two * sx / T::lit(self.width as f64) - T::one();
        let ny = T::one() - two * sy / T::lit(self.raster_height as f64);
        (self.forward + self.right * (nx * self.tan_half * self.aspect) + self.up * (ny * self.tan_half)).normalize()
    }

    /// Screen position and view depth of a world point, `None` behind the camera.
    pub fn project(&self, p: Vec3<T>) -> Option<(T, T, T)> {
        let d = p - self.position();
        let z = d.dot(self.forward);
        if z <= T::lit(1e-9) {
            return None;
        }
        let nx = d.dot(self.right) / (z * self.tan_half * self.aspect);
        let ny = d.dot(self.up) / (z * self.tan_half);
        let sx = (nx + T::one()) * T::lit(0.5) * T::lit(self.width as f64);
        let sy = (T::one() - ny) * T::lit(0.5) * T::lit(self.raster_height as f64);
        Some((sx, sy, z))
    }

    /// Intersection of a view ray with `y = 0`, `None` when it points at or above the horizon.
    pub fn hit_plane(&self, dir: Vec3<T>) -> Option<Vec3<T>> {
        if dir.y >= -T::lit(1e-9) {
            return None;
        }
        let t = self.height / -dir.y;
        Some(self.position() + dir * t)
    }

    /// Ground point under a screen position.
    pub fn unproject_ground(&self, sx: T, sy: T) -> Option<Vec3<T>> {
        self.hit_plane(self.ray(sx, sy))
    }

    /// Screen row of the horizon (may lie outside the raster).
    pub fn horizon_row(&self) -> T {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        if s <= T::zero() {
            return T::neg_infinity();
        }
        let ny = c / (s * self.tan_half);
        (T::one() - ny) * T::lit(0.5) * T::lit(self.raster_height as f64)
    }

    /// Ground distance covered by one pixel at distance `dist` from the camera.
    pub fn pixel_footprint(&self, dist: T, grazing_cos: T) -> T {
        let per_px = T::lit(2.0) * self.tan_half / T::lit(self.raster_height as f64);
        dist * per_px / grazing_cos.max(T::lit(0.05))
    }
}

/// Screen-uniform mesh projected onto the water plane.
#[derive(Debug, Clone)]
pub struct ProjectedGrid<T> {
    pub cols: usize,
    pub rows: usize,
    /// Screen position of each vertex, row-major.
    pub screen: Vec<(T, T)>,
    /// World position on `y = 0`.
    pub world: Vec<Vec3<T>>,
    /// Whether the vertex ray actually hit the plane (vs pushed to the far horizon).
    pub hit: Vec<bool>,
}

/// Places `cols x rows` vertices uniformly over the raster (corners included)
/// and intersects their rays with the water plane. Rays that miss, or hit
/// beyond `far`, are placed at horizontal distance `far` along their heading.
pub fn project_grid<T: Real>(cam: &CameraModel<T>, cols: usize, rows: usize, far: T) -> Result<ProjectedGrid<T>, CameraError> {
    let cols = cols.max(2);
    let rows = rows.max(2);
    let mut screen = Vec::with_capacity(cols * rows);
    let mut world = Vec::with_capacity(cols * rows);
    let mut hit = Vec::with_capacity(cols * rows);
    let w = T::lit(cam.width as f64);
    let h = T::lit(cam.raster_height as f64);
    for r in 0..rows {
        let sy = h * T::lit(r as f64 / (rows - 1) as f64);
        for c in 0..cols {
            let sx = w * T::lit(c as f64 / (cols - 1) as f64);
            let dir = cam.ray(sx, sy);
            let (p, ok) = match cam.hit_plane(dir) {
                Some(p) if (p.x * p.x + p.z * p.z).sqrt() <= far => (p, true),
                other => {
                    let flat = Vec3::new(dir.x, T::zero(), dir.z);
                    let len = flat.length();
                    let heading = if len > T::zero() { flat / len } else { Vec3::new(T::zero(), T::zero(), T::one()) };
                    (heading * far, other.is_some())
                }
            };
            screen.push((sx, sy));
            world.push(p);
            hit.push(ok);
        }
    }
    if !hit.iter().any(|&b| b) {
        return Err(CameraError::AboveHorizon);
    }
    Ok(ProjectedGrid {
        cols,
        rows,
        screen,
        world,
        hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_ray_at_45_degrees_lands_at_height() {
        let cam = CameraModel::new(10.0f64, 45.0, 60.0, 101, 101).unwrap();
        let p = cam.unproject_ground(50.5, 50.5).unwrap();
        assert!((p.z - 10.0).abs() < 1e-9 && p.x.abs() < 1e-9 && p.y.abs() < 1e-9);
    }

    #[test]
    fn project_inverts_ray() {
        let cam = CameraModel::new(7.0f64, 80.0, 70.0, 320, 200).unwrap();
        for (sx, sy) in [(10.5, 150.5), (300.0, 199.0), (160.0, 120.0)] {
            let p = cam.unproject_ground(sx, sy).unwrap();
            let (px, py, _) = cam.project(p).unwrap();
            assert!((px - sx).abs() < 1e-9 && (py - sy).abs() < 1e-9);
        }
        assert!(cam.project(Vec3::new(0.0, 7.0, -3.0)).is_none());
    }

    #[test]
    fn horizon_row_separates_hits() {
        let cam = CameraModel::new(5.0f64, 90.0, 60.0, 64, 64).unwrap();
        assert!((cam.horizon_row() - 32.0).abs() < 1e-9);
        assert!(cam.unproject_ground(10.0, 31.0).is_none());
        assert!(cam.unproject_ground(10.0, 33.0).is_some());
    }

    #[test]
    fn two_by_two_grid() {
        let cam = CameraModel::new(10.0f64, 45.0, 60.0, 64, 64).unwrap();
        let g = project_grid(&cam, 2, 2, 1e4).unwrap();
        assert_eq!(g.world.len(), 4);
        assert!(g.hit.iter().all(|&h| h));
    }

    #[test]
    fn sky_only_camera_is_rejected() {
        // Looking 30 degrees above the horizon with a narrow field of view.
        let cam = CameraModel::new(10.0f64, 150.0, 45.0, 16, 16).unwrap();
        assert_eq!(project_grid(&cam, 4, 4, 1e4).unwrap_err(), CameraError::AboveHorizon);
    }
}
