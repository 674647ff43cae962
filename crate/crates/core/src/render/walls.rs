//! Vertical wall proxies erected along the water boundary.

use crate::geom::Vec3;
use crate::raster::WaterMask;
use crate::real::Real;

use super::camera::CameraModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPoint<T> {
    pub px: usize,
    pub py: usize,
    /// Foot of the wall on `y = 0`.
    pub base: Vec3<T>,
}

/// Boundary pixels (water with a non-water 4-neighbour) and their ground
/// positions. Boundary pixels above the horizon have no ground point and are
/// left out.
#[derive(Debug, Clone)]
pub struct WallProxyMap<T> {
    pub width: usize,
    pub height: usize,
    pub points: Vec<WallPoint<T>>,
    index: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl<T: Real> WallProxyMap<T> {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn at(&self, x: usize, y: usize) -> Option<&WallPoint<T>> {
        if x >= self.width || y >= self.height {
            return None;
        }
        match self.index[y * self.width + x] {
            NONE => None,
            i => Some(&self.points[i as usize]),
        }
    }
}

pub fn is_boundary<T: Real>(mask: &WaterMask<T>, x: usize, y: usize) -> bool {
    if !mask.is_water(x, y) {
        return false;
    }
    let (w, h) = mask.dims();
    (x > 0 && !mask.is_water(x - 1, y))
        || (x + 1 < w && !mask.is_water(x + 1, y))
        || (y > 0 && !mask.is_water(x, y - 1))
        || (y + 1 < h && !mask.is_water(x, y + 1))
}

pub fn build_walls<T: Real>(mask: &WaterMask<T>, cam: &CameraModel<T>) -> WallProxyMap<T> {
    let (w, h) = mask.dims();
    let mut points = Vec::new();
    let mut index = vec![NONE; w * h];
    let sx = T::lit(cam.width as f64 / w as f64);
    let sy = T::lit(cam.raster_height as f64 / h as f64);
    let half = T::lit(0.5);
    for y in 0..h {
        for x in 0..w {
            if !is_boundary(mask, x, y) {
                continue;
            }
            let u = (T::lit(x as f64) + half) * sx;
            let v = (T::lit(y as f64) + half) * sy;
            if let Some(base) = cam.unproject_ground(u, v) {
                index[y * w + x] = points.len() as u32;
                points.push(WallPoint { px: x, py: y, base });
            }
        }
    }
    WallProxyMap {
        width: w,
        height: h,
        points,
        index,
    }
}
