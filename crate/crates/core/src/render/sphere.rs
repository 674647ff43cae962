//! Synthetic spheres placed in the water scene.

use crate::geom::Vec3;
use crate::real::Real;

use super::params::WaterParams;
use super::shade::sh_irradiance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere<T> {
    pub center: Vec3<T>,
    pub radius: T,
    pub albedo: [T; 3],
}

/// Nearest positive ray parameter for a unit direction, if any.
pub fn ray_sphere<T: Real>(origin: Vec3<T>, dir: Vec3<T>, s: &Sphere<T>) -> Option<T> {
    let oc = origin - s.center;
    let b = oc.dot(dir);
    let c = oc.dot(oc) - s.radius * s.radius;
    let disc = b * b - c;
    if disc < T::zero() {
        return None;
    }
    let root = disc.sqrt();
    let eps = T::lit(1e-9);
    let t0 = -b - root;
    if t0 > eps {
        return Some(t0);
    }
    let t1 = -b + root;
    (t1 > eps).then_some(t1)
}

/// Closest hit over a set of spheres: `(t, sphere index)`.
pub fn nearest_hit<T: Real>(origin: Vec3<T>, dir: Vec3<T>, spheres: &[Sphere<T>]) -> Option<(T, usize)> {
    spheres
        .iter()
        .enumerate()
        .filter_map(|(i, s)| ray_sphere(origin, dir, s).map(|t| (t, i)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
}

/// Diffuse SH shading of a sphere surface point.
pub fn sphere_color<T: Real>(s: &Sphere<T>, p: Vec3<T>, params: &WaterParams<T>) -> [T; 3] {
    let n = (p - s.center).normalize();
    let e = sh_irradiance(&params.sh_l0, &params.sh_l1, n);
    [
        (s.albedo[0] * e[0]).clamp01(),
        (s.albedo[1] * e[1]).clamp01(),
        (s.albedo[2] * e[2]).clamp01(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_hit() {
        let s = Sphere {
            center: Vec3::zero(),
            radius: 1.0f64,
            albedo: [1.0; 3],
        };
        let t = ray_sphere(Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.0, 0.0, 1.0), &s).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        let hit = Vec3::new(0.0, 0.0, -5.0) + Vec3::new(0.0, 0.0, 1.0) * t;
        assert!((hit.z + 1.0).abs() < 1e-12);
        assert!(ray_sphere(Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.0, 0.0, -1.0), &s).is_none());
        assert!(ray_sphere(Vec3::new(0.0, 3.0, -5.0), Vec3::new(0.0, 0.0, 1.0), &s).is_none());
    }
}
