//! Fresnel weighting and spherical-harmonic irradiance.

use crate::geom::Vec3;
use crate::real::Real;

use super::params::WaterParams;

/// Reflectance of water at normal incidence.
pub const F0: f64 = 0.02;
/// Irradiance convolution weights for SH bands 0 and 1 (`π·Y00` and `2π/3·Y1m`).
pub const SH_BAND0: f64 = 0.886227;
pub const SH_BAND1: f64 = 1.023327;

/// Schlick's approximation; `cos_theta` is clamped to `[0, 1]`.
pub fn schlick<T: Real>(cos_theta: T) -> T {
    let f0 = T::lit(F0);
    let m = T::one() - cos_theta.clamp01();
    let m2 = m * m;
    f0 + (T::one() - f0) * m2 * m2 * m
}

/// Per-channel irradiance for a unit normal, clamped at zero.
pub fn sh_irradiance<T: Real>(l0: &[T; 3], l1: &[T; 9], n: Vec3<T>) -> [T; 3] {
    let basis = [n.y, n.z, n.x];
    let mut e = [T::zero(); 3];
    for (c, ec) in e.iter_mut().enumerate() {
        let mut band1 = T::zero();
        for (m, b) in basis.iter().enumerate() {
            band1 += l1[m * 3 + c] * *b;
        }
        *ec = (T::lit(SH_BAND0) * l0[c] + T::lit(SH_BAND1) * band1).max(T::zero());
    }
    e
}

/// Refraction stand-in: water colour lit by the SH environment.
pub fn refract_color<T: Real>(p: &WaterParams<T>, n: Vec3<T>) -> [T; 3] {
    let e = sh_irradiance(&p.sh_l0, &p.sh_l1, n);
    [p.water_color[0] * e[0], p.water_color[1] * e[1], p.water_color[2] * e[2]]
}

/// `F·reflect + (1-F)·refract`, clamped to `[0, 1]`.
pub fn combine<T: Real>(f: T, reflect: [T; 3], refract: [T; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for c in 0..3 {
        out[c] = (f * reflect[c] + (T::one() - f) * refract[c]).clamp01();
    }
    out
}

/// Shades one water fragment. `view` points from the surface to the eye.
pub fn shade_fragment<T: Real>(
    normal: Vec3<T>,
    view: Vec3<T>,
    params: &WaterParams<T>,
    reflect: [T; 3],
    fresnel_override: Option<T>,
) -> [T; 3] {
    let f = fresnel_override.unwrap_or_else(|| schlick(normal.dot(view)));
    combine(f, reflect, refract_color(params, normal))
}
