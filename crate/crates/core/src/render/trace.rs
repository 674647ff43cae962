//! Image-based reflections against wall proxies.
//!
//! A reflected ray is followed along its ground footprint in screen space.
//! Every place where the footprint leaves the water marks the foot `B` of a
//! vertical wall. The ray meets that wall at `C`, the point of the ray above
//! `B` (on the vertical plane through `B` facing the ray's heading). `C` is
//! accepted when it projects onto a non-water pixel (or off screen); its
//! colour is then read from the reflection texture at the projection of `C`
//! mirrored below the water plane. Without any accepted wall the mirrored
//! far end of the ray is used.
//!
//! The [`CollisionAtlas`] caches, per 4x4 pixel group and for 16 screen
//! directions spread over the upper half-plane, the first and last boundary
//! crossings of the march so that a frame only interpolates them.

use rayon::prelude::*;

use crate::geom::Vec3;
use crate::raster::{ImageBuffer, WaterMask};
use crate::real::Real;

use super::camera::CameraModel;
use super::params::WaterParams;
use super::sphere::{nearest_hit, sphere_color, Sphere};

pub const GROUP: usize = 4;
pub const DIRECTIONS: usize = 16;

/// Which branch produced a reflection sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Accepted wall crossing, numbered along the march.
    Wall(usize),
    Miss,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceResult<T> {
    pub color: [T; 3],
    /// Screen position read from the reflection texture (pixels).
    pub texel: (T, T),
    pub kind: TraceKind,
}

/// Everything the tracer reads; all rasters share the camera's raster size.
pub struct TraceScene<'a, T: Real> {
    pub cam: &'a CameraModel<T>,
    pub mask: &'a WaterMask<T>,
    pub texture: &'a ImageBuffer<T>,
    pub atlas: Option<&'a CollisionAtlas<T>>,
    pub spheres: &'a [Sphere<T>],
    pub params: &'a WaterParams<T>,
    pub far: T,
    pub step: T,
}

/// Screen-space boundary crossings per pixel group and direction.
#[derive(Debug, Clone)]
pub struct CollisionAtlas<T> {
    width: usize,
    height: usize,
    groups_x: usize,
    groups_y: usize,
    dirs: [(T, T); DIRECTIONS],
    /// `(first, last)` crossing distances from the group centre, per group and direction.
    records: Vec<Option<(T, T)>>,
}

fn direction_angle(k: usize) -> f64 {
    std::f64::consts::PI * (k as f64 + 0.5) / DIRECTIONS as f64
}

/// Marches from `start` along unit `dir` (pixels) and reports the midpoints of
/// water-to-land transitions as distances from `start`. The march stops at the
/// raster edge or after `max_len`.
fn march<T: Real>(
    mask: &WaterMask<T>,
    start: (T, T),
    dir: (T, T),
    step: T,
    max_len: T,
    mut visit: impl FnMut(T) -> bool,
) {
    let (w, h) = mask.dims();
    let (wf, hf) = (T::lit(w as f64), T::lit(h as f64));
    let mut prev_water = true;
    let mut prev_s = T::zero();
    let mut s = T::zero();
    loop {
        let x = start.0 + dir.0 * s;
        let y = start.1 + dir.1 * s;
        if x < T::zero() || y < T::zero() || x >= wf || y >= hf || s > max_len {
            return;
        }
        let water = mask.is_water(x.to_usize().unwrap_or(0), y.to_usize().unwrap_or(0));
        if prev_water && !water && visit((prev_s + s) * T::lit(0.5)) {
            return;
        }
        prev_water = water;
        prev_s = s;
        s += step;
    }
}

impl<T: Real> CollisionAtlas<T> {
    pub fn build(mask: &WaterMask<T>, step: T) -> Self {
        let (w, h) = mask.dims();
        let groups_x = w.div_ceil(GROUP);
        let groups_y = h.div_ceil(GROUP);
        let mut dirs = [(T::zero(), T::zero()); DIRECTIONS];
        for (k, d) in dirs.iter_mut().enumerate() {
            let a = direction_angle(k);
            *d = (T::lit(a.cos()), T::lit(-a.sin()));
        }
        let diag = T::lit(((w * w + h * h) as f64).sqrt());
        let records = (0..groups_x * groups_y)
            .into_par_iter()
            .flat_map_iter(|g| {
                let c = Self::centre_of(g % groups_x, g / groups_x, w, h);
                dirs.iter()
                    .map(|&d| {
                        let mut first = None;
                        let mut last = T::zero();
                        march(mask, c, d, step, diag, |s| {
                            first.get_or_insert(s);
                            last = s;
                            false
                        });
                        first.map(|f| (f, last))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self {
            width: w,
            height: h,
            groups_x,
            groups_y,
            dirs,
            records,
        }
    }

    fn centre_of(gx: usize, gy: usize, w: usize, h: usize) -> (T, T) {
        let cx = ((gx * GROUP) as f64 + GROUP as f64 / 2.0).min(w as f64 - 0.5);
        let cy = ((gy * GROUP) as f64 + GROUP as f64 / 2.0).min(h as f64 - 0.5);
        (T::lit(cx), T::lit(cy))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn record(&self, gx: usize, gy: usize, k: usize) -> Option<(T, T)> {
        self.records[(gy * self.groups_x + gx) * DIRECTIONS + k]
    }

    /// Up to two crossing candidates (as distances along `dir` from `p0`) for a
    /// march starting at `p0`. `None` when `dir` lies outside the tabulated
    /// angular range, in which case the caller marches directly.
    pub fn lookup(&self, p0: (T, T), dir: (T, T)) -> Option<[Option<T>; 2]> {
        let phi = (-dir.1).atan2(dir.0).as_f64();
        let (lo, hi) = (direction_angle(0), direction_angle(DIRECTIONS - 1));
        if !(lo..=hi).contains(&phi) {
            return None;
        }
        let spacing = std::f64::consts::PI / DIRECTIONS as f64;
        let k = (((phi - lo) / spacing).floor() as usize).min(DIRECTIONS - 2);
        let frac = T::lit(((phi - direction_angle(k)) / spacing).clamp(0.0, 1.0));
        let gx = (p0.0.max(T::zero()).to_usize().unwrap_or(0) / GROUP).min(self.groups_x - 1);
        let gy = (p0.1.max(T::zero()).to_usize().unwrap_or(0) / GROUP).min(self.groups_y - 1);
        let c = Self::centre_of(gx, gy, self.width, self.height);
        let a = self.record(gx, gy, k);
        let b = self.record(gx, gy, k + 1);
        let pick = |fa: Option<T>, fb: Option<T>| -> Option<T> {
            let d = match (fa, fb) {
                (Some(x), Some(y)) => x + (y - x) * frac,
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => return None,
            };
            // Crossing point on the group's ray, re-expressed along the fragment's line.
            let da = self.dirs[k];
            let db = self.dirs[k + 1];
            let dx = da.0 + (db.0 - da.0) * frac;
            let dy = da.1 + (db.1 - da.1) * frac;
            let len = (dx * dx + dy * dy).sqrt();
            let px = c.0 + dx / len * d;
            let py = c.1 + dy / len * d;
            Some((px - p0.0) * dir.0 + (py - p0.1) * dir.1)
        };
        let first = pick(a.map(|r| r.0), b.map(|r| r.0));
        let last = pick(a.map(|r| r.1), b.map(|r| r.1));
        Some([first, last])
    }
}

/// Result of stepping one candidate wall crossing.
enum Candidate<T> {
    Accept(Vec3<T>),
    Reject,
}

impl<'a, T: Real> TraceScene<'a, T> {
    fn on_screen(&self, x: T, y: T) -> bool {
        x >= T::zero()
            && y >= T::zero()
            && x < T::lit(self.cam.width as f64)
            && y < T::lit(self.cam.raster_height as f64)
    }

    fn sample_texture(&self, p: Vec3<T>, fallback: (T, T)) -> ([T; 3], (T, T)) {
        let (u, v) = match self.cam.project(p.mirror_y()) {
            Some((u, v, _)) => (u, v),
            None => fallback,
        };
        let eps = T::lit(1e-6);
        let u = u.clamp_to(T::zero(), T::lit(self.cam.width as f64) - eps);
        let v = v.clamp_to(T::zero(), T::lit(self.cam.raster_height as f64) - eps);
        (self.texture.sample(u, v), (u, v))
    }

    /// Ray point above the wall foot under screen point `q`, and whether it is a valid hit.
    fn candidate(&self, origin: Vec3<T>, r: Vec3<T>, heading: Vec3<T>, rxz: T, q: (T, T)) -> Candidate<T> {
        let base = match self.cam.unproject_ground(q.0, q.1) {
            Some(b) => b,
            None => return Candidate::Reject,
        };
        let along = (base - Vec3::new(origin.x, T::zero(), origin.z)).dot(heading);
        if along <= T::zero() {
            return Candidate::Reject;
        }
        let c = origin + r * (along / rxz);
        match self.cam.project(c) {
            Some((x, y, _)) if self.on_screen(x, y) => {
                if self.mask.is_water(x.to_usize().unwrap_or(0), y.to_usize().unwrap_or(0)) {
                    Candidate::Reject
                } else {
                    Candidate::Accept(c)
                }
            }
            _ => Candidate::Accept(c),
        }
    }

    /// Reflection colour seen from surface point `origin` with unit `normal`.
    pub fn trace(&self, origin: Vec3<T>, normal: Vec3<T>, use_atlas: bool) -> TraceResult<T> {
        let eye = self.cam.position();
        let incident = (origin - eye).normalize();
        let mut r = incident.reflect(normal);
        let min_up = T::lit(1e-3);
        if r.y < min_up {
            r.y = min_up;
            r = r.normalize();
        }
        let own = self
            .cam
            .project(origin)
            .map(|(x, y, _)| (x, y))
            .unwrap_or((T::zero(), T::zero()));

        if let Some((t, i)) = nearest_hit(origin, r, self.spheres) {
            let hit = origin + r * t;
            return TraceResult {
                color: sphere_color(&self.spheres[i], hit, self.params),
                texel: own,
                kind: TraceKind::Sphere,
            };
        }

        let miss = |scene: &Self| {
            let (color, texel) = scene.sample_texture(origin + r * scene.far, own);
            TraceResult {
                color,
                texel,
                kind: TraceKind::Miss,
            }
        };

        let rxz = (r.x * r.x + r.z * r.z).sqrt();
        if rxz < T::lit(1e-6) {
            return miss(self);
        }
        let heading = Vec3::new(r.x / rxz, T::zero(), r.z / rxz);
        let foot = Vec3::new(origin.x, T::zero(), origin.z);
        let p0 = match self.cam.project(foot) {
            Some((x, y, _)) => (x, y),
            None => return miss(self),
        };
        // Keep the far end of the footprint in front of the camera.
        let f = self.cam.forward();
        let depth0 = (foot - eye).dot(f);
        let closing = heading.dot(f);
        let mut reach = self.far;
        if closing < T::zero() {
            reach = reach.min((depth0 - T::lit(1e-3)) / -closing * T::lit(0.99));
        }
        if reach <= T::zero() {
            return miss(self);
        }
        let p_end = match self.cam.project(foot + heading * reach) {
            Some((x, y, _)) => (x, y),
            None => return miss(self),
        };
        let (dx, dy) = (p_end.0 - p0.0, p_end.1 - p0.1);
        let len = (dx * dx + dy * dy).sqrt();
        if len < T::lit(1e-9) {
            return miss(self);
        }
        let dir = (dx / len, dy / len);

        let mut found: Option<(Vec3<T>, usize)> = None;
        let atlas_hits = if use_atlas { self.atlas.and_then(|a| a.lookup(p0, dir)) } else { None };
        if let Some(cands) = atlas_hits {
            for (n, s) in cands.iter().enumerate() {
                let Some(s) = *s else { continue };
                if s < T::zero() || s > len {
                    continue;
                }
                let q = (p0.0 + dir.0 * s, p0.1 + dir.1 * s);
                if let Candidate::Accept(c) = self.candidate(origin, r, heading, rxz, q) {
                    found = Some((c, n));
                    break;
                }
            }
        } else {
            let (start, offset) = match clip_start(p0, dir, self.cam.width, self.cam.raster_height) {
                Some(v) => v,
                None => return miss(self),
            };
            let mut n = 0;
            march(self.mask, start, dir, self.step, len - offset, |s| {
                let s = s + offset;
                let q = (p0.0 + dir.0 * s, p0.1 + dir.1 * s);
                match self.candidate(origin, r, heading, rxz, q) {
                    Candidate::Accept(c) => {
                        found = Some((c, n));
                        true
                    }
                    Candidate::Reject => {
                        n += 1;
                        false
                    }
                }
            });
        }
        match found {
            Some((c, n)) => {
                let (color, texel) = self.sample_texture(c, own);
                TraceResult {
                    color,
                    texel,
                    kind: TraceKind::Wall(n),
                }
            }
            None => miss(self),
        }
    }
}

/// First on-screen point of the ray `p0 + s·dir`, and its `s`.
fn clip_start<T: Real>(p0: (T, T), dir: (T, T), w: usize, h: usize) -> Option<((T, T), T)> {
    let (wf, hf) = (T::lit(w as f64), T::lit(h as f64));
    let inside = |x: T, y: T| x >= T::zero() && y >= T::zero() && x < wf && y < hf;
    if inside(p0.0, p0.1) {
        return Some((p0, T::zero()));
    }
    let mut s_in = T::zero();
    for (p, d, hi) in [(p0.0, dir.0, wf), (p0.1, dir.1, hf)] {
        if p < T::zero() {
            if d <= T::zero() {
                return None;
            }
            s_in = s_in.max(-p / d);
        } else if p >= hi {
            if d >= T::zero() {
                return None;
            }
            s_in = s_in.max((hi - T::lit(1e-6) - p) / d);
        }
    }
    let q = (p0.0 + dir.0 * s_in, p0.1 + dir.1 * s_in);
    inside(q.0, q.1).then_some((q, s_in))
}

/// Convenience wrapper over [`TraceScene::trace`].
#[allow(clippy::too_many_arguments)]
pub fn trace_reflection<T: Real>(
    origin: Vec3<T>,
    normal: Vec3<T>,
    cam: &CameraModel<T>,
    mask: &WaterMask<T>,
    texture: &ImageBuffer<T>,
    atlas: Option<&CollisionAtlas<T>>,
    params: &WaterParams<T>,
    far: T,
) -> TraceResult<T> {
    let scene = TraceScene {
        cam,
        mask,
        texture,
        atlas,
        spheres: &[],
        params,
        far,
        step: T::one(),
    };
    scene.trace(origin, normal, atlas.is_some())
}
