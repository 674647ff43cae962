//! Full-frame water rendering and compositing over the photograph.

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Vec3;
use crate::ocean::DisplacementField;
use crate::raster::{resize_bilinear, ImageBuffer, WaterMask};
use crate::real::Real;
use crate::reflect::ReflectionTexture;

use super::camera::{project_grid, CameraError, CameraModel};
use super::params::{ParamError, WaterParams};
use super::shade::shade_fragment;
use super::sphere::{nearest_hit, sphere_color, Sphere};
use super::trace::{CollisionAtlas, TraceResult, TraceScene};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("{what} is {got:?}, expected {expected:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("output raster must be non-empty")]
    ZeroSize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig<T> {
    /// Projected-grid vertex spacing in pixels.
    pub grid_step: usize,
    /// Horizontal distance at which the water plane is cut off, meters.
    pub far_distance: T,
    /// Screen-space march step, pixels.
    pub march_step: T,
    /// Replace the Fresnel term with a constant.
    pub fresnel_override: Option<T>,
    pub use_atlas: bool,
    /// Shade rows on the rayon pool.
    pub parallel: bool,
    /// Fade waves whose grid cells fall below the mesh resolution.
    pub lod: bool,
}

impl<T: Real> Default for RenderConfig<T> {
    fn default() -> Self {
        Self {
            grid_step: 4,
            far_distance: T::lit(5000.0),
            march_step: T::one(),
            fresnel_override: None,
            use_atlas: true,
            parallel: true,
            lod: true,
        }
    }
}

/// One rasterized water fragment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment<T> {
    pub pos: Vec3<T>,
    pub normal: Vec3<T>,
    pub depth: T,
}

/// Per-pixel surface samples of the displaced mesh (water pixels only).
#[derive(Debug, Clone)]
pub struct GBuffer<T> {
    pub width: usize,
    pub height: usize,
    pub frags: Vec<Option<Fragment<T>>>,
}

/// Inputs resampled to the output raster, plus the viewpoint-independent atlas.
#[derive(Debug, Clone)]
pub struct Renderer<T: Real> {
    photo: ImageBuffer<T>,
    mask: WaterMask<T>,
    texture: ImageBuffer<T>,
    atlas: Option<CollisionAtlas<T>>,
    cfg: RenderConfig<T>,
}

impl<T: Real> Renderer<T> {
    pub fn new(
        photo: &ImageBuffer<T>,
        mask: &WaterMask<T>,
        texture: &ReflectionTexture<T>,
        width: usize,
        height: usize,
        cfg: RenderConfig<T>,
    ) -> Result<Self, RenderError> {
        if width == 0 || height == 0 {
            return Err(RenderError::ZeroSize);
        }
        if mask.dims() != photo.dims() {
            return Err(RenderError::DimensionMismatch {
                what: "mask",
                expected: photo.dims(),
                got: mask.dims(),
            });
        }
        if texture.dims() != photo.dims() {
            return Err(RenderError::DimensionMismatch {
                what: "texture",
                expected: photo.dims(),
                got: texture.dims(),
            });
        }
        let photo = resize_bilinear(photo, width, height);
        let mask = if mask.dims() == (width, height) { mask.clone() } else { mask.resize(width, height) };
        let texture = resize_bilinear(&texture.image, width, height);
        let atlas = cfg.use_atlas.then(|| CollisionAtlas::build(&mask, cfg.march_step));
        Ok(Self {
            photo,
            mask,
            texture,
            atlas,
            cfg,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.photo.dims()
    }

    pub fn config(&self) -> &RenderConfig<T> {
        &self.cfg
    }

    pub fn mask(&self) -> &WaterMask<T> {
        &self.mask
    }

    pub fn photo(&self) -> &ImageBuffer<T> {
        &self.photo
    }

    pub fn texture(&self) -> &ImageBuffer<T> {
        &self.texture
    }

    pub fn atlas(&self) -> Option<&CollisionAtlas<T>> {
        self.atlas.as_ref()
    }

    pub fn camera(&self, params: &WaterParams<T>) -> Result<CameraModel<T>, RenderError> {
        let (w, h) = self.dims();
        Ok(CameraModel::from_params(params, w, h)?)
    }

    /// Displacement attenuation for a surface point at `dist` meters.
    fn lod_factor(&self, cam: &CameraModel<T>, field: &DisplacementField<T>, base: Vec3<T>) -> T {
        if !self.cfg.lod {
            return T::one();
        }
        let dist = (base - cam.position()).length();
        let footprint = cam.pixel_footprint(dist, cam.height / dist);
        let ratio = footprint * T::lit(self.cfg.grid_step as f64) / field.cell();
        // Full waves up to one cell per mesh step, gone at eight.
        ((T::lit(8.0) - ratio) / T::lit(7.0)).clamp01()
    }

    /// Surface sample at a ground point, displaced and attenuated.
    fn surface_at(&self, cam: &CameraModel<T>, field: &DisplacementField<T>, base: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
        let a = self.lod_factor(cam, field, base);
        if a <= T::zero() {
            return (base, Vec3::up());
        }
        let (disp, n) = field.sample(base.x, base.z);
        (base + disp * a, Vec3::up().lerp(n, a).normalize())
    }

    /// Projects the screen-uniform grid, displaces it and rasterizes it.
    pub fn gbuffer(&self, cam: &CameraModel<T>, field: &DisplacementField<T>) -> Result<GBuffer<T>, RenderError> {
        let (w, h) = self.dims();
        let step = self.cfg.grid_step.max(1);
        let cols = w.div_ceil(step) + 1;
        let rows = h.div_ceil(step) + 1;
        let grid = project_grid(cam, cols, rows, self.cfg.far_distance)?;
        let verts: Vec<Option<(T, T, T, Vec3<T>, Vec3<T>)>> = grid
            .world
            .iter()
            .zip(&grid.hit)
            .map(|(&base, &hit)| {
                let (p, n) = if hit { self.surface_at(cam, field, base) } else { (base, Vec3::up()) };
                cam.project(p).map(|(sx, sy, z)| (sx, sy, z, p, n))
            })
            .collect();
        let mut frags: Vec<Option<Fragment<T>>> = vec![None; w * h];
        let mut zbuf = vec![T::infinity(); w * h];
        for r in 0..grid.rows - 1 {
            for c in 0..grid.cols - 1 {
                let i00 = r * grid.cols + c;
                let quad = [i00, i00 + 1, i00 + grid.cols, i00 + grid.cols + 1];
                for tri in [[quad[0], quad[1], quad[2]], [quad[1], quad[3], quad[2]]] {
                    let (Some(a), Some(b), Some(d)) = (verts[tri[0]], verts[tri[1]], verts[tri[2]]) else {
                        continue;
                    };
                    self.raster_triangle(&[a, b, d], &mut frags, &mut zbuf);
                }
            }
        }
        Ok(GBuffer { width: w, height: h, frags })
    }

    fn raster_triangle(
        &self,
        v: &[(T, T, T, Vec3<T>, Vec3<T>); 3],
        frags: &mut [Option<Fragment<T>>],
        zbuf: &mut [T],
    ) {
        let (w, h) = self.dims();
        let edge = |a: (T, T), b: (T, T), p: (T, T)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let (p0, p1, p2) = ((v[0].0, v[0].1), (v[1].0, v[1].1), (v[2].0, v[2].1));
        let area = edge(p0, p1, p2);
        if area.abs() < T::lit(1e-12) {
            return;
        }
        let minx = v.iter().map(|t| t.0).fold(T::infinity(), T::min).floor().max(T::zero());
        let maxx = v.iter().map(|t| t.0).fold(T::neg_infinity(), T::max).ceil().min(T::lit(w as f64));
        let miny = v.iter().map(|t| t.1).fold(T::infinity(), T::min).floor().max(T::zero());
        let maxy = v.iter().map(|t| t.1).fold(T::neg_infinity(), T::max).ceil().min(T::lit(h as f64));
        if minx >= maxx || miny >= maxy {
            return;
        }
        let (x0, x1) = (minx.to_usize().unwrap_or(0), maxx.to_usize().unwrap_or(0));
        let (y0, y1) = (miny.to_usize().unwrap_or(0), maxy.to_usize().unwrap_or(0));
        let tol = -T::lit(1e-9);
        let half = T::lit(0.5);
        for y in y0..y1 {
            for x in x0..x1 {
                if self.mask.prob(x, y) <= T::zero() {
                    continue;
                }
                let p = (T::lit(x as f64) + half, T::lit(y as f64) + half);
                let b0 = edge(p1, p2, p) / area;
                let b1 = edge(p2, p0, p) / area;
                let b2 = edge(p0, p1, p) / area;
                if b0 < tol || b1 < tol || b2 < tol {
                    continue;
                }
                let depth = v[0].2 * b0 + v[1].2 * b1 + v[2].2 * b2;
                let i = y * w + x;
                if depth >= zbuf[i] {
                    continue;
                }
                zbuf[i] = depth;
                frags[i] = Some(Fragment {
                    pos: v[0].3 * b0 + v[1].3 * b1 + v[2].3 * b2,
                    normal: (v[0].4 * b0 + v[1].4 * b1 + v[2].4 * b2).normalize(),
                    depth,
                });
            }
        }
    }

    fn trace_scene<'a>(
        &'a self,
        cam: &'a CameraModel<T>,
        params: &'a WaterParams<T>,
        spheres: &'a [Sphere<T>],
    ) -> TraceScene<'a, T> {
        TraceScene {
            cam,
            mask: &self.mask,
            texture: &self.texture,
            atlas: self.atlas.as_ref(),
            spheres,
            params,
            far: self.cfg.far_distance,
            step: self.cfg.march_step,
        }
    }

    /// Surface point and normal for a water pixel: the rasterized fragment, or
    /// the undisplaced plane under the pixel when the mesh left a gap.
    fn surface_for_pixel(
        &self,
        cam: &CameraModel<T>,
        field: &DisplacementField<T>,
        gb: &GBuffer<T>,
        x: usize,
        y: usize,
    ) -> Option<(Vec3<T>, Vec3<T>)> {
        if let Some(f) = gb.frags[y * gb.width + x] {
            return Some((f.pos, f.normal));
        }
        let half = T::lit(0.5);
        let base = cam.unproject_ground(T::lit(x as f64) + half, T::lit(y as f64) + half)?;
        let a = self.lod_factor(cam, field, base);
        let (_, n) = field.sample(base.x, base.z);
        Some((base, Vec3::up().lerp(n, a).normalize()))
    }

    /// Traces every water pixel of a G-buffer. `None` where the pixel has no surface.
    pub fn reflection_pass(
        &self,
        cam: &CameraModel<T>,
        params: &WaterParams<T>,
        field: &DisplacementField<T>,
        gb: &GBuffer<T>,
        use_atlas: bool,
    ) -> Vec<Option<TraceResult<T>>> {
        let scene = self.trace_scene(cam, params, &[]);
        let (w, h) = self.dims();
        let run = |i: usize| {
            let (x, y) = (i % w, i / w);
            if self.mask.prob(x, y) <= T::zero() {
                return None;
            }
            let (p, n) = self.surface_for_pixel(cam, field, gb, x, y)?;
            Some(scene.trace(p, n, use_atlas))
        };
        if self.cfg.parallel {
            (0..w * h).into_par_iter().map(run).collect()
        } else {
            (0..w * h).map(run).collect()
        }
    }

    /// Renders and composites one frame.
    pub fn render(
        &self,
        params: &WaterParams<T>,
        field: &DisplacementField<T>,
        spheres: &[Sphere<T>],
    ) -> Result<ImageBuffer<T>, RenderError> {
        params.validate()?;
        let cam = self.camera(params)?;
        let gb = self.gbuffer(&cam, field)?;
        let scene = self.trace_scene(&cam, params, spheres);
        let (w, h) = self.dims();
        let eye = cam.position();
        let half = T::lit(0.5);
        let shade_row = |y: usize, row: &mut [T]| {
            for x in 0..w {
                let photo = self.photo.pixel(x, y);
                let alpha = self.mask.prob(x, y);
                let mut out = photo;
                let mut water_depth = T::infinity();
                if alpha > T::zero() {
                    let water = match self.surface_for_pixel(&cam, field, &gb, x, y) {
                        Some((p, n)) => {
                            water_depth = (p - eye).length();
                            let refl = scene.trace(p, n, self.cfg.use_atlas);
                            shade_fragment(n, (eye - p).normalize(), params, refl.color, self.cfg.fresnel_override)
                        }
                        None => self.texture.pixel(x, y),
                    };
                    for c in 0..3 {
                        out[c] = photo[c] + (water[c] - photo[c]) * alpha;
                    }
                }
                if !spheres.is_empty() {
                    let dir = cam.ray(T::lit(x as f64) + half, T::lit(y as f64) + half);
                    if let Some((t, i)) = nearest_hit(eye, dir, spheres) {
                        let hit = eye + dir * t;
                        let under_water = alpha > T::zero() && hit.y < T::zero();
                        if t < water_depth && !under_water {
                            out = sphere_color(&spheres[i], hit, params);
                        }
                    }
                }
                row[x * 3..x * 3 + 3].copy_from_slice(&out);
            }
        };
        let mut data = vec![T::zero(); w * h * 3];
        if self.cfg.parallel {
            data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| shade_row(y, row));
        } else {
            data.chunks_mut(w * 3).enumerate().for_each(|(y, row)| shade_row(y, row));
        }
        Ok(ImageBuffer::from_raw(w, h, data).expect("sized to fit"))
    }
}

/// One-shot render at `width x height`.
#[allow(clippy::too_many_arguments)]
pub fn render_frame<T: Real>(
    photo: &ImageBuffer<T>,
    mask: &WaterMask<T>,
    texture: &ReflectionTexture<T>,
    params: &WaterParams<T>,
    field: &DisplacementField<T>,
    width: usize,
    height: usize,
    cfg: RenderConfig<T>,
) -> Result<ImageBuffer<T>, RenderError> {
    Renderer::new(photo, mask, texture, width, height, cfg)?.render(params, field, &[])
}

/// Renders with spheres added to the scene.
#[allow(clippy::too_many_arguments)]
pub fn insert_sphere<T: Real>(
    renderer: &Renderer<T>,
    params: &WaterParams<T>,
    field: &DisplacementField<T>,
    center: Vec3<T>,
    radius: T,
    albedo: [T; 3],
) -> Result<ImageBuffer<T>, RenderError> {
    renderer.render(params, field, &[Sphere { center, radius, albedo }])
}
