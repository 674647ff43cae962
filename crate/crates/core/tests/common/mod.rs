#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stillwater::ocean::{Ocean, OceanConfig};
use stillwater::raster::{ImageBuffer, WaterMask};
use stillwater::reflect::{build_reflection_texture, MirrorBlurPredictor, ReflectionTexture, TextureConfig};
use std::time::Instant;
use stillwater::geom::Vec3;
use stillwater::render::{
    render_frame, trace_reflection, CameraModel, CollisionAtlas, RenderConfig, Renderer, TraceKind, WaterParams,
};

pub const SIZE: usize = 256;
pub const SHORE_ROW: usize = 100;

/// Sky gradient over a strip of coloured blocks, with water below
/// `SHORE_ROW`.
pub fn shore_photo(seed: u64) -> ImageBuffer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    let mut x = 0;
    while x < SIZE {
        let w = rng.random_range(12..40);
        let top = rng.random_range(40..90);
        let c = [rng.random_range(0.2..0.9), rng.random_range(0.2..0.8), rng.random_range(0.1..0.7)];
        blocks.push((x, x + w, top, c));
        x += w;
    }
    let above = move |x: usize, y: usize| -> [f64; 3] {
        for &(x0, x1, top, c) in &blocks {
            if x >= x0 && x < x1 && y >= top {
                let stripe = if (y / 6) % 2 == 0 { 1.0 } else { 0.8 };
                return [c[0] * stripe, c[1] * stripe, c[2] * stripe];
            }
        }
        let f = y as f64 / SHORE_ROW as f64;
        [0.45 + 0.3 * f, 0.6 + 0.25 * f, 0.9]
    };
    // Water shows the shore mirrored about the shoreline, dimmed and tinted.
    ImageBuffer::from_fn(SIZE, SIZE, |x, y| {
        if y < SHORE_ROW {
            return above(x, y);
        }
        let c = match (2 * SHORE_ROW).checked_sub(y + 1) {
            Some(my) => above(x, my),
            None => [0.5, 0.6, 0.9],
        };
        [0.05 + 0.6 * c[0], 0.1 + 0.6 * c[1], 0.12 + 0.6 * c[2]]
    })
}

pub fn shore_mask() -> WaterMask<f64> {
    WaterMask::from_fn(SIZE, SIZE, |_, y| if y >= SHORE_ROW { 1.0 } else { 0.0 })
}

pub fn shore_texture(photo: &ImageBuffer<f64>, mask: &WaterMask<f64>) -> ReflectionTexture<f64> {
    build_reflection_texture(photo, mask, &MirrorBlurPredictor, &TextureConfig::default()).unwrap()
}

pub fn true_params() -> WaterParams<f64> {
    WaterParams {
        wind_speed: 5.0,
        wind_dir: 30.0,
        choppiness: 1.0,
        cam_height: 8.0,
        cam_angle: 80.0,
        cam_fov: 60.0,
        water_color: [0.08, 0.22, 0.28],
        sh_l0: [0.9, 0.95, 1.0],
        sh_l1: [0.2, 0.2, 0.25, 0.0, 0.0, 0.0, 0.05, 0.05, 0.05],
    }
}

pub struct ShoreScene {
    pub photo: ImageBuffer<f64>,
    pub mask: WaterMask<f64>,
    pub texture: ReflectionTexture<f64>,
}

pub fn shore_scene() -> ShoreScene {
    let photo = shore_photo(7);
    let mask = shore_mask();
    let texture = shore_texture(&photo, &mask);
    ShoreScene { photo, mask, texture }
}

/// The shore scene re-rendered from `params` on the optimization grid at t = 0.
pub fn rendered_reference(scene: &ShoreScene, params: &WaterParams<f64>) -> ImageBuffer<f64> {
    let ocean = Ocean::new(params.wind_speed, params.wind_dir, &OceanConfig::optimization()).unwrap();
    let field = ocean.field(0.0, params.choppiness).unwrap();
    render_frame(
        &scene.photo,
        &scene.mask,
        &scene.texture,
        params,
        &field,
        SIZE,
        SIZE,
        RenderConfig::default(),
    )
    .unwrap()
}

/// Water wherever the ground under a pixel lies nearer than `wall_z`; the
/// rest of the frame is an infinitely tall wall standing at `z = wall_z`.
pub fn wall_mask(cam: &CameraModel<f64>, wall_z: f64) -> WaterMask<f64> {
    WaterMask::from_fn(cam.width, cam.raster_height, |x, y| {
        match cam.unproject_ground(x as f64 + 0.5, y as f64 + 0.5) {
            Some(p) if p.z < wall_z => 1.0,
            _ => 0.0,
        }
    })
}

/// Shoreline that wanders around row 100 with an island in the water.
pub fn wavy_shore_mask() -> WaterMask<f64> {
    WaterMask::from_fn(SIZE, SIZE, |x, y| {
        let shore = SHORE_ROW as f64 + 12.0 * (x as f64 / 17.0).sin();
        let island = (x as f64 - 170.0).powi(2) / 900.0 + (y as f64 - 150.0).powi(2) / 100.0 < 1.0;
        if y as f64 >= shore && !island {
            1.0
        } else {
            0.0
        }
    })
}

pub fn noise_image(w: usize, h: usize, seed: u64) -> ImageBuffer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..w * h * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    ImageBuffer::from_raw(w, h, data).unwrap()
}

/// Reflection-pass timings and colour agreement between atlas and brute march.
pub struct AtlasComparison {
    pub atlas_secs: f64,
    pub brute_secs: f64,
    pub water_pixels: usize,
    pub identical: usize,
    pub within_005: usize,
}

pub fn compare_atlas(n: usize, reps: usize) -> AtlasComparison {
    let s = shore_scene();
    let p = true_params();
    let mask = wavy_shore_mask();
    let field = Ocean::new(p.wind_speed, p.wind_dir, &OceanConfig::default()).unwrap().field(0.0, p.choppiness).unwrap();
    let cfg = RenderConfig { parallel: false, ..RenderConfig::default() };
    let r = Renderer::new(&s.photo, &mask, &s.texture, n, n, cfg).unwrap();
    let cam = r.camera(&p).unwrap();
    let gb = r.gbuffer(&cam, &field).unwrap();
    let time = |atlas: bool| {
        let mut best = f64::INFINITY;
        let mut out = Vec::new();
        for _ in 0..reps {
            let t0 = Instant::now();
            out = r.reflection_pass(&cam, &p, &field, &gb, atlas);
            best = best.min(t0.elapsed().as_secs_f64());
        }
        (best, out)
    };
    let (atlas_secs, a) = time(true);
    let (brute_secs, b) = time(false);
    let mut cmp = AtlasComparison { atlas_secs, brute_secs, water_pixels: 0, identical: 0, within_005: 0 };
    for (x, y) in a.iter().zip(&b) {
        if let (Some(x), Some(y)) = (x, y) {
            let d = (0..3).map(|c| (x.color[c] - y.color[c]).abs()).fold(0.0, f64::max);
            cmp.water_pixels += 1;
            cmp.identical += usize::from(d == 0.0);
            cmp.within_005 += usize::from(d <= 0.05);
        }
    }
    cmp
}

pub struct MirrorOracle {
    pub water_pixels: usize,
    /// Texel within one pixel of the closed-form mirror image.
    pub matched: usize,
    /// Pixels whose sample came from an accepted wall crossing.
    pub wall_hits: usize,
}

/// Traces every water pixel of a flat surface in front of an infinite wall
/// and compares the texel with the mirror image of the wall point.
pub fn mirror_oracle(n: usize, use_atlas: bool) -> MirrorOracle {
    let params = WaterParams { cam_height: 10.0, cam_angle: 80.0, cam_fov: 60.0, ..WaterParams::default() };
    let cam = CameraModel::from_params(&params, n, n).unwrap();
    let wall_z = 60.0;
    let mask = wall_mask(&cam, wall_z);
    let texture = noise_image(n, n, 3);
    let atlas = use_atlas.then(|| CollisionAtlas::build(&mask, 1.0));
    let eye = cam.position();
    let mut out = MirrorOracle { water_pixels: 0, matched: 0, wall_hits: 0 };
    for y in 0..n {
        for x in 0..n {
            if !mask.is_water(x, y) {
                continue;
            }
            let p = cam.unproject_ground(x as f64 + 0.5, y as f64 + 0.5).unwrap();
            let traced = trace_reflection(p, Vec3::up(), &cam, &mask, &texture, atlas.as_ref(), &params, 5000.0);
            // Reflected ray up to the wall plane, then mirrored below the water.
            let i = (p - eye).normalize();
            let r = Vec3::new(i.x, -i.y, i.z);
            let c = p + r * ((wall_z - p.z) / r.z);
            let (u, v, _) = cam.project(Vec3::new(c.x, -c.y, c.z)).unwrap();
            out.water_pixels += 1;
            out.wall_hits += usize::from(matches!(traced.kind, TraceKind::Wall(_)));
            out.matched += usize::from((traced.texel.0 - u).hypot(traced.texel.1 - v) <= 1.0);
        }
    }
    out
}
