//! Reflection texture: the colour each water pixel would show if the surface
//! were a flat mirror.
//!
//! The masked photo is cut into heavily overlapping patches, each patch is
//! passed through a predictor, the predictions are blended back with
//! Gaussian weights, and everything outside the water is filled by
//! fast-marching inpainting so that reflection lookups slightly off the water
//! still land on plausible colours.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex;
use rayon::prelude::*;
use thiserror::Error;

use crate::fft::Fft2;
use crate::ocean::freq_index;
use crate::raster::{gaussian_blur, ImageBuffer, Rect, WaterMask};
use crate::real::Real;
use crate::seg::patch_grid_strided;

pub const PATCH: usize = 224;
pub const OVERLAP: f64 = 0.8;
pub const MAX_BLUR: f64 = 8.0;

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("pixel ({x},{y}) is not covered by any patch")]
    Uncovered { x: usize, y: usize },
    #[error("mask is {mask:?} but image is {image:?}")]
    DimensionMismatch {
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error("mask has no water pixels")]
    NoWater,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTexture<T: Real> {
    pub image: ImageBuffer<T>,
    /// `true` where the colour came from the water itself rather than inpainting.
    pub valid: Vec<bool>,
}

impl<T: Real> ReflectionTexture<T> {
    /// Texture whose every pixel is taken as given.
    pub fn from_image(image: ImageBuffer<T>) -> Self {
        let valid = vec![true; image.width() * image.height()];
        Self { image, valid }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn convert<U: Real>(&self) -> ReflectionTexture<U> {
        ReflectionTexture {
            image: self.image.convert(),
            valid: self.valid.clone(),
        }
    }
}

/// Predicts a patch of reflection colours from a masked photo patch.
pub trait ReflectionPredictor<T: Real>: Send + Sync {
    fn predict(&self, patch: &ImageBuffer<T>, mask: &WaterMask<T>) -> ImageBuffer<T>;
}

/// Share of luminance spectral energy above 1/8 of Nyquist, over water pixels.
/// Non-water pixels are replaced by the water mean so the mask edge itself
/// does not count as turbulence. Returns 0 for constant input.
pub fn turbulence_score<T: Real>(patch: &ImageBuffer<T>, mask: &WaterMask<T>) -> T {
    let (w, h) = patch.dims();
    let lum = patch.luminance();
    let water: Vec<bool> = (0..w * h).map(|i| mask.is_water(i % w, i / w)).collect();
    let count = water.iter().filter(|&&b| b).count();
    if count == 0 {
        return T::zero();
    }
    let mut water_lum = lum.iter().zip(&water).filter(|(_, &b)| b).map(|(&v, _)| v);
    let first = water_lum.next().expect("count > 0");
    if water_lum.all(|v| v == first) {
        return T::zero();
    }
    let mean = lum.iter().zip(&water).filter(|(_, &b)| b).map(|(&v, _)| v).sum::<T>() / T::lit(count as f64);
    let mut buf: Vec<Complex<T>> = lum
        .iter()
        .zip(&water)
        .map(|(&v, &b)| Complex::new(if b { v - mean } else { T::zero() }, T::zero()))
        .collect();
    Fft2::any_size(h, w).forward(&mut buf).expect("sized to fit");
    let cutoff = T::lit(0.5 / 8.0);
    let (mut high, mut total) = (T::zero(), T::zero());
    for y in 0..h {
        let fy = T::lit(freq_index(y, h) as f64 / h as f64);
        for x in 0..w {
            let fx = T::lit(freq_index(x, w) as f64 / w as f64);
            let e = buf[y * w + x].norm_sqr();
            total += e;
            if (fx * fx + fy * fy).sqrt() > cutoff {
                high += e;
            }
        }
    }
    if total <= T::zero() {
        T::zero()
    } else {
        high / total
    }
}

/// Blur radius for a turbulence score: `8 px x score`, clamped to `[0, 8]`.
pub fn blur_sigma<T: Real>(score: T) -> T {
    (T::lit(MAX_BLUR) * score).clamp_to(T::zero(), T::lit(MAX_BLUR))
}

/// Default predictor: the patch flipped about its horizontal midline, then
/// blurred according to its turbulence score.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlipBlurPredictor;

impl<T: Real> ReflectionPredictor<T> for FlipBlurPredictor {
    fn predict(&self, patch: &ImageBuffer<T>, mask: &WaterMask<T>) -> ImageBuffer<T> {
        let sigma = blur_sigma(turbulence_score(patch, mask));
        gaussian_blur(&patch.flip_vertical(), sigma)
    }
}

/// Keeps the water's own colours in place and only smooths them by the
/// turbulence score. On a calm photo this reproduces the flat-mirror colours
/// the renderer expects at each water pixel.
#[derive(Debug, Clone, Copy, Default)]
pub struct MirrorBlurPredictor;

impl<T: Real> ReflectionPredictor<T> for MirrorBlurPredictor {
    fn predict(&self, patch: &ImageBuffer<T>, mask: &WaterMask<T>) -> ImageBuffer<T> {
        let sigma = blur_sigma(turbulence_score(patch, mask));
        gaussian_blur(patch, sigma)
    }
}

/// Blends patches with a separable Gaussian centred on each patch,
/// `σ = size/4` per axis, weights truncated at the patch border.
pub fn stitch_patches<T: Real>(
    patches: &[(Rect, ImageBuffer<T>)],
    width: usize,
    height: usize,
) -> Result<ImageBuffer<T>, ReflectError> {
    let mut acc = vec![T::zero(); width * height * 3];
    let mut wsum = vec![T::zero(); width * height];
    for (rect, img) in patches {
        let (pw, ph) = (rect.width(), rect.height());
        let wx = axis_weights::<T>(pw);
        let wy = axis_weights::<T>(ph);
        for y in 0..ph {
            for x in 0..pw {
                let wgt = wx[x] * wy[y];
                let i = (rect.y0 + y) * width + rect.x0 + x;
                let p = img.pixel(x, y);
                for c in 0..3 {
                    acc[i * 3 + c] += wgt * p[c];
                }
                wsum[i] += wgt;
            }
        }
    }
    for (i, &s) in wsum.iter().enumerate() {
        if s <= T::zero() {
            return Err(ReflectError::Uncovered {
                x: i % width,
                y: i / width,
            });
        }
        for c in 0..3 {
            acc[i * 3 + c] /= s;
        }
    }
    Ok(ImageBuffer::from_raw(width, height, acc).expect("sized to fit"))
}

fn axis_weights<T: Real>(n: usize) -> Vec<T> {
    let sigma = n as f64 / 4.0;
    let c = n as f64 / 2.0;
    (0..n)
        .map(|i| {
            let d = i as f64 + 0.5 - c;
            T::lit((-d * d / (2.0 * sigma * sigma)).exp())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flag {
    Known,
    Band,
    Inside,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    t: f64,
    seq: usize,
    idx: usize,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    // Min-heap on (t, insertion order).
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.seq.cmp(&self.seq))
    }
}

/// Fast-marching distance update from the 4-neighbourhood.
fn eikonal(dist: &[f64], flags: &[Flag], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let at = |xx: isize, yy: isize| -> f64 {
        if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
            return f64::INFINITY;
        }
        let i = yy as usize * w + xx as usize;
        if flags[i] == Flag::Inside {
            f64::INFINITY
        } else {
            dist[i]
        }
    };
    let (xi, yi) = (x as isize, y as isize);
    let a = at(xi - 1, yi).min(at(xi + 1, yi));
    let b = at(xi, yi - 1).min(at(xi, yi + 1));
    if a.is_finite() && b.is_finite() && (a - b).abs() < 1.0 {
        let d = 2.0 - (a - b) * (a - b);
        (a + b + d.sqrt()) / 2.0
    } else {
        a.min(b) + 1.0
    }
}

/// Telea-style inpainting: unknown pixels are filled in order of arrival of a
/// fast-marching front, each as the normalised weighted mean of known pixels
/// within `radius`, weighted by direction, distance and level-set terms.
/// Pixels flagged valid are never modified.
pub fn inpaint<T: Real>(tex: &ReflectionTexture<T>, radius: usize) -> Result<ReflectionTexture<T>, ReflectError> {
    let (w, h) = tex.dims();
    if !tex.valid.iter().any(|&v| v) {
        return Err(ReflectError::NoWater);
    }
    let mut out: Vec<f64> = tex.image.data().iter().map(|v| v.as_f64()).collect();
    let mut flags: Vec<Flag> = tex.valid.iter().map(|&v| if v { Flag::Known } else { Flag::Inside }).collect();
    let mut dist = vec![1e6f64; w * h];
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let neighbours = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = i - 1;
        }
        if x + 1 < w {
            n[1] = i + 1;
        }
        if y > 0 {
            n[2] = i - w;
        }
        if y + 1 < h {
            n[3] = i + w;
        }
        n
    };
    for i in 0..w * h {
        if flags[i] == Flag::Known {
            dist[i] = 0.0;
            if neighbours(i).iter().any(|&j| j != usize::MAX && flags[j] == Flag::Inside) {
                flags[i] = Flag::Band;
                heap.push(Entry { t: 0.0, seq, idx: i });
                seq += 1;
            }
        }
    }
    let r = radius.max(1) as isize;
    let r2 = (r * r) as f64;
    while let Some(Entry { idx, .. }) = heap.pop() {
        if flags[idx] == Flag::Known {
            continue;
        }
        flags[idx] = Flag::Known;
        for j in neighbours(idx) {
            if j == usize::MAX || flags[j] != Flag::Inside {
                continue;
            }
            let (x, y) = (j % w, j / w);
            let t = eikonal(&dist, &flags, w, h, x, y);
            dist[j] = t;
            fill_pixel(&mut out, &dist, &flags, w, h, x, y, r, r2);
            flags[j] = Flag::Band;
            heap.push(Entry { t, seq, idx: j });
            seq += 1;
        }
    }
    let image = ImageBuffer::from_raw(w, h, out.into_iter().map(T::lit).collect()).expect("sized to fit");
    Ok(ReflectionTexture {
        image,
        valid: tex.valid.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn fill_pixel(out: &mut [f64], dist: &[f64], flags: &[Flag], w: usize, h: usize, x: usize, y: usize, r: isize, r2: f64) {
    let i = y * w + x;
    let t = dist[i];
    let grad = |xa: usize, xb: usize, ya: usize, yb: usize| -> f64 {
        let ka = flags[ya * w + xa] != Flag::Inside;
        let kb = flags[yb * w + xb] != Flag::Inside;
        match (ka, kb) {
            (true, true) => (dist[yb * w + xb] - dist[ya * w + xa]) / 2.0,
            (true, false) => t - dist[ya * w + xa],
            (false, true) => dist[yb * w + xb] - t,
            _ => 0.0,
        }
    };
    let gx = grad(x.saturating_sub(1), (x + 1).min(w - 1), y, y);
    let gy = grad(x, x, y.saturating_sub(1), (y + 1).min(h - 1));
    let mut reference: Option<[f64; 3]> = None;
    let mut acc = [0.0f64; 3];
    let mut wsum = 0.0;
    for dy in -r..=r {
        let yy = y as isize + dy;
        if yy < 0 || yy >= h as isize {
            continue;
        }
        for dx in -r..=r {
            let xx = x as isize + dx;
            if xx < 0 || xx >= w as isize || (dx == 0 && dy == 0) {
                continue;
            }
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > r2 {
                continue;
            }
            let j = yy as usize * w + xx as usize;
            if flags[j] == Flag::Inside {
                continue;
            }
            let len = d2.sqrt();
            // Vector from the neighbour to the pixel being filled.
            let (vx, vy) = (-(dx as f64), -(dy as f64));
            let dir = ((vx * gx + vy * gy) / len).abs().max(1e-6);
            let dst = 1.0 / d2;
            let lev = 1.0 / (1.0 + (dist[j] - t).abs());
            let wgt = dir * dst * lev;
            let v = [out[j * 3], out[j * 3 + 1], out[j * 3 + 2]];
            // Accumulate offsets from the first neighbour so that constant
            // neighbourhoods reproduce their value exactly.
            let base = *reference.get_or_insert(v);
            for c in 0..3 {
                acc[c] += wgt * (v[c] - base[c]);
            }
            wsum += wgt;
        }
    }
    if let Some(base) = reference {
        for c in 0..3 {
            out[i * 3 + c] = (base[c] + acc[c] / wsum).clamp(0.0, 1.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureConfig {
    pub patch: usize,
    pub overlap: f64,
    pub inpaint_radius: usize,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            patch: PATCH,
            overlap: OVERLAP,
            inpaint_radius: 5,
        }
    }
}

impl TextureConfig {
    pub fn stride(&self) -> usize {
        ((self.patch as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }
}

/// Partition, predict on the masked photo, stitch, inpaint.
pub fn build_reflection_texture<T: Real, P: ReflectionPredictor<T> + ?Sized>(
    img: &ImageBuffer<T>,
    mask: &WaterMask<T>,
    pred: &P,
    cfg: &TextureConfig,
) -> Result<ReflectionTexture<T>, ReflectError> {
    let (w, h) = img.dims();
    if mask.dims() != (w, h) {
        return Err(ReflectError::DimensionMismatch {
            image: (w, h),
            mask: mask.dims(),
        });
    }
    let valid: Vec<bool> = (0..w * h).map(|i| mask.is_water(i % w, i / w)).collect();
    if !valid.iter().any(|&v| v) {
        return Err(ReflectError::NoWater);
    }
    let masked = ImageBuffer::from_fn(w, h, |x, y| {
        let p = mask.prob(x, y);
        img.pixel(x, y).map(|c| c * p)
    });
    let rects = patch_grid_strided(w, h, cfg.patch, cfg.stride());
    let patches: Vec<(Rect, ImageBuffer<T>)> = rects
        .par_iter()
        .map(|&r| (r, pred.predict(&masked.crop(r), &mask.crop(r))))
        .collect();
    let stitched = stitch_patches(&patches, w, h)?;
    inpaint(
        &ReflectionTexture {
            image: stitched,
            valid,
        },
        cfg.inpaint_radius,
    )
}
