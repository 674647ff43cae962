//! Progressive patch-based water segmentation.
//!
//! The photo is reduced to a pyramid whose coarsest level fits in 512 px.
//! Level 0 is predicted patch by patch; every finer level starts from the
//! bilinearly upsampled probability of the level below and re-predicts only
//! the patches where the new prediction disagrees by more than a threshold.
//! Overlapping patches combine with `max`. A guided filter against the
//! full-resolution photo produces the final mask.

use rayon::prelude::*;
use thiserror::Error;

use crate::raster::{box_mean, resize_bilinear, ImageBuffer, Rect, WaterMask};
use crate::real::Real;

pub const BASE_EDGE: usize = 512;
pub const MAX_EDGE: usize = 4096;
pub const PATCH: usize = 512;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("predictor failed on level {level} patch ({x0},{y0})-({x1},{y1}): {reason}")]
    Predictor {
        level: usize,
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        reason: String,
    },
    #[error("predictor returned {got:?} for a {expected:?} patch")]
    PredictorShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("empty pyramid")]
    EmptyPyramid,
}

/// Where a patch sits, for predictors that use position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchContext {
    pub level: usize,
    pub rect: Rect,
    pub level_width: usize,
    pub level_height: usize,
}

/// Maps an RGB patch to a same-sized water probability patch.
pub trait PatchPredictor<T: Real>: Send + Sync {
    fn predict(&self, patch: &ImageBuffer<T>, ctx: &PatchContext) -> Result<WaterMask<T>, String>;
}

impl<T, F> PatchPredictor<T> for F
where
    T: Real,
    F: Fn(&ImageBuffer<T>, &PatchContext) -> Result<WaterMask<T>, String> + Send + Sync,
{
    fn predict(&self, patch: &ImageBuffer<T>, ctx: &PatchContext) -> Result<WaterMask<T>, String> {
        self(patch, ctx)
    }
}

/// Per-pixel logistic model on saturation, value and vertical position:
/// `p = σ(bias + w_s·s + w_v·v + w_y·y/h)`. Water in outdoor photos tends to
/// sit low in the frame and be darker than the sky it reflects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticPredictor {
    pub bias: f64,
    pub w_sat: f64,
    pub w_val: f64,
    pub w_y: f64,
}

impl Default for LogisticPredictor {
    fn default() -> Self {
        Self {
            bias: -3.0,
            w_sat: 2.0,
            w_val: -1.5,
            w_y: 6.0,
        }
    }
}

impl<T: Real> PatchPredictor<T> for LogisticPredictor {
    fn predict(&self, patch: &ImageBuffer<T>, ctx: &PatchContext) -> Result<WaterMask<T>, String> {
        let lh = ctx.level_height.max(1) as f64;
        Ok(WaterMask::from_fn(patch.width(), patch.height(), |x, y| {
            let (_, s, v) = crate::raster::rgb_to_hsv(patch.pixel(x, y));
            let gy = (ctx.rect.y0 + y) as f64 + 0.5;
            let z = self.bias + self.w_sat * s.as_f64() + self.w_val * v.as_f64() + self.w_y * gy / lh;
            T::lit(1.0 / (1.0 + (-z).exp()))
        }))
    }
}

#[derive(Debug, Clone)]
pub struct PyramidLevel<T: Real> {
    pub index: usize,
    pub image: ImageBuffer<T>,
    pub patches: Vec<Rect>,
}

/// Pyramid levels (coarse to fine) plus the original photo for the guided filter.
#[derive(Debug, Clone)]
pub struct Pyramid<T: Real> {
    pub levels: Vec<PyramidLevel<T>>,
    pub original: ImageBuffer<T>,
}

/// Patch origins along one axis: stride `size/2`, last patch clamped inside.
pub fn patch_starts(len: usize, size: usize) -> Vec<usize> {
    patch_starts_strided(len, size, size / 2)
}

/// Patch origins along one axis with an explicit stride.
pub fn patch_starts_strided(len: usize, size: usize, stride: usize) -> Vec<usize> {
    if len <= size {
        return vec![0];
    }
    let stride = stride.max(1);
    let mut starts = Vec::new();
    let mut s = 0;
    while s + size < len {
        starts.push(s);
        s += stride;
    }
    starts.push(len - size);
    starts
}

/// Overlapping `size x size` grid covering a `w x h` raster.
pub fn patch_grid(w: usize, h: usize, size: usize) -> Vec<Rect> {
    patch_grid_strided(w, h, size, size / 2)
}

pub fn patch_grid_strided(w: usize, h: usize, size: usize, stride: usize) -> Vec<Rect> {
    let xs = patch_starts_strided(w, size, stride);
    let ys = patch_starts_strided(h, size, stride);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push(Rect::new(x, y, (x + size).min(w), (y + size).min(h)));
        }
    }
    out
}

/// Level sizes: level `i` of `L+1` is `ceil(dim / 2^(L-i))`, where `L` is the
/// smallest exponent bringing the longest edge to at most 512. Levels above
/// 4096 px are dropped; the original photo is kept separately.
pub fn pyramid_sizes(w: usize, h: usize) -> Vec<(usize, usize)> {
    let longest = w.max(h);
    let mut l = 0u32;
    while longest.div_ceil(1 << l) > BASE_EDGE {
        l += 1;
    }
    (0..=l)
        .map(|i| {
            let f = 1usize << (l - i);
            (w.div_ceil(f), h.div_ceil(f))
        })
        .filter(|&(a, b)| a.max(b) <= MAX_EDGE)
        .collect()
}

pub fn build_pyramid<T: Real>(img: &ImageBuffer<T>) -> Pyramid<T> {
    let (w, h) = img.dims();
    let levels = pyramid_sizes(w, h)
        .into_iter()
        .enumerate()
        .map(|(index, (lw, lh))| PyramidLevel {
            index,
            image: resize_bilinear(img, lw, lh),
            patches: patch_grid(lw, lh, PATCH),
        })
        .collect();
    Pyramid {
        levels,
        original: img.clone(),
    }
}

fn predict_level<T: Real, P: PatchPredictor<T> + ?Sized>(
    level: &PyramidLevel<T>,
    pred: &P,
) -> Result<Vec<WaterMask<T>>, SegError> {
    let (lw, lh) = level.image.dims();
    level
        .patches
        .par_iter()
        .map(|&rect| {
            let ctx = PatchContext {
                level: level.index,
                rect,
                level_width: lw,
                level_height: lh,
            };
            let out = pred.predict(&level.image.crop(rect), &ctx).map_err(|reason| SegError::Predictor {
                level: level.index,
                x0: rect.x0,
                y0: rect.y0,
                x1: rect.x1,
                y1: rect.y1,
                reason,
            })?;
            if out.dims() != (rect.width(), rect.height()) {
                return Err(SegError::PredictorShape {
                    expected: (rect.width(), rect.height()),
                    got: out.dims(),
                });
            }
            Ok(out)
        })
        .collect()
}

/// Writes `patch` into `dst` taking the per-pixel maximum with anything
/// already written there in this pass.
fn max_into<T: Real>(dst: &mut WaterMask<T>, written: &mut [bool], rect: Rect, patch: &WaterMask<T>) {
    let w = dst.width();
    for y in 0..rect.height() {
        for x in 0..rect.width() {
            let (gx, gy) = (rect.x0 + x, rect.y0 + y);
            let p = patch.prob(x, y);
            let i = gy * w + gx;
            if !written[i] || p > dst.prob(gx, gy) {
                dst.set(gx, gy, p);
                written[i] = true;
            }
        }
    }
}

/// Result of the progressive pass, with per-level intermediates for inspection.
#[derive(Debug, Clone)]
pub struct Segmentation<T: Real> {
    /// Probability at each pyramid level, coarse to fine.
    pub levels: Vec<WaterMask<T>>,
    /// Number of re-predicted patches per level (all patches at level 0).
    pub refined: Vec<usize>,
}

impl<T: Real> Segmentation<T> {
    pub fn finest(&self) -> &WaterMask<T> {
        self.levels.last().expect("at least one level")
    }
}

/// Runs the coarse-to-fine pass. At level 0 every patch is predicted. At finer
/// levels a patch replaces the upsampled probability only when its prediction
/// differs from it by more than `err_threshold` somewhere; overlapping
/// refined patches combine by maximum.
pub fn segment_progressive<T: Real, P: PatchPredictor<T> + ?Sized>(
    pyr: &Pyramid<T>,
    pred: &P,
    err_threshold: T,
) -> Result<Segmentation<T>, SegError> {
    let first = pyr.levels.first().ok_or(SegError::EmptyPyramid)?;
    let (w0, h0) = first.image.dims();
    let mut mask = WaterMask::filled(w0, h0, T::zero());
    let mut written = vec![false; w0 * h0];
    let preds = predict_level(first, pred)?;
    for (rect, p) in first.patches.iter().zip(&preds) {
        max_into(&mut mask, &mut written, *rect, p);
    }
    let mut levels = vec![mask];
    let mut refined = vec![first.patches.len()];
    for level in &pyr.levels[1..] {
        let (lw, lh) = level.image.dims();
        let up = levels.last().expect("non-empty").resize(lw, lh);
        let preds = predict_level(level, pred)?;
        let mut out = up.clone();
        let mut written = vec![false; lw * lh];
        let mut count = 0;
        for (rect, p) in level.patches.iter().zip(&preds) {
            let disagrees = (0..rect.height())
                .any(|y| (0..rect.width()).any(|x| (p.prob(x, y) - up.prob(rect.x0 + x, rect.y0 + y)).abs() > err_threshold));
            if disagrees {
                max_into(&mut out, &mut written, *rect, p);
                count += 1;
            }
        }
        levels.push(out);
        refined.push(count);
    }
    Ok(Segmentation { levels, refined })
}

/// Guided filter (box windows of radius `radius`) of `mask`, upsampled
/// bilinearly to the guide's size first, using the guide's luminance.
pub fn guided_filter_upsample<T: Real>(
    mask: &WaterMask<T>,
    guide: &ImageBuffer<T>,
    radius: usize,
    eps: T,
) -> WaterMask<T> {
    let (w, h) = guide.dims();
    let p: Vec<T> = mask.resize(w, h).data().to_vec();
    let i = guide.luminance();
    let ii: Vec<T> = i.iter().map(|&v| v * v).collect();
    let ip: Vec<T> = i.iter().zip(&p).map(|(&a, &b)| a * b).collect();
    let mean_i = box_mean(&i, w, h, radius);
    let mean_p = box_mean(&p, w, h, radius);
    let corr_ii = box_mean(&ii, w, h, radius);
    let corr_ip = box_mean(&ip, w, h, radius);
    let mut a = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    for k in 0..w * h {
        let var = (corr_ii[k] - mean_i[k] * mean_i[k]).max(T::zero());
        let cov = corr_ip[k] - mean_i[k] * mean_p[k];
        let denom = var + eps;
        let ak = if denom > T::zero() { cov / denom } else { T::zero() };
        a.push(ak);
        b.push(mean_p[k] - ak * mean_i[k]);
    }
    let mean_a = box_mean(&a, w, h, radius);
    let mean_b = box_mean(&b, w, h, radius);
    let q = (0..w * h).map(|k| (mean_a[k] * i[k] + mean_b[k]).clamp01()).collect();
    WaterMask::from_raw(w, h, q).expect("sizes match")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegConfig {
    pub err_threshold: f64,
    pub guide_radius: usize,
    pub guide_eps: f64,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            err_threshold: 0.2,
            guide_radius: 8,
            guide_eps: 1e-4,
        }
    }
}

/// Full segmentation: pyramid, progressive prediction, guided upsampling.
pub fn segment<T: Real, P: PatchPredictor<T> + ?Sized>(
    img: &ImageBuffer<T>,
    pred: &P,
    cfg: &SegConfig,
) -> Result<WaterMask<T>, SegError> {
    let pyr = build_pyramid(img);
    let seg = segment_progressive(&pyr, pred, T::lit(cfg.err_threshold))?;
    Ok(guided_filter_upsample(
        seg.finest(),
        &pyr.original,
        cfg.guide_radius,
        T::lit(cfg.guide_eps),
    ))
}
