//! Image dissimilarity measures and the estimation energy.
//!
//! The energy of a candidate is `E_T + λ·E_C`: a windowed structure/texture
//! distance between the rendered and the reference water crop, plus the
//! Hellinger distance between their HSV histograms. Both crops are the water
//! bounding box resized to 256x256.

use thiserror::Error;

use crate::ocean::{Ocean, OceanConfig, OceanError};
use crate::raster::{
    convolve_separable, gaussian_kernel, resize_bilinear, rgb_to_hsv, water_bbox, ImageBuffer, ImageError, Rect,
    WaterMask,
};
use crate::real::Real;
use crate::reflect::ReflectionTexture;
use crate::render::{RenderConfig, RenderError, Renderer, WaterParams};

pub const HUE_BINS: usize = 24;
pub const SAT_BINS: usize = 8;
pub const VAL_BINS: usize = 8;
pub const HIST_BINS: usize = HUE_BINS * SAT_BINS * VAL_BINS;
pub const CROP_SIZE: usize = 256;
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("histogram has no counts")]
    EmptyHistogram,
    #[error("images differ in size: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("unknown texture metric {0:?}")]
    UnknownMetric(String),
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Ocean(#[from] OceanError),
}

/// Counts over 24 hue x 8 saturation x 8 value bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvHistogram<T> {
    pub bins: Vec<T>,
}

impl<T: Real> HsvHistogram<T> {
    pub fn empty() -> Self {
        Self {
            bins: vec![T::zero(); HIST_BINS],
        }
    }

    pub fn total(&self) -> T {
        self.bins.iter().copied().sum()
    }

    /// Flat index of a `(hue, sat, val)` bin triple.
    pub fn index(h: usize, s: usize, v: usize) -> usize {
        (h * SAT_BINS + s) * VAL_BINS + v
    }

    /// Bin triple for one colour; the top edge of each axis folds into the last bin.
    pub fn bin_of(rgb: [T; 3]) -> (usize, usize, usize) {
        let (h, s, v) = rgb_to_hsv(rgb);
        let hb = (h / T::lit(15.0)).floor().to_usize().unwrap_or(0).min(HUE_BINS - 1);
        let sb = (s * T::lit(SAT_BINS as f64)).floor().to_usize().unwrap_or(0).min(SAT_BINS - 1);
        let vb = (v * T::lit(VAL_BINS as f64)).floor().to_usize().unwrap_or(0).min(VAL_BINS - 1);
        (hb, sb, vb)
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            bins: self.bins.iter().map(|&b| b * c).collect(),
        }
    }
}

/// Histogram of all pixels, or only those with mask probability at least 0.5.
pub fn hsv_histogram<T: Real>(img: &ImageBuffer<T>, mask: Option<&WaterMask<T>>) -> HsvHistogram<T> {
    let mut hist = HsvHistogram::empty();
    let (w, h) = img.dims();
    for y in 0..h {
        for x in 0..w {
            if let Some(m) = mask {
                if !m.is_water(x, y) {
                    continue;
                }
            }
            let (hb, sb, vb) = HsvHistogram::bin_of(img.pixel(x, y));
            hist.bins[HsvHistogram::<T>::index(hb, sb, vb)] += T::one();
        }
    }
    hist
}

/// `sqrt(1 - Σ sqrt(x_i y_i) / sqrt(Σx · Σy))`, clamped to `[0, 1]`.
pub fn hellinger<T: Real>(x: &HsvHistogram<T>, y: &HsvHistogram<T>) -> Result<T, MetricError> {
    hellinger_slices(&x.bins, &y.bins)
}

/// [`hellinger`] on raw bin slices; the shorter slice is padded with zeros.
pub fn hellinger_slices<T: Real>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    let sx: T = x.iter().copied().sum();
    let sy: T = y.iter().copied().sum();
    if sx <= T::zero() || sy <= T::zero() {
        return Err(MetricError::EmptyHistogram);
    }
    let overlap: T = x.iter().zip(y).map(|(&a, &b)| (a * b).sqrt()).sum();
    let bc = overlap / (sx * sy).sqrt();
    Ok((T::one() - bc).max(T::zero()).sqrt().clamp01())
}

/// A full-reference texture/structure distance in `[0, 1]`.
pub trait TextureMetric<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;
    fn distance(&self, x: &ImageBuffer<T>, y: &ImageBuffer<T>) -> Result<T, MetricError>;
}

/// Windowed luminance/structure comparison over a low-pass pyramid.
///
/// For each of `levels` pyramid levels and each channel, local means,
/// variances and covariance are taken over an 11x11 Gaussian window
/// (σ = 1.5). The per-pixel similarity is the average of
/// `l = (2μxμy + c1)/(μx² + μy² + c1)` and `s = (2σxy + c2)/(σx² + σy² + c2)`;
/// the distance is one minus its mean, levels weighted equally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureTextureMetric {
    pub levels: usize,
    pub window_sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for StructureTextureMetric {
    fn default() -> Self {
        Self {
            levels: 4,
            window_sigma: 1.5,
            c1: 1e-4,
            c2: 9e-4,
        }
    }
}

/// Local statistics of one plane.
#[derive(Debug, Clone)]
struct PlaneStats<T> {
    plane: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
}

/// Per-level, per-channel statistics of a reference image, reusable across comparisons.
#[derive(Debug, Clone)]
pub struct MetricCache<T> {
    dims: Vec<(usize, usize)>,
    stats: Vec<[PlaneStats<T>; 3]>,
}

impl StructureTextureMetric {
    fn pyramid<T: Real>(&self, img: &ImageBuffer<T>) -> Vec<ImageBuffer<T>> {
        let mut out = vec![img.clone()];
        for _ in 1..self.levels.max(1) {
            let prev = out.last().expect("non-empty");
            let (w, h) = prev.dims();
            if w < 2 || h < 2 {
                break;
            }
            let smooth = crate::raster::gaussian_blur(prev, T::one());
            out.push(resize_bilinear(&smooth, w.div_ceil(2), h.div_ceil(2)));
        }
        out
    }

    fn stats<T: Real>(&self, plane: Vec<T>, w: usize, h: usize, kernel: &[T]) -> PlaneStats<T> {
        let mean = convolve_separable(&plane, w, h, kernel);
        let sq: Vec<T> = plane.iter().map(|&v| v * v).collect();
        let ex2 = convolve_separable(&sq, w, h, kernel);
        let var = ex2.iter().zip(&mean).map(|(&e, &m)| e - m * m).collect();
        PlaneStats { plane, mean, var }
    }

    pub fn prepare<T: Real>(&self, img: &ImageBuffer<T>) -> MetricCache<T> {
        let kernel = gaussian_kernel(T::lit(self.window_sigma));
        let levels = self.pyramid(img);
        let dims = levels.iter().map(|l| l.dims()).collect();
        let stats = levels
            .iter()
            .map(|l| {
                let (w, h) = l.dims();
                [0, 1, 2].map(|c| self.stats(l.channel(c), w, h, &kernel))
            })
            .collect();
        MetricCache { dims, stats }
    }

    /// Distance between two prepared images.
    pub fn compare<T: Real>(&self, a: &MetricCache<T>, b: &MetricCache<T>) -> Result<T, MetricError> {
        if a.dims != b.dims {
            return Err(MetricError::DimensionMismatch {
                a: a.dims[0],
                b: b.dims[0],
            });
        }
        let kernel = gaussian_kernel(T::lit(self.window_sigma));
        let (c1, c2) = (T::lit(self.c1), T::lit(self.c2));
        let two = T::lit(2.0);
        let mut level_sum = T::zero();
        for (li, &(w, h)) in a.dims.iter().enumerate() {
            let mut chan_sum = T::zero();
            for c in 0..3 {
                let (sa, sb) = (&a.stats[li][c], &b.stats[li][c]);
                let prod: Vec<T> = sa.plane.iter().zip(&sb.plane).map(|(&x, &y)| x * y).collect();
                let exy = convolve_separable(&prod, w, h, &kernel);
                let mut acc = T::zero();
                for i in 0..w * h {
                    let (mx, my) = (sa.mean[i], sb.mean[i]);
                    let cov = exy[i] - mx * my;
                    let l = (two * mx * my + c1) / (mx * mx + my * my + c1);
                    let s = (two * cov + c2) / (sa.var[i] + sb.var[i] + c2);
                    acc += (l + s) / two;
                }
                chan_sum += acc / T::lit((w * h) as f64);
            }
            level_sum += chan_sum / T::lit(3.0);
        }
        let sim = level_sum / T::lit(a.dims.len() as f64);
        Ok((T::one() - sim).clamp01())
    }
}

impl<T: Real> TextureMetric<T> for StructureTextureMetric {
    fn name(&self) -> &'static str {
        "structure-texture"
    }

    fn distance(&self, x: &ImageBuffer<T>, y: &ImageBuffer<T>) -> Result<T, MetricError> {
        if x.dims() != y.dims() {
            return Err(MetricError::DimensionMismatch { a: x.dims(), b: y.dims() });
        }
        self.compare(&self.prepare(x), &self.prepare(y))
    }
}

/// Distance with the default surrogate metric.
pub fn texture_distance<T: Real>(x: &ImageBuffer<T>, y: &ImageBuffer<T>) -> Result<T, MetricError> {
    StructureTextureMetric::default().distance(x, y)
}

/// Texture metric implementations selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricKind {
    #[default]
    StructureTexture,
}

impl MetricKind {
    pub fn from_name(name: &str) -> Result<Self, MetricError> {
        match name {
            "structure-texture" => Ok(Self::StructureTexture),
            other => Err(MetricError::UnknownMetric(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::StructureTexture => "structure-texture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConfig {
    pub lambda: f64,
    pub metric: MetricKind,
    /// Side of the square evaluation crop.
    pub crop_size: usize,
    /// Animation time at which candidates are rendered.
    pub time: f64,
    /// Restrict histograms to water pixels.
    pub mask_histogram: bool,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            metric: MetricKind::StructureTexture,
            crop_size: CROP_SIZE,
            time: 0.0,
            mask_histogram: false,
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.lambda >= 0.0) {
            return Err(MetricError::NegativeLambda(self.lambda));
        }
        Ok(())
    }
}

/// `E_T + λ·E_C`.
pub fn combine_energy<T: Real>(texture: T, color: T, lambda: T) -> T {
    texture + lambda * color
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts<T> {
    pub texture: T,
    pub color: T,
    pub total: T,
}

/// Caches everything about the reference photo so that a candidate costs one
/// render plus one comparison. Candidates are rendered over the full frame,
/// at a resolution where the water bounding box spans about `crop_size`
/// pixels, and then cropped and resized like the reference. Stateless after
/// construction and safe to share between threads.
pub struct EnergyEvaluator<T: Real> {
    cfg: EnergyConfig,
    ocean: OceanConfig,
    bbox: Rect,
    render_bbox: Rect,
    renderer: Renderer<T>,
    reference: ImageBuffer<T>,
    reference_mask: WaterMask<T>,
    reference_hist: HsvHistogram<T>,
    reference_cache: MetricCache<T>,
    metric: StructureTextureMetric,
}

/// Full-frame render size for a bounding box that should span `n` pixels,
/// capped at `4n` on the long edge.
pub fn evaluation_render_size(frame: (usize, usize), bbox: Rect, n: usize) -> (usize, usize) {
    let (w, h) = (frame.0 as f64, frame.1 as f64);
    let long_box = bbox.width().max(bbox.height()).max(1) as f64;
    let scale = (n as f64 / long_box).min(4.0 * n as f64 / w.max(h));
    (
        ((w * scale).round() as usize).max(1),
        ((h * scale).round() as usize).max(1),
    )
}

/// `bbox` mapped from a `from` raster onto a `to` raster, at least one pixel.
pub fn scale_rect(bbox: Rect, from: (usize, usize), to: (usize, usize)) -> Rect {
    let sx = to.0 as f64 / from.0 as f64;
    let sy = to.1 as f64 / from.1 as f64;
    let x0 = ((bbox.x0 as f64 * sx).floor() as usize).min(to.0 - 1);
    let y0 = ((bbox.y0 as f64 * sy).floor() as usize).min(to.1 - 1);
    let x1 = ((bbox.x1 as f64 * sx).ceil() as usize).clamp(x0 + 1, to.0);
    let y1 = ((bbox.y1 as f64 * sy).ceil() as usize).clamp(y0 + 1, to.1);
    Rect::new(x0, y0, x1, y1)
}

impl<T: Real> EnergyEvaluator<T> {
    pub fn new(
        original: &ImageBuffer<T>,
        mask: &WaterMask<T>,
        texture: &ReflectionTexture<T>,
        cfg: EnergyConfig,
        ocean: OceanConfig,
        render: RenderConfig<T>,
    ) -> Result<Self, EnergyError> {
        cfg.validate()?;
        ocean.validate()?;
        if mask.dims() != original.dims() {
            return Err(ImageError::DimensionMismatch {
                expected: original.dims(),
                got: mask.dims(),
            }
            .into());
        }
        let bbox = water_bbox(mask, T::lit(0.5))?;
        let n = cfg.crop_size;
        let (rw, rh) = evaluation_render_size(original.dims(), bbox, n);
        let render_bbox = scale_rect(bbox, original.dims(), (rw, rh));
        let renderer = Renderer::new(original, mask, texture, rw, rh, render)?;
        let reference = resize_bilinear(&original.crop(bbox), n, n);
        let reference_mask = mask.crop(bbox).resize(n, n);
        let metric = StructureTextureMetric::default();
        let reference_hist = hsv_histogram(&reference, cfg.mask_histogram.then_some(&reference_mask));
        let reference_cache = metric.prepare(&reference);
        Ok(Self {
            cfg,
            ocean,
            bbox,
            render_bbox,
            renderer,
            reference,
            reference_mask,
            reference_hist,
            reference_cache,
            metric,
        })
    }

    pub fn config(&self) -> &EnergyConfig {
        &self.cfg
    }

    pub fn ocean_config(&self) -> &OceanConfig {
        &self.ocean
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    /// The water bounding box in renderer pixels.
    pub fn render_bbox(&self) -> Rect {
        self.render_bbox
    }

    pub fn reference(&self) -> &ImageBuffer<T> {
        &self.reference
    }

    pub fn renderer(&self) -> &Renderer<T> {
        &self.renderer
    }

    /// Renders a candidate and returns its evaluation crop.
    pub fn render(&self, params: &WaterParams<T>) -> Result<ImageBuffer<T>, EnergyError> {
        let ocean = Ocean::new(params.wind_speed, params.wind_dir, &self.ocean)?;
        let field = ocean.field(T::lit(self.cfg.time), params.choppiness)?;
        let frame = self.renderer.render(params, &field, &[])?;
        let n = self.cfg.crop_size;
        Ok(resize_bilinear(&frame.crop(self.render_bbox), n, n))
    }

    /// Scores a rendered crop against the reference.
    pub fn score(&self, frame: &ImageBuffer<T>) -> Result<EnergyParts<T>, EnergyError> {
        let cache = self.metric.prepare(frame);
        let texture = self.metric.compare(&cache, &self.reference_cache)?;
        let mask = self.cfg.mask_histogram.then_some(&self.reference_mask);
        let color = hellinger(&hsv_histogram(frame, mask), &self.reference_hist)?;
        Ok(EnergyParts {
            texture,
            color,
            total: combine_energy(texture, color, T::lit(self.cfg.lambda)),
        })
    }

    pub fn energy(&self, params: &WaterParams<T>) -> Result<T, EnergyError> {
        Ok(self.score(&self.render(params)?)?.total)
    }
}
