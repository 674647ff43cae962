//! Raster containers, color conversion, resampling and PNG I/O.
//!
//! Pixels are stored as normalized reals in `[0, 1]`; 8-bit quantization only
//! happens in [`load_image`] / [`save_image`] and their mask counterparts.
//! All resampling clamps to the edge.

use std::path::Path;

use thiserror::Error;

use crate::real::{lerp, Real};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported raster format in {path}: {reason}")]
    UnsupportedFormat { path: String, reason: String },
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BadLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
    #[error("no water region above threshold {threshold}")]
    NoWaterRegion { threshold: f64 },
    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },
}

/// Axis-aligned pixel rectangle, `x1`/`y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Row-major RGB raster with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> ImageBuffer<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::zero(); width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [T; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    /// Builds an image from a per-pixel closure; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let p = f(x, y);
                data.extend(p.iter().map(|c| c.clamp01()));
            }
        }
        Self { width, height, data }
    }

    /// Wraps interleaved RGB data, clamping every value to `[0, 1]`.
    pub fn from_raw(width: usize, height: usize, mut data: Vec<T>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if data.len() != width * height * 3 {
            return Err(ImageError::BadLength {
                width,
                height,
                channels: 3,
                got: data.len(),
            });
        }
        data.iter_mut().for_each(|c| *c = c.clamp01());
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.data[i + c] = rgb[c].clamp01();
        }
    }

    #[inline]
    pub fn pixel_clamped(&self, x: isize, y: isize) -> [T; 3] {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.pixel(xc, yc)
    }

    /// Bilinear sample at continuous pixel coordinates, where the center of
    /// pixel `(i, j)` sits at `(i + 0.5, j + 0.5)`.
    pub fn sample(&self, u: T, v: T) -> [T; 3] {
        let (x0, y0, fx, fy) = bilinear_setup(u, v);
        let p00 = self.pixel_clamped(x0, y0);
        let p10 = self.pixel_clamped(x0 + 1, y0);
        let p01 = self.pixel_clamped(x0, y0 + 1);
        let p11 = self.pixel_clamped(x0 + 1, y0 + 1);
        let mut out = [T::zero(); 3];
        for c in 0..3 {
            out[c] = lerp(lerp(p00[c], p10[c], fx), lerp(p01[c], p11[c], fx), fy);
        }
        out
    }

    pub fn crop(&self, r: Rect) -> Self {
        Self::from_fn(r.width(), r.height(), |x, y| self.pixel(r.x0 + x, r.y0 + y))
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(x, self.height - 1 - y))
    }

    /// Rec. 601 luma plane.
    pub fn luminance(&self) -> Vec<T> {
        let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        self.data
            .chunks_exact(3)
            .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
            .collect()
    }

    /// One channel as a plane.
    pub fn channel(&self, c: usize) -> Vec<T> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn from_channels(width: usize, height: usize, planes: [&[T]; 3]) -> Self {
        Self::from_fn(width, height, |x, y| {
            let i = y * width + x;
            [planes[0][i], planes[1][i], planes[2][i]]
        })
    }

    pub fn convert<U: Real>(&self) -> ImageBuffer<U> {
        ImageBuffer {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&c| U::lit(c.as_f64())).collect(),
        }
    }
}

/// Per-pixel water probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterMask<T> {
    width: usize,
    height: usize,
    prob: Vec<T>,
}

impl<T: Real> WaterMask<T> {
    pub fn filled(width: usize, height: usize, p: T) -> Self {
        Self {
            width,
            height,
            prob: vec![p.clamp01(); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut prob = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                prob.push(f(x, y).clamp01());
            }
        }
        Self { width, height, prob }
    }

    pub fn from_raw(width: usize, height: usize, mut prob: Vec<T>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if prob.len() != width * height {
            return Err(ImageError::BadLength {
                width,
                height,
                channels: 1,
                got: prob.len(),
            });
        }
        prob.iter_mut().for_each(|p| *p = p.clamp01());
        Ok(Self { width, height, prob })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.prob
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> T {
        self.prob[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, p: T) {
        self.prob[y * self.width + x] = p.clamp01();
    }

    /// Water iff probability is at least one half.
    #[inline]
    pub fn is_water(&self, x: usize, y: usize) -> bool {
        self.prob(x, y) >= T::lit(0.5)
    }

    #[inline]
    pub fn prob_clamped(&self, x: isize, y: isize) -> T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.prob(xc, yc)
    }

    pub fn sample(&self, u: T, v: T) -> T {
        let (x0, y0, fx, fy) = bilinear_setup(u, v);
        let a = lerp(self.prob_clamped(x0, y0), self.prob_clamped(x0 + 1, y0), fx);
        let b = lerp(self.prob_clamped(x0, y0 + 1), self.prob_clamped(x0 + 1, y0 + 1), fx);
        lerp(a, b, fy)
    }

    pub fn crop(&self, r: Rect) -> Self {
        Self::from_fn(r.width(), r.height(), |x, y| self.prob(r.x0 + x, r.y0 + y))
    }

    pub fn resize(&self, w: usize, h: usize) -> Self {
        let prob = resample_bilinear(&self.prob, self.width, self.height, 1, w, h);
        Self {
            width: w,
            height: h,
            prob,
        }
    }

    pub fn convert<U: Real>(&self) -> WaterMask<U> {
        WaterMask {
            width: self.width,
            height: self.height,
            prob: self.prob.iter().map(|&c| U::lit(c.as_f64())).collect(),
        }
    }
}

#[inline]
fn bilinear_setup<T: Real>(u: T, v: T) -> (isize, isize, T, T) {
    let half = T::lit(0.5);
    let sx = u - half;
    let sy = v - half;
    let fx0 = sx.floor();
    let fy0 = sy.floor();
    (
        fx0.to_isize().unwrap_or(0),
        fy0.to_isize().unwrap_or(0),
        sx - fx0,
        sy - fy0,
    )
}

/// Bilinear resampling of an interleaved plane with pixel-center alignment.
pub(crate) fn resample_bilinear<T: Real>(
    src: &[T],
    sw: usize,
    sh: usize,
    channels: usize,
    dw: usize,
    dh: usize,
) -> Vec<T> {
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let half = T::lit(0.5);
    let scale_x = T::lit(sw as f64 / dw as f64);
    let scale_y = T::lit(sh as f64 / dh as f64);
    let xs: Vec<(usize, usize, T)> = (0..dw)
        .map(|x| axis_taps((T::lit(x as f64) + half) * scale_x - half, sw))
        .collect();
    let mut out = Vec::with_capacity(dw * dh * channels);
    for y in 0..dh {
        let (y0, y1, fy) = axis_taps((T::lit(y as f64) + half) * scale_y - half, sh);
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let at = |xx: usize, yy: usize| src[(yy * sw + xx) * channels + c];
                let top = lerp(at(x0, y0), at(x1, y0), fx);
                let bot = lerp(at(x0, y1), at(x1, y1), fx);
                out.push(lerp(top, bot, fy));
            }
        }
    }
    out
}

#[inline]
fn axis_taps<T: Real>(s: T, n: usize) -> (usize, usize, T) {
    let max = T::lit((n - 1) as f64);
    let s = s.clamp_to(T::zero(), max);
    let i0 = s.floor();
    let i0u = i0.to_usize().unwrap_or(0).min(n - 1);
    let i1u = (i0u + 1).min(n - 1);
    (i0u, i1u, s - i0)
}

/// Bilinear resize with clamp-to-edge sampling. Same-size resizes return an
/// identical copy.
pub fn resize_bilinear<T: Real>(img: &ImageBuffer<T>, w: usize, h: usize) -> ImageBuffer<T> {
    assert!(w >= 1 && h >= 1, "target size must be at least 1x1");
    let data = resample_bilinear(&img.data, img.width, img.height, 3, w, h);
    ImageBuffer {
        width: w,
        height: h,
        data,
    }
}

/// Hexcone RGB to HSV. Hue in degrees `[0, 360)`; achromatic hue is 0.
pub fn rgb_to_hsv<T: Real>(rgb: [T; 3]) -> (T, T, T) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > T::zero() { delta / max } else { T::zero() };
    if delta <= T::zero() {
        return (T::zero(), s, v);
    }
    let sixty = T::lit(60.0);
    let mut h = if max == r {
        sixty * ((g - b) / delta)
    } else if max == g {
        sixty * ((b - r) / delta + T::lit(2.0))
    } else {
        sixty * ((r - g) / delta + T::lit(4.0))
    };
    if h < T::zero() {
        h += T::lit(360.0);
    }
    if h >= T::lit(360.0) {
        h -= T::lit(360.0);
    }
    (h, s, v)
}

/// Inverse of [`rgb_to_hsv`].
pub fn hsv_to_rgb<T: Real>(h: T, s: T, v: T) -> [T; 3] {
    let c = v * s;
    let hp = (h / T::lit(60.0)) % T::lit(6.0);
    let x = c * (T::one() - ((hp % T::lit(2.0)) - T::one()).abs());
    let m = v - c;
    let z = T::zero();
    let (r, g, b) = match hp.to_u32().unwrap_or(0) {
        0 => (c, x, z),
        1 => (x, c, z),
        2 => (z, c, x),
        3 => (z, x, c),
        4 => (x, z, c),
        _ => (c, z, x),
    };
    [r + m, g + m, b + m]
}

/// Tightest rectangle containing every pixel with `prob >= threshold`.
pub fn water_bbox<T: Real>(mask: &WaterMask<T>, threshold: T) -> Result<Rect, ImageError> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.prob(x, y) >= threshold {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(ImageError::NoWaterRegion {
            threshold: threshold.as_f64(),
        });
    }
    Ok(Rect::new(x0, y0, x1, y1))
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel<T: Real>(sigma: T) -> Vec<T> {
    if sigma <= T::zero() {
        return vec![T::one()];
    }
    let radius = (sigma * T::lit(3.0)).ceil().to_usize().unwrap_or(0).max(1);
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let mut k: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::lit(i as f64 - radius as f64);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let sum: T = k.iter().copied().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution of a single plane with a symmetric kernel, clamp-to-edge.
pub(crate) fn convolve_separable<T: Real>(src: &[T], w: usize, h: usize, kernel: &[T]) -> Vec<T> {
    if kernel.len() == 1 {
        return src.to_vec();
    }
    let r = (kernel.len() / 2) as isize;
    let ru = r as usize;
    let mut tmp = vec![T::zero(); w * h];
    // Row padded with replicated edges so the inner loop needs no clamping.
    let mut padded = vec![T::zero(); w + 2 * ru];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[(i as isize - r).clamp(0, w as isize - 1) as usize];
        }
        for (x, out) in tmp[y * w..(y + 1) * w].iter_mut().enumerate() {
            let win = &padded[x..x + kernel.len()];
            let mut acc = T::zero();
            for (&kv, &v) in kernel.iter().zip(win) {
                acc += kv * v;
            }
            *out = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[yy * w..(yy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst_row[x] += kv * src_row[x];
            }
        }
    }
    out
}

pub(crate) fn gaussian_blur_plane<T: Real>(src: &[T], w: usize, h: usize, sigma: T) -> Vec<T> {
    convolve_separable(src, w, h, &gaussian_kernel(sigma))
}

/// Gaussian blur of every channel.
pub fn gaussian_blur<T: Real>(img: &ImageBuffer<T>, sigma: T) -> ImageBuffer<T> {
    if sigma <= T::zero() {
        return img.clone();
    }
    let (w, h) = img.dims();
    let planes: Vec<Vec<T>> = (0..3)
        .map(|c| gaussian_blur_plane(&img.channel(c), w, h, sigma))
        .collect();
    ImageBuffer::from_channels(w, h, [&planes[0], &planes[1], &planes[2]])
}

/// Mean over a `(2r+1)^2` window clipped to the image, via an integral image.
pub(crate) fn box_mean<T: Real>(src: &[T], w: usize, h: usize, r: usize) -> Vec<T> {
    let stride = w + 1;
    let mut integral = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0f64;
        for x in 0..w {
            row += src[y * w + x].as_f64();
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let ya = y.saturating_sub(r);
        let yb = (y + r + 1).min(h);
        for x in 0..w {
            let xa = x.saturating_sub(r);
            let xb = (x + r + 1).min(w);
            let s = integral[yb * stride + xb] - integral[ya * stride + xb] - integral[yb * stride + xa]
                + integral[ya * stride + xa];
            let n = ((yb - ya) * (xb - xa)) as f64;
            out.push(T::lit(s / n));
        }
    }
    out
}

fn to_u8<T: Real>(v: T) -> u8 {
    (v.clamp01().as_f64() * 255.0).round() as u8
}

fn open_png(path: &Path) -> Result<image::DynamicImage, ImageError> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: display.clone(),
        source,
    })?;
    let format = image::guess_format(&bytes).map_err(|e| ImageError::UnsupportedFormat {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    if format != image::ImageFormat::Png {
        return Err(ImageError::UnsupportedFormat {
            path: display,
            reason: format!("{format:?} (only PNG is supported)"),
        });
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        ImageError::UnsupportedFormat {
            path: display.clone(),
            reason: e.to_string(),
        }
    })?;
    use image::ColorType::*;
    if !matches!(img.color(), Rgb8 | Rgba8 | L8 | La8) {
        return Err(ImageError::UnsupportedFormat {
            path: display,
            reason: format!("{:?} is not an 8-bit raster", img.color()),
        });
    }
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageError::ZeroDimension {
            width: img.width() as usize,
            height: img.height() as usize,
        });
    }
    Ok(img)
}

/// Loads an 8-bit PNG, mapping `[0, 255]` linearly onto `[0, 1]`.
pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<ImageBuffer<T>, ImageError> {
    let rgb = open_png(path.as_ref())?.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let inv = 1.0 / 255.0;
    let data = rgb.into_raw().into_iter().map(|b| T::lit(b as f64 * inv)).collect();
    ImageBuffer::from_raw(w, h, data)
}

/// Writes an 8-bit RGB PNG.
pub fn save_image<T: Real>(img: &ImageBuffer<T>, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data.iter().map(|&c| to_u8(c)).collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| ImageError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Loads an 8-bit grayscale mask (255 = water). Color files are reduced to luma.
pub fn load_mask<T: Real>(path: impl AsRef<Path>) -> Result<WaterMask<T>, ImageError> {
    let luma = open_png(path.as_ref())?.into_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let inv = 1.0 / 255.0;
    let prob = luma.into_raw().into_iter().map(|b| T::lit(b as f64 * inv)).collect();
    WaterMask::from_raw(w, h, prob)
}

pub fn save_mask<T: Real>(mask: &WaterMask<T>, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = mask.prob.iter().map(|&c| to_u8(c)).collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        mask.width as u32,
        mask.height as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|e| ImageError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
