//! Spectral deep-water surface synthesis.
//!
//! A Phillips spectrum seeded from the wind drives complex Fourier amplitudes
//! `h0(k)`; these are rotated in phase by the deep-water dispersion relation
//! and transformed back to obtain height, choppy horizontal displacement and
//! surface normals on a periodic `N x N` tile of side `domain_len` meters.
//!
//! Random amplitudes come from a SplitMix64 stream fed through Box-Muller, so
//! the same `(seed, params)` produce the same surface on any platform:
//! cells are visited row-major (`z` rows, `x` columns) and each cell draws one
//! Box-Muller pair `(xi_r, xi_i)`, including cells whose amplitude is zeroed.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::{Fft2, FftError};
use crate::geom::Vec3;
use crate::real::{lerp, Real};

pub const GRAVITY: f64 = 9.81;
pub const WIND_SPEED_RANGE: (f64, f64) = (1.5, 30.0);
pub const WIND_DIR_RANGE: (f64, f64) = (0.0, 180.0);
pub const CHOPPINESS_RANGE: (f64, f64) = (0.0, 3.0);

#[derive(Debug, Error)]
pub enum OceanError {
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid ocean configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fft(#[from] FftError),
}

/// Grid and spectrum constants. Serialized into scene files under `[ocean]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OceanConfig {
    /// Grid size `N`, a power of two.
    pub grid_size: usize,
    /// Side of the periodic tile, meters.
    pub domain_len: f64,
    /// Phillips constant `A`.
    pub amplitude: f64,
    /// Small-wave cutoff as a fraction of the largest wave `L = V²/g`.
    pub small_wave_ratio: f64,
    /// Drop components travelling against the wind.
    pub suppress_counter_wind: bool,
    /// Quantize the dispersion to this loop period (seconds) when set.
    pub loop_period: Option<f64>,
    pub seed: u64,
}

impl Default for OceanConfig {
    fn default() -> Self {
        Self {
            grid_size: 256,
            domain_len: 100.0,
            amplitude: 4e-5,
            small_wave_ratio: 1e-3,
            suppress_counter_wind: true,
            loop_period: None,
            seed: 0,
        }
    }
}

impl OceanConfig {
    /// Grid used while estimating parameters.
    pub fn optimization() -> Self {
        Self {
            grid_size: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OceanError> {
        if self.grid_size < 2 || !self.grid_size.is_power_of_two() {
            return Err(FftError::NotPowerOfTwo(self.grid_size).into());
        }
        if !(self.domain_len > 0.0) {
            return Err(OceanError::Config(format!("domain_len must be positive, got {}", self.domain_len)));
        }
        if !(self.amplitude >= 0.0) {
            return Err(OceanError::Config(format!("amplitude must be non-negative, got {}", self.amplitude)));
        }
        if let Some(p) = self.loop_period {
            if !(p > 0.0) {
                return Err(OceanError::Config(format!("loop_period must be positive, got {p}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_range(name: &'static str, value: f64, (lo, hi): (f64, f64)) -> Result<(), OceanError> {
    if value.is_nan() || value < lo || value > hi {
        return Err(OceanError::OutOfRange { name, value, lo, hi });
    }
    Ok(())
}

/// SplitMix64 generator with a Box-Muller normal pair.
#[derive(Debug, Clone)]
pub struct SpectrumRng {
    state: u64,
}

impl SpectrumRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Two independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

/// Signed frequency index for FFT ordering.
#[inline]
pub fn freq_index(i: usize, n: usize) -> isize {
    if i < n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Initial Fourier amplitudes for one wind configuration.
#[derive(Debug, Clone)]
pub struct SpectrumGrid<T: Real> {
    n: usize,
    domain_len: T,
    wind_speed: T,
    wind_dir_deg: T,
    seed: u64,
    loop_period: Option<T>,
    h0: Vec<Complex<T>>,
    /// Wavevector per cell, `(kx, kz)` in rad/m.
    k: Vec<(T, T)>,
}

impl<T: Real> SpectrumGrid<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain_len(&self) -> T {
        self.domain_len
    }

    pub fn wind_speed(&self) -> T {
        self.wind_speed
    }

    pub fn wind_dir_deg(&self) -> T {
        self.wind_dir_deg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn h0(&self) -> &[Complex<T>] {
        &self.h0
    }

    pub fn wavevector(&self, ix: usize, iz: usize) -> (T, T) {
        self.k[iz * self.n + ix]
    }

    /// Row-major index of `-k` for the cell at `(ix, iz)`.
    #[inline]
    pub fn mirror_index(&self, ix: usize, iz: usize) -> usize {
        let n = self.n;
        ((n - iz) % n) * n + (n - ix) % n
    }

    /// Deep-water dispersion `ω = sqrt(g |k|)`, optionally quantized to the loop period.
    pub fn omega(&self, k_len: T) -> T {
        let w = (T::lit(GRAVITY) * k_len).sqrt();
        match self.loop_period {
            Some(p) => {
                let w0 = T::TAU() / p;
                (w / w0).floor() * w0
            }
            None => w,
        }
    }
}

/// Phillips spectrum `A exp(-1/(kL)²)/k⁴ (k̂·ŵ)² exp(-k²ℓ²)` with `L = V²/g`.
pub fn phillips<T: Real>(kx: T, kz: T, wind_speed: T, wind_dir_deg: T, amplitude: T, small_wave_ratio: T) -> T {
    let k2 = kx * kx + kz * kz;
    if k2 <= T::zero() {
        return T::zero();
    }
    let k_len = k2.sqrt();
    let big_l = wind_speed * wind_speed / T::lit(GRAVITY);
    let small_l = small_wave_ratio * big_l;
    let theta = wind_dir_deg.to_radians();
    let cos_kw = (kx * theta.cos() + kz * theta.sin()) / k_len;
    let kl = k_len * big_l;
    amplitude * (-T::one() / (kl * kl)).exp() / (k2 * k2) * cos_kw * cos_kw * (-k2 * small_l * small_l).exp()
}

/// Builds `h0(k) = (ξr + iξi)/√2 · √P(k)` on the grid. DC and the Nyquist row
/// and column are zero so every mode has a proper conjugate partner.
pub fn init_spectrum<T: Real>(wind_speed: T, wind_dir_deg: T, cfg: &OceanConfig) -> Result<SpectrumGrid<T>, OceanError> {
    cfg.validate()?;
    check_range("wind_speed", wind_speed.as_f64(), WIND_SPEED_RANGE)?;
    check_range("wind_dir", wind_dir_deg.as_f64(), WIND_DIR_RANGE)?;
    let n = cfg.grid_size;
    let domain_len = T::lit(cfg.domain_len);
    let amplitude = T::lit(cfg.amplitude);
    let ratio = T::lit(cfg.small_wave_ratio);
    let theta = wind_dir_deg.to_radians();
    let (wx, wz) = (theta.cos(), theta.sin());
    let dk = T::TAU() / domain_len;
    let inv_sqrt2 = T::FRAC_1_SQRT_2();
    let mut rng = SpectrumRng::new(cfg.seed);
    let mut h0 = Vec::with_capacity(n * n);
    let mut k = Vec::with_capacity(n * n);
    for iz in 0..n {
        for ix in 0..n {
            let (xr, xi) = rng.normal_pair();
            let kx = dk * T::lit(freq_index(ix, n) as f64);
            let kz = dk * T::lit(freq_index(iz, n) as f64);
            k.push((kx, kz));
            let nyquist = ix == n / 2 || iz == n / 2;
            let against = cfg.suppress_counter_wind && kx * wx + kz * wz < T::zero();
            if (ix == 0 && iz == 0) || nyquist || against {
                h0.push(Complex::new(T::zero(), T::zero()));
                continue;
            }
            let p = phillips(kx, kz, wind_speed, wind_dir_deg, amplitude, ratio);
            let s = p.sqrt() * inv_sqrt2;
            h0.push(Complex::new(T::lit(xr) * s, T::lit(xi) * s));
        }
    }
    Ok(SpectrumGrid {
        n,
        domain_len,
        wind_speed,
        wind_dir_deg,
        seed: cfg.seed,
        loop_period: cfg.loop_period.map(T::lit),
        h0,
        k,
    })
}

/// `h̃(k,t) = h0(k) e^{iωt} + conj(h0(-k)) e^{-iωt}`.
pub fn evolve<T: Real>(grid: &SpectrumGrid<T>, t: T) -> Vec<Complex<T>> {
    let n = grid.n;
    let mut out = Vec::with_capacity(n * n);
    for iz in 0..n {
        for ix in 0..n {
            let i = iz * n + ix;
            let (kx, kz) = grid.k[i];
            let w = grid.omega((kx * kx + kz * kz).sqrt());
            let (s, c) = (w * t).sin_cos();
            let fwd = Complex::new(c, s);
            let back = Complex::new(c, -s);
            out.push(grid.h0[i] * fwd + grid.h0[grid.mirror_index(ix, iz)].conj() * back);
        }
    }
    out
}

/// Height, choppy displacement and normals at one instant.
#[derive(Debug, Clone)]
pub struct DisplacementField<T: Real> {
    pub n: usize,
    pub domain_len: T,
    pub time: T,
    pub height: Vec<T>,
    pub displace_x: Vec<T>,
    pub displace_z: Vec<T>,
    pub normal: Vec<Vec3<T>>,
    /// Largest imaginary component left in the height transform.
    pub imag_residual: T,
}

impl<T: Real> DisplacementField<T> {
    /// A flat, motionless surface.
    pub fn flat(n: usize, domain_len: T) -> Self {
        Self {
            n,
            domain_len,
            time: T::zero(),
            height: vec![T::zero(); n * n],
            displace_x: vec![T::zero(); n * n],
            displace_z: vec![T::zero(); n * n],
            normal: vec![Vec3::up(); n * n],
            imag_residual: T::zero(),
        }
    }

    /// Periodic bilinear lookup at world `(x, z)`: returns `(displacement, normal)`
    /// where displacement is `(dx, height, dz)`.
    pub fn sample(&self, x: T, z: T) -> (Vec3<T>, Vec3<T>) {
        let n = self.n;
        let nf = T::lit(n as f64);
        let u = x / self.domain_len * nf;
        let v = z / self.domain_len * nf;
        let fu = u.floor();
        let fv = v.floor();
        let (ax, az) = (u - fu, v - fv);
        let wrap = |f: T| -> usize {
            let m = f.to_i64().unwrap_or(0).rem_euclid(n as i64);
            m as usize
        };
        let (x0, z0) = (wrap(fu), wrap(fv));
        let (x1, z1) = ((x0 + 1) % n, (z0 + 1) % n);
        let idx = [z0 * n + x0, z0 * n + x1, z1 * n + x0, z1 * n + x1];
        let bl = |arr: &[T]| lerp(lerp(arr[idx[0]], arr[idx[1]], ax), lerp(arr[idx[2]], arr[idx[3]], ax), az);
        let disp = Vec3::new(bl(&self.displace_x), bl(&self.height), bl(&self.displace_z));
        let nrm = self.normal[idx[0]]
            .lerp(self.normal[idx[1]], ax)
            .lerp(self.normal[idx[2]].lerp(self.normal[idx[3]], ax), az)
            .normalize();
        (disp, nrm)
    }

    /// Grid spacing in meters.
    pub fn cell(&self) -> T {
        self.domain_len / T::lit(self.n as f64)
    }

    pub fn height_variance(&self) -> T {
        let nf = T::lit(self.height.len() as f64);
        let mean = self.height.iter().copied().sum::<T>() / nf;
        self.height.iter().map(|&h| (h - mean) * (h - mean)).sum::<T>() / nf
    }

    pub fn height_rms(&self) -> T {
        let nf = T::lit(self.height.len() as f64);
        (self.height.iter().map(|&h| h * h).sum::<T>() / nf).sqrt()
    }
}

/// Evolves the spectrum to `t` and transforms height, displacement and slopes
/// back to the spatial domain. Spatial fields are the plain Fourier sums
/// `Σ_k F(k) e^{ik·x}`, so amplitudes do not depend on the grid size.
pub fn synthesize<T: Real>(grid: &SpectrumGrid<T>, t: T, choppiness: T) -> Result<DisplacementField<T>, OceanError> {
    check_range("choppiness", choppiness.as_f64(), CHOPPINESS_RANGE)?;
    let plan = Fft2::square(grid.n)?;
    synthesize_with(&plan, grid, t, choppiness)
}

/// [`synthesize`] reusing an FFT plan of matching size.
pub fn synthesize_with<T: Real>(
    plan: &Fft2<T>,
    grid: &SpectrumGrid<T>,
    t: T,
    choppiness: T,
) -> Result<DisplacementField<T>, OceanError> {
    check_range("choppiness", choppiness.as_f64(), CHOPPINESS_RANGE)?;
    let n = grid.n;
    let ht = evolve(grid, t);
    let zero = Complex::new(T::zero(), T::zero());
    let mut dx = vec![zero; n * n];
    let mut dz = vec![zero; n * n];
    let mut sx = vec![zero; n * n];
    let mut sz = vec![zero; n * n];
    for (i, &h) in ht.iter().enumerate() {
        let (kx, kz) = grid.k[i];
        let k_len = (kx * kx + kz * kz).sqrt();
        // i·h
        let ih = Complex::new(-h.im, h.re);
        if k_len > T::zero() {
            dx[i] = -ih * (kx / k_len);
            dz[i] = -ih * (kz / k_len);
        }
        sx[i] = ih * kx;
        sz[i] = ih * kz;
    }
    let mut height = ht;
    for buf in [&mut height, &mut dx, &mut dz, &mut sx, &mut sz] {
        plan.inverse_unnormalized(buf)?;
    }
    let imag_residual = height.iter().map(|c| c.im.abs()).fold(T::zero(), T::max);
    let normal = sx
        .iter()
        .zip(&sz)
        .map(|(a, b)| Vec3::new(-a.re, T::one(), -b.re).normalize())
        .collect();
    Ok(DisplacementField {
        n,
        domain_len: grid.domain_len,
        time: t,
        height: height.iter().map(|c| c.re).collect(),
        displace_x: dx.iter().map(|c| c.re * choppiness).collect(),
        displace_z: dz.iter().map(|c| c.re * choppiness).collect(),
        normal,
        imag_residual,
    })
}

/// Convenience: spectrum plus cached FFT plan for repeated synthesis.
#[derive(Debug, Clone)]
pub struct Ocean<T: Real> {
    spectrum: SpectrumGrid<T>,
    plan: Fft2<T>,
}

impl<T: Real> Ocean<T> {
    pub fn new(wind_speed: T, wind_dir_deg: T, cfg: &OceanConfig) -> Result<Self, OceanError> {
        let spectrum = init_spectrum(wind_speed, wind_dir_deg, cfg)?;
        let plan = Fft2::square(cfg.grid_size)?;
        Ok(Self { spectrum, plan })
    }

    pub fn spectrum(&self) -> &SpectrumGrid<T> {
        &self.spectrum
    }

    pub fn field(&self, t: T, choppiness: T) -> Result<DisplacementField<T>, OceanError> {
        synthesize_with(&self.plan, &self.spectrum, t, choppiness)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> OceanConfig {
        OceanConfig {
            grid_size: n,
            ..OceanConfig::default()
        }
    }

    #[test]
    fn perpendicular_wavevector_has_zero_power() {
        // Wind along +x, k along +z.
        let p = phillips(0.0f64, 0.5, 10.0, 0.0, 4e-5, 1e-3);
        assert_eq!(p, 0.0);
        let p = phillips(0.3f64, 0.0, 10.0, 90.0, 4e-5, 1e-3);
        assert!(p.abs() < 1e-30);
    }

    #[test]
    fn phillips_matches_hand_evaluation_on_4x4_grid() {
        // Independent evaluation of each factor for a 4x4 grid of 20 m.
        let (v, dir, a) = (1.5f64, 30.0f64, 4e-5f64);
        let big_l = v * v / 9.81;
        let dk = std::f64::consts::TAU / 20.0;
        for iz in 0..4usize {
            for ix in 0..4usize {
                let kx = dk * freq_index(ix, 4) as f64;
                let kz = dk * freq_index(iz, 4) as f64;
                let k = (kx * kx + kz * kz).sqrt();
                let got = phillips(kx, kz, v, dir, a, 1e-3);
                if k == 0.0 {
                    assert_eq!(got, 0.0);
                    continue;
                }
                let cosang = (kx * dir.to_radians().cos() + kz * dir.to_radians().sin()) / k;
                let expected = a * (-1.0 / (k * big_l).powi(2)).exp() / k.powi(4)
                    * cosang.powi(2)
                    * (-(k * 1e-3 * big_l).powi(2)).exp();
                assert!((got - expected).abs() <= 1e-15 * expected.abs().max(1e-300));
                // At this tiny L the low-frequency cutoff dominates.
                assert!(got < a / k.powi(4) * 1e-3);
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_h0() {
        let a = init_spectrum::<f64>(8.0, 40.0, &cfg(32)).unwrap();
        let b = init_spectrum::<f64>(8.0, 40.0, &cfg(32)).unwrap();
        assert_eq!(a.h0(), b.h0());
        assert_eq!(a.h0()[0], Complex::new(0.0, 0.0));
        let c = init_spectrum::<f64>(
            8.0,
            40.0,
            &OceanConfig {
                seed: 1,
                ..cfg(32)
            },
        )
        .unwrap();
        assert_ne!(a.h0(), c.h0());
    }

    #[test]
    fn rejects_out_of_range_wind() {
        assert!(matches!(
            init_spectrum::<f64>(31.0, 0.0, &cfg(16)),
            Err(OceanError::OutOfRange { name: "wind_speed", .. })
        ));
        assert!(matches!(
            init_spectrum::<f64>(5.0, 190.0, &cfg(16)),
            Err(OceanError::OutOfRange { name: "wind_dir", .. })
        ));
        assert!(matches!(init_spectrum::<f64>(5.0, 10.0, &cfg(48)), Err(OceanError::Fft(_))));
    }

    #[test]
    fn evolve_at_zero_and_hermitian() {
        let grid = init_spectrum::<f64>(
            12.0,
            20.0,
            &OceanConfig {
                suppress_counter_wind: false,
                ..cfg(16)
            },
        )
        .unwrap();
        let h = evolve(&grid, 0.0);
        for iz in 0..16 {
            for ix in 0..16 {
                let i = iz * 16 + ix;
                let m = grid.mirror_index(ix, iz);
                assert_eq!(h[i], grid.h0()[i] + grid.h0()[m].conj());
            }
        }
        for t in [0.0, 0.37, 5.0, 123.4] {
            let h = evolve(&grid, t);
            for iz in 0..16 {
                for ix in 0..16 {
                    let m = grid.mirror_index(ix, iz);
                    assert_eq!(h[m], h[iz * 16 + ix].conj());
                }
            }
        }
    }

    #[test]
    fn dispersion_at_unit_wavenumber() {
        let grid = init_spectrum::<f64>(5.0, 0.0, &cfg(8)).unwrap();
        assert!((grid.omega(1.0) - 3.1321).abs() < 1e-4);
        assert_eq!(grid.omega(1.0), 9.81f64.sqrt());
    }

    #[test]
    fn loop_quantization_is_multiple_of_base_frequency() {
        let grid = init_spectrum::<f64>(
            5.0,
            0.0,
            &OceanConfig {
                loop_period: Some(10.0),
                ..cfg(8)
            },
        )
        .unwrap();
        let w0 = std::f64::consts::TAU / 10.0;
        let w = grid.omega(0.7);
        assert!(((w / w0) - (w / w0).round()).abs() < 1e-9);
        assert!(w <= (9.81f64 * 0.7).sqrt());
    }

    #[test]
    fn zero_choppiness_means_no_horizontal_displacement() {
        let grid = init_spectrum::<f64>(10.0, 45.0, &cfg(32)).unwrap();
        let f = synthesize(&grid, 2.0, 0.0).unwrap();
        assert!(f.displace_x.iter().chain(&f.displace_z).all(|&v| v == 0.0));
        let mean: f64 = f.height.iter().sum::<f64>() / f.height.len() as f64;
        assert!(mean.abs() < 1e-12);
        for nrm in &f.normal {
            assert!((nrm.length() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_mode_is_pure_cosine() {
        // Plant one Hermitian pair by hand and run the same transform path.
        let n = 16;
        let mut grid = init_spectrum::<f64>(5.0, 0.0, &cfg(n)).unwrap();
        grid.h0.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        let (ix, iz) = (3usize, 0usize);
        grid.h0[iz * n + ix] = Complex::new(0.25, 0.0);
        let f = synthesize(&grid, 0.0, 0.0).unwrap();
        // h̃(k) = h0(k) = 0.25 and h̃(-k) = conj(h0(k)) = 0.25, so height = 0.5 cos(kx).
        let k = std::f64::consts::TAU * 3.0 / 100.0;
        for z in 0..n {
            for x in 0..n {
                let xm = x as f64 * 100.0 / n as f64;
                let expected = 0.5 * (k * xm).cos();
                assert!((f.height[z * n + x] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn f32_path_is_real_too() {
        let grid = init_spectrum::<f32>(9.0, 60.0, &cfg(32)).unwrap();
        let f = synthesize(&grid, 1.5, 1.0).unwrap();
        let max_re = f.height.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(f.imag_residual <= 1e-5 * max_re);
    }
}
