//! The 21-dimensional parameter vector searched by the estimator.

use thiserror::Error;

use crate::real::Real;

pub const DIM: usize = 21;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{key} = {value} is outside [{lo}, {hi}]")]
    OutOfRange { key: String, value: f64, lo: f64, hi: f64 },
    #[error("{key} is not a finite number")]
    NotFinite { key: String },
    #[error("expected {DIM} parameters, got {0}")]
    BadLength(usize),
}

/// Name and range of one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

impl ParamSpec {
    pub fn range(&self) -> f64 {
        self.hi - self.lo
    }
}

const fn bounds(name: &'static str, lo: f64, hi: f64) -> ParamSpec {
    ParamSpec { name, lo, hi }
}

/// Dimensions in vector order.
pub const PARAM_SPECS: [ParamSpec; DIM] = [
    bounds("wind_speed", 1.5, 30.0),
    bounds("wind_dir", 0.0, 180.0),
    bounds("choppiness", 0.0, 3.0),
    bounds("cam_height", 1.0, 75.0),
    bounds("cam_angle", 45.0, 105.0),
    bounds("cam_fov", 45.0, 90.0),
    bounds("water_color[0]", 0.0, 1.0),
    bounds("water_color[1]", 0.0, 1.0),
    bounds("water_color[2]", 0.0, 1.0),
    bounds("sh_l0[0]", 0.0, 2.0),
    bounds("sh_l0[1]", 0.0, 2.0),
    bounds("sh_l0[2]", 0.0, 2.0),
    bounds("sh_l1[0]", -1.0, 1.0),
    bounds("sh_l1[1]", -1.0, 1.0),
    bounds("sh_l1[2]", -1.0, 1.0),
    bounds("sh_l1[3]", -1.0, 1.0),
    bounds("sh_l1[4]", -1.0, 1.0),
    bounds("sh_l1[5]", -1.0, 1.0),
    bounds("sh_l1[6]", -1.0, 1.0),
    bounds("sh_l1[7]", -1.0, 1.0),
    bounds("sh_l1[8]", -1.0, 1.0),
];

/// Wind, wave, camera, colour and lighting parameters.
///
/// `sh_l1` holds the three band-1 coefficients per colour channel at index
/// `m * 3 + c`, with `m` running over the basis functions proportional to
/// `y`, `z`, `x` in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterParams<T> {
    pub wind_speed: T,
    pub wind_dir: T,
    pub choppiness: T,
    pub cam_height: T,
    pub cam_angle: T,
    pub cam_fov: T,
    pub water_color: [T; 3],
    pub sh_l0: [T; 3],
    pub sh_l1: [T; 9],
}

impl<T: Real> Default for WaterParams<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            wind_speed: l(6.0),
            wind_dir: l(45.0),
            choppiness: l(1.0),
            cam_height: l(10.0),
            cam_angle: l(75.0),
            cam_fov: l(60.0),
            water_color: [l(0.05), l(0.2), l(0.3)],
            sh_l0: [l(1.0); 3],
            sh_l1: [T::zero(); 9],
        }
    }
}

impl<T: Real> WaterParams<T> {
    pub fn to_vec(&self) -> [T; DIM] {
        let mut v = [T::zero(); DIM];
        v[0] = self.wind_speed;
        v[1] = self.wind_dir;
        v[2] = self.choppiness;
        v[3] = self.cam_height;
        v[4] = self.cam_angle;
        v[5] = self.cam_fov;
        v[6..9].copy_from_slice(&self.water_color);
        v[9..12].copy_from_slice(&self.sh_l0);
        v[12..21].copy_from_slice(&self.sh_l1);
        v
    }

    /// Builds from a vector, clamping every component into range.
    pub fn from_vec_clamped(v: &[T]) -> Result<Self, ParamError> {
        if v.len() != DIM {
            return Err(ParamError::BadLength(v.len()));
        }
        let mut c = [T::zero(); DIM];
        for (i, s) in PARAM_SPECS.iter().enumerate() {
            if !v[i].is_finite() {
                return Err(ParamError::NotFinite { key: s.name.into() });
            }
            c[i] = v[i].clamp_to(T::lit(s.lo), T::lit(s.hi));
        }
        Ok(Self::from_array(c))
    }

    /// Builds from a vector, rejecting out-of-range components.
    pub fn from_vec_checked(v: &[T]) -> Result<Self, ParamError> {
        if v.len() != DIM {
            return Err(ParamError::BadLength(v.len()));
        }
        let p = Self::from_array(v.try_into().expect("length checked"));
        p.validate()?;
        Ok(p)
    }

    fn from_array(v: [T; DIM]) -> Self {
        let mut water_color = [T::zero(); 3];
        let mut sh_l0 = [T::zero(); 3];
        let mut sh_l1 = [T::zero(); 9];
        water_color.copy_from_slice(&v[6..9]);
        sh_l0.copy_from_slice(&v[9..12]);
        sh_l1.copy_from_slice(&v[12..21]);
        Self {
            wind_speed: v[0],
            wind_dir: v[1],
            choppiness: v[2],
            cam_height: v[3],
            cam_angle: v[4],
            cam_fov: v[5],
            water_color,
            sh_l0,
            sh_l1,
        }
    }

    /// Copy with every component clamped into range.
    pub fn clamped(&self) -> Self {
        let v = self.to_vec();
        let mut c = [T::zero(); DIM];
        for (i, s) in PARAM_SPECS.iter().enumerate() {
            c[i] = v[i].clamp_to(T::lit(s.lo), T::lit(s.hi));
        }
        Self::from_array(c)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (s, &x) in PARAM_SPECS.iter().zip(self.to_vec().iter()) {
            let value = x.as_f64();
            if !value.is_finite() {
                return Err(ParamError::NotFinite { key: s.name.into() });
            }
            if value < s.lo || value > s.hi {
                return Err(ParamError::OutOfRange {
                    key: s.name.into(),
                    value,
                    lo: s.lo,
                    hi: s.hi,
                });
            }
        }
        Ok(())
    }

    pub fn convert<U: Real>(&self) -> WaterParams<U> {
        let v: Vec<U> = self.to_vec().iter().map(|x| U::lit(x.as_f64())).collect();
        WaterParams::from_array(v.try_into().expect("length DIM"))
    }
}
