//! Versioned scene files and the time-lapse blend.
//!
//! A scene file is TOML with a fixed key set:
//!
//! ```toml
//! version = 1
//!
//! [water]
//! wind_speed = 6.0      # m/s
//! wind_dir = 45.0       # degrees
//! choppiness = 1.0
//! color = [0.05, 0.2, 0.3]
//!
//! [camera]
//! height = 10.0         # m
//! angle = 75.0          # degrees from nadir
//! fov = 60.0            # degrees, vertical
//!
//! [lighting]
//! sh_l0 = [1.0, 1.0, 1.0]
//! sh_l1 = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
//!
//! [assets]
//! photo = "photo.png"
//! mask = "mask.png"
//! texture = "texture.png"
//!
//! [ocean]
//! grid_size = 256
//! domain_len = 100.0    # m
//! seed = 0
//!
//! [render]
//! width = 512
//! height = 512
//! fps = 30.0
//! ```
//!
//! Asset paths are resolved relative to the directory holding the scene file.

use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use crate::ocean::OceanConfig;
use crate::raster::{ImageBuffer, ImageError};
use crate::real::lerp;
use crate::render::{WaterParams, PARAM_SPECS};

pub const SCENE_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read or write scene file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scene file is not valid TOML: {0}")]
    Parse(String),
    #[error("unsupported scene version {0} (expected {SCENE_VERSION})")]
    UnknownVersion(i64),
    #[error("missing key {0}")]
    MissingKey(String),
    #[error("key {key} must be {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("{key} = {value} is outside [{lo}, {hi}]")]
    OutOfRange { key: String, value: f64, lo: f64, hi: f64 },
    #[error("key {key} must hold {expected} values, got {got}")]
    BadLength { key: String, expected: usize, got: usize },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("scenes disagree on {what}: {a:?} vs {b:?}")]
    Mismatch {
        what: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("blending needs at least two scenes, got {0}")]
    TooFewScenes(usize),
    #[error("blend position {0} is outside [0, 1]")]
    BadBlendPosition(f64),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneAssets {
    pub photo: String,
    pub mask: String,
    pub texture: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OceanSettings {
    pub grid_size: usize,
    pub domain_len: f64,
    pub seed: u64,
}

impl Default for OceanSettings {
    fn default() -> Self {
        let c = OceanConfig::default();
        Self {
            grid_size: c.grid_size,
            domain_len: c.domain_len,
            seed: c.seed,
        }
    }
}

impl OceanSettings {
    pub fn to_config(&self) -> OceanConfig {
        OceanConfig {
            grid_size: self.grid_size,
            domain_len: self.domain_len,
            seed: self.seed,
            ..OceanConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            fps: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescriptor {
    pub params: WaterParams<f64>,
    pub assets: SceneAssets,
    pub ocean: OceanSettings,
    pub render: RenderSettings,
}

impl SceneDescriptor {
    pub fn new(params: WaterParams<f64>, assets: SceneAssets) -> Self {
        Self {
            params,
            assets,
            ocean: OceanSettings::default(),
            render: RenderSettings::default(),
        }
    }

    /// Absolute or scene-relative asset path resolved against `scene_dir`.
    pub fn resolve(scene_dir: &Path, asset: &str) -> PathBuf {
        let p = Path::new(asset);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            scene_dir.join(p)
        }
    }
}

/// Scene key, parameter-vector index.
const SCALAR_KEYS: [(&str, &str, usize); 6] = [
    ("water", "wind_speed", 0),
    ("water", "wind_dir", 1),
    ("water", "choppiness", 2),
    ("camera", "height", 3),
    ("camera", "angle", 4),
    ("camera", "fov", 5),
];
const ARRAY_KEYS: [(&str, &str, usize, usize); 3] = [
    ("water", "color", 6, 3),
    ("lighting", "sh_l0", 9, 3),
    ("lighting", "sh_l1", 12, 9),
];

fn float(v: f64) -> String {
    // Debug formatting is the shortest round-tripping form and always keeps
    // a fraction or exponent, so TOML reads it back as a float.
    format!("{v:?}")
}

fn float_array(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| float(x)).collect();
    format!("[{}]", items.join(", "))
}

fn string(s: &str) -> String {
    Value::String(s.to_owned()).to_string()
}

/// Serializes to the scene file text.
pub fn scene_to_string(scene: &SceneDescriptor) -> String {
    let v = scene.params.to_vec();
    let mut out = format!("version = {SCENE_VERSION}\n");
    let mut section = "";
    let mut open = |out: &mut String, name: &'static str| {
        if section != name {
            out.push_str(&format!("\n[{name}]\n"));
            section = name;
        }
    };
    for (sec, key, i) in SCALAR_KEYS.iter().take(3) {
        open(&mut out, sec);
        out.push_str(&format!("{key} = {}\n", float(v[*i])));
    }
    out.push_str(&format!("color = {}\n", float_array(&v[6..9])));
    for (sec, key, i) in SCALAR_KEYS.iter().skip(3) {
        open(&mut out, sec);
        out.push_str(&format!("{key} = {}\n", float(v[*i])));
    }
    open(&mut out, "lighting");
    out.push_str(&format!("sh_l0 = {}\n", float_array(&v[9..12])));
    out.push_str(&format!("sh_l1 = {}\n", float_array(&v[12..21])));
    open(&mut out, "assets");
    out.push_str(&format!("photo = {}\n", string(&scene.assets.photo)));
    out.push_str(&format!("mask = {}\n", string(&scene.assets.mask)));
    out.push_str(&format!("texture = {}\n", string(&scene.assets.texture)));
    open(&mut out, "ocean");
    out.push_str(&format!("grid_size = {}\n", scene.ocean.grid_size));
    out.push_str(&format!("domain_len = {}\n", float(scene.ocean.domain_len)));
    out.push_str(&format!("seed = {}\n", scene.ocean.seed));
    open(&mut out, "render");
    out.push_str(&format!("width = {}\n", scene.render.width));
    out.push_str(&format!("height = {}\n", scene.render.height));
    out.push_str(&format!("fps = {}\n", float(scene.render.fps)));
    out
}

fn section<'a>(root: &'a Table, name: &str) -> Result<&'a Table, SceneError> {
    match root.get(name) {
        None => Err(SceneError::MissingKey(name.into())),
        Some(Value::Table(t)) => Ok(t),
        Some(_) => Err(SceneError::WrongType {
            key: name.into(),
            expected: "a table",
        }),
    }
}

fn get<'a>(t: &'a Table, sec: &str, key: &str) -> Result<&'a Value, SceneError> {
    t.get(key).ok_or_else(|| SceneError::MissingKey(format!("{sec}.{key}")))
}

fn as_f64(v: &Value, key: &str) -> Result<f64, SceneError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(SceneError::WrongType {
            key: key.into(),
            expected: "a number",
        }),
    }
}

fn as_int(v: &Value, key: &str) -> Result<i64, SceneError> {
    match v {
        Value::Integer(i) => Ok(*i),
        _ => Err(SceneError::WrongType {
            key: key.into(),
            expected: "an integer",
        }),
    }
}

fn as_str(v: &Value, key: &str) -> Result<String, SceneError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        _ => Err(SceneError::WrongType {
            key: key.into(),
            expected: "a string",
        }),
    }
}

fn check(key: &str, value: f64, lo: f64, hi: f64) -> Result<f64, SceneError> {
    if !(value >= lo && value <= hi) {
        return Err(SceneError::OutOfRange {
            key: key.into(),
            value,
            lo,
            hi,
        });
    }
    Ok(value)
}

fn reject_unknown(t: &Table, prefix: &str, known: &[&str]) -> Result<(), SceneError> {
    for k in t.keys() {
        if !known.contains(&k.as_str()) {
            let full = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            return Err(SceneError::UnknownKey(full));
        }
    }
    Ok(())
}

/// Parses and validates scene file text.
pub fn scene_from_str(text: &str) -> Result<SceneDescriptor, SceneError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| SceneError::Parse(e.to_string()))?;
    let version = as_int(root.get("version").ok_or_else(|| SceneError::MissingKey("version".into()))?, "version")?;
    if version != SCENE_VERSION {
        return Err(SceneError::UnknownVersion(version));
    }
    reject_unknown(
        &root,
        "",
        &["version", "water", "camera", "lighting", "assets", "ocean", "render"],
    )?;

    let mut v = [0.0f64; 21];
    for (sec, key, i) in SCALAR_KEYS {
        let t = section(&root, sec)?;
        let full = format!("{sec}.{key}");
        let s = PARAM_SPECS[i];
        v[i] = check(&full, as_f64(get(t, sec, key)?, &full)?, s.lo, s.hi)?;
    }
    for (sec, key, start, len) in ARRAY_KEYS {
        let t = section(&root, sec)?;
        let full = format!("{sec}.{key}");
        let arr = match get(t, sec, key)? {
            Value::Array(a) => a,
            _ => {
                return Err(SceneError::WrongType {
                    key: full,
                    expected: "an array",
                })
            }
        };
        if arr.len() != len {
            return Err(SceneError::BadLength {
                key: full,
                expected: len,
                got: arr.len(),
            });
        }
        for (j, item) in arr.iter().enumerate() {
            let k = format!("{full}[{j}]");
            let s = PARAM_SPECS[start + j];
            v[start + j] = check(&k, as_f64(item, &k)?, s.lo, s.hi)?;
        }
    }
    reject_unknown(section(&root, "water")?, "water", &["wind_speed", "wind_dir", "choppiness", "color"])?;
    reject_unknown(section(&root, "camera")?, "camera", &["height", "angle", "fov"])?;
    reject_unknown(section(&root, "lighting")?, "lighting", &["sh_l0", "sh_l1"])?;
    let params = WaterParams::from_vec_checked(&v).map_err(|e| SceneError::Parse(e.to_string()))?;

    let a = section(&root, "assets")?;
    reject_unknown(a, "assets", &["photo", "mask", "texture"])?;
    let assets = SceneAssets {
        photo: as_str(get(a, "assets", "photo")?, "assets.photo")?,
        mask: as_str(get(a, "assets", "mask")?, "assets.mask")?,
        texture: as_str(get(a, "assets", "texture")?, "assets.texture")?,
    };

    let o = section(&root, "ocean")?;
    reject_unknown(o, "ocean", &["grid_size", "domain_len", "seed"])?;
    let grid = as_int(get(o, "ocean", "grid_size")?, "ocean.grid_size")?;
    if grid < 2 || !(grid as u64).is_power_of_two() {
        return Err(SceneError::WrongType {
            key: "ocean.grid_size".into(),
            expected: "a power of two of at least 2",
        });
    }
    let domain_len = as_f64(get(o, "ocean", "domain_len")?, "ocean.domain_len")?;
    if !(domain_len > 0.0 && domain_len.is_finite()) {
        return Err(SceneError::OutOfRange {
            key: "ocean.domain_len".into(),
            value: domain_len,
            lo: f64::MIN_POSITIVE,
            hi: f64::MAX,
        });
    }
    let seed = as_int(get(o, "ocean", "seed")?, "ocean.seed")?;
    if seed < 0 {
        return Err(SceneError::OutOfRange {
            key: "ocean.seed".into(),
            value: seed as f64,
            lo: 0.0,
            hi: i64::MAX as f64,
        });
    }

    let r = section(&root, "render")?;
    reject_unknown(r, "render", &["width", "height", "fps"])?;
    let dim = |key: &str| -> Result<usize, SceneError> {
        let full = format!("render.{key}");
        let v = as_int(get(r, "render", key)?, &full)?;
        check(&full, v as f64, 1.0, 16384.0)?;
        Ok(v as usize)
    };
    let (width, height) = (dim("width")?, dim("height")?);
    let fps = as_f64(get(r, "render", "fps")?, "render.fps")?;
    check("render.fps", fps, 1e-3, 1000.0)?;

    Ok(SceneDescriptor {
        params,
        assets,
        ocean: OceanSettings {
            grid_size: grid as usize,
            domain_len,
            seed: seed as u64,
        },
        render: RenderSettings { width, height, fps },
    })
}

pub fn export_scene(scene: &SceneDescriptor, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    std::fs::write(path, scene_to_string(scene)).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn import_scene(path: impl AsRef<Path>) -> Result<SceneDescriptor, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    scene_from_str(&text)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Segment index and fraction for position `t` over `m` keyframes.
pub fn blend_position(m: usize, t: f64) -> (usize, f64) {
    let u = t * (m - 1) as f64;
    let i = (u.floor() as usize).min(m - 2);
    (i, u - i as f64)
}

/// Medians of wave and camera values, interpolation of colour and lighting
/// between consecutive scenes at `t`.
pub fn blend_scenes(scenes: &[SceneDescriptor], t: f64) -> Result<SceneDescriptor, SceneError> {
    if scenes.len() < 2 {
        return Err(SceneError::TooFewScenes(scenes.len()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(SceneError::BadBlendPosition(t));
    }
    let first = &scenes[0];
    let dims = |s: &SceneDescriptor| (s.render.width, s.render.height);
    for s in &scenes[1..] {
        if dims(s) != dims(first) {
            return Err(SceneError::Mismatch {
                what: "render resolution",
                a: dims(first),
                b: dims(s),
            });
        }
    }
    let vecs: Vec<[f64; 21]> = scenes.iter().map(|s| s.params.to_vec()).collect();
    let (i, f) = blend_position(scenes.len(), t);
    let mut out = [0.0; 21];
    for d in 0..6 {
        out[d] = median(vecs.iter().map(|v| v[d]).collect());
    }
    for d in 6..21 {
        out[d] = if f == 0.0 { vecs[i][d] } else { lerp(vecs[i][d], vecs[i + 1][d], f) };
    }
    let params = WaterParams::from_vec_clamped(&out).map_err(|e| SceneError::Parse(e.to_string()))?;
    let nearest = if f < 0.5 { i } else { i + 1 };
    Ok(SceneDescriptor {
        params,
        assets: scenes[nearest].assets.clone(),
        ocean: first.ocean,
        render: first.render,
    })
}

/// Reflection textures interpolated the same way as [`blend_scenes`].
pub fn blend_textures(textures: &[ImageBuffer<f64>], t: f64) -> Result<ImageBuffer<f64>, SceneError> {
    if textures.len() < 2 {
        return Err(SceneError::TooFewScenes(textures.len()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(SceneError::BadBlendPosition(t));
    }
    for tex in &textures[1..] {
        if tex.dims() != textures[0].dims() {
            return Err(SceneError::Mismatch {
                what: "texture dimensions",
                a: textures[0].dims(),
                b: tex.dims(),
            });
        }
    }
    let (i, f) = blend_position(textures.len(), t);
    if f == 0.0 {
        return Ok(textures[i].clone());
    }
    let (a, b) = (&textures[i], &textures[i + 1]);
    let (w, h) = a.dims();
    Ok(ImageBuffer::from_fn(w, h, |x, y| {
        let (p, q) = (a.pixel(x, y), b.pixel(x, y));
        [lerp(p[0], q[0], f), lerp(p[1], q[1], f), lerp(p[2], q[2], f)]
    }))
}
