//! End-to-end orchestration: segment, texture, estimate, render.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::cuckoo::{run_pipelined, run_serial, Bounds, CuckooConfig, CuckooResult, IterationLog, StagedObjective};
use crate::metrics::{EnergyConfig, EnergyEvaluator, MetricKind};
use crate::ocean::{DisplacementField, Ocean, OceanConfig};
use crate::raster::{load_image, load_mask, save_image, save_mask, ImageBuffer, WaterMask};
use crate::real::Real;
use crate::reflect::{build_reflection_texture, FlipBlurPredictor, MirrorBlurPredictor, ReflectionTexture, TextureConfig};
use crate::render::{RenderConfig, Renderer, Sphere, WaterParams};
use crate::scene::{export_scene, SceneAssets, SceneDescriptor, OceanSettings, RenderSettings};
use crate::seg::{segment, LogisticPredictor, SegConfig};

pub const MASK_FILE: &str = "mask.png";
pub const TEXTURE_FILE: &str = "texture.png";
pub const SCENE_FILE: &str = "scene.toml";
pub const ENERGY_FILE: &str = "energy.csv";
pub const PREVIEW_DIR: &str = "preview";
pub const LOCK_FILE: &str = ".stillwater.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Segment,
    Texture,
    Estimate,
    Render,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Texture => "texture",
            Stage::Estimate => "estimate",
            Stage::Render => "render",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad input, bad configuration, or a busy output directory.
    #[error("{0}")]
    Validation(String),
    #[error("stage {} failed: {message}", stage.name())]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    pub fn validation(e: impl std::fmt::Display) -> Self {
        Self::Validation(e.to_string())
    }

    /// Process exit code: 2 for validation errors, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Stage { .. } => 3,
        }
    }
}

fn stage_err<E: std::fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    /// Upside-down copy of the photo, blurred by turbulence.
    #[default]
    Flip,
    /// Blurred photo without the flip, for photos that already show the
    /// mirrored scene inside the water region.
    Mirror,
}

impl std::str::FromStr for PredictorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flip" => Ok(Self::Flip),
            "mirror" => Ok(Self::Mirror),
            _ => Err(format!("unknown texture predictor {s:?} (expected flip or mirror)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub threshold: f64,
    pub guide_radius: usize,
    pub guide_eps: f64,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let c = SegConfig::default();
        Self {
            threshold: c.err_threshold,
            guide_radius: c.guide_radius,
            guide_eps: c.guide_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSection {
    pub predictor: PredictorKind,
    pub patch: usize,
    pub overlap: f64,
    pub inpaint_radius: usize,
}

impl Default for TextureSection {
    fn default() -> Self {
        let c = TextureConfig::default();
        Self {
            predictor: PredictorKind::Flip,
            patch: c.patch,
            overlap: c.overlap,
            inpaint_radius: c.inpaint_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub lambda: f64,
    pub metric: String,
    pub mask_histogram: bool,
}

impl Default for EnergySection {
    fn default() -> Self {
        let c = EnergyConfig::default();
        Self {
            lambda: c.lambda,
            metric: c.metric.name().into(),
            mask_histogram: c.mask_histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuckooSection {
    pub nests: usize,
    pub abandon: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mutation_prob: f64,
    pub mutation_sigma: f64,
    pub smoothing: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub stall_timeout_s: f64,
}

impl Default for CuckooSection {
    fn default() -> Self {
        let c = CuckooConfig::default();
        Self {
            nests: c.nests,
            abandon: c.abandon,
            alpha: c.alpha,
            beta: c.beta,
            mutation_prob: c.mutation_prob,
            mutation_sigma: c.mutation_sigma,
            smoothing: c.smoothing,
            epsilon: c.epsilon,
            max_iters: c.max_iters,
            stall_timeout_s: c.stall_timeout.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OceanSection {
    /// Grid used for preview and final renders.
    pub grid_size: usize,
    /// Grid used inside the optimizer.
    pub estimate_grid_size: usize,
    pub domain_len: f64,
    pub seed: u64,
}

impl Default for OceanSection {
    fn default() -> Self {
        Self {
            grid_size: OceanConfig::default().grid_size,
            estimate_grid_size: OceanConfig::optimization().grid_size,
            domain_len: OceanConfig::default().domain_len,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames: usize,
    pub grid_step: usize,
    pub use_atlas: bool,
}

impl Default for RenderSection {
    fn default() -> Self {
        let r = RenderSettings::default();
        Self {
            width: r.width,
            height: r.height,
            fps: r.fps,
            frames: 90,
            grid_step: RenderConfig::<f64>::default().grid_step,
            use_atlas: true,
        }
    }
}

/// Everything tunable from a `--config` file. Every section and key is
/// optional; absent keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub segment: SegmentSection,
    pub texture: TextureSection,
    pub energy: EnergySection,
    pub cuckoo: CuckooSection,
    pub ocean: OceanSection,
    pub render: RenderSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.energy_config()?;
        self.cuckoo_config(0).validate().map_err(PipelineError::validation)?;
        self.ocean_config(false).validate().map_err(PipelineError::validation)?;
        self.ocean_config(true).validate().map_err(PipelineError::validation)?;
        if self.render.width == 0 || self.render.height == 0 || !(self.render.fps > 0.0) || self.render.grid_step == 0 {
            return Err(PipelineError::Validation(
                "render width, height, fps and grid_step must be positive".into(),
            ));
        }
        if self.texture.patch == 0 || !(0.0..1.0).contains(&self.texture.overlap) {
            return Err(PipelineError::Validation(
                "texture patch must be positive and overlap in [0, 1)".into(),
            ));
        }
        if !(self.segment.threshold >= 0.0) || !(self.segment.guide_eps > 0.0) {
            return Err(PipelineError::Validation(
                "segment threshold must be non-negative and guide_eps positive".into(),
            ));
        }
        Ok(())
    }

    pub fn seg_config(&self) -> SegConfig {
        SegConfig {
            err_threshold: self.segment.threshold,
            guide_radius: self.segment.guide_radius,
            guide_eps: self.segment.guide_eps,
        }
    }

    pub fn texture_config(&self) -> TextureConfig {
        TextureConfig {
            patch: self.texture.patch,
            overlap: self.texture.overlap,
            inpaint_radius: self.texture.inpaint_radius,
        }
    }

    pub fn energy_config(&self) -> Result<EnergyConfig, PipelineError> {
        let cfg = EnergyConfig {
            lambda: self.energy.lambda,
            metric: MetricKind::from_name(&self.energy.metric).map_err(PipelineError::validation)?,
            mask_histogram: self.energy.mask_histogram,
            ..EnergyConfig::default()
        };
        cfg.validate().map_err(PipelineError::validation)?;
        Ok(cfg)
    }

    pub fn cuckoo_config(&self, seed: u64) -> CuckooConfig {
        let c = &self.cuckoo;
        CuckooConfig {
            nests: c.nests,
            abandon: c.abandon,
            alpha: c.alpha,
            beta: c.beta,
            mutation_prob: c.mutation_prob,
            mutation_sigma: c.mutation_sigma,
            smoothing: c.smoothing,
            epsilon: c.epsilon,
            max_iters: c.max_iters,
            seed,
            stall_timeout: Duration::from_secs_f64(c.stall_timeout_s.max(0.001)),
        }
    }

    pub fn ocean_config(&self, estimate: bool) -> OceanConfig {
        OceanConfig {
            grid_size: if estimate { self.ocean.estimate_grid_size } else { self.ocean.grid_size },
            domain_len: self.ocean.domain_len,
            seed: self.ocean.seed,
            ..OceanConfig::default()
        }
    }

    pub fn render_config(&self) -> RenderConfig<f64> {
        RenderConfig {
            grid_step: self.render.grid_step,
            use_atlas: self.render.use_atlas,
            ..RenderConfig::default()
        }
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Validation(format!("cannot create output directory {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                PipelineError::Validation(format!(
                    "output directory {} is in use by another process (lock file {})",
                    dir.display(),
                    path.display()
                ))
            } else {
                PipelineError::Validation(format!("cannot create lock file {}: {e}", path.display()))
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl<T: Real> StagedObjective<T> for EnergyEvaluator<T> {
    type Frame = ImageBuffer<T>;

    fn render(&self, x: &[T]) -> Result<ImageBuffer<T>, String> {
        let p = WaterParams::from_vec_clamped(x).map_err(|e| e.to_string())?;
        EnergyEvaluator::render(self, &p).map_err(|e| e.to_string())
    }

    fn score(&self, frame: &ImageBuffer<T>) -> Result<T, String> {
        EnergyEvaluator::score(self, frame)
            .map(|p| p.total)
            .map_err(|e| e.to_string())
    }
}

pub fn run_segment(photo: &ImageBuffer<f64>, cfg: &PipelineConfig) -> Result<WaterMask<f64>, PipelineError> {
    segment(photo, &LogisticPredictor::default(), &cfg.seg_config()).map_err(stage_err(Stage::Segment))
}

pub fn run_texture(
    photo: &ImageBuffer<f64>,
    mask: &WaterMask<f64>,
    cfg: &PipelineConfig,
) -> Result<ReflectionTexture<f64>, PipelineError> {
    let tc = cfg.texture_config();
    let r = match cfg.texture.predictor {
        PredictorKind::Flip => build_reflection_texture(photo, mask, &FlipBlurPredictor, &tc),
        PredictorKind::Mirror => build_reflection_texture(photo, mask, &MirrorBlurPredictor, &tc),
    };
    r.map_err(stage_err(Stage::Texture))
}

/// Builds the evaluator the optimizer scores candidates with.
pub fn energy_evaluator<T: Real>(
    photo: &ImageBuffer<T>,
    mask: &WaterMask<T>,
    texture: &ReflectionTexture<T>,
    cfg: &PipelineConfig,
) -> Result<EnergyEvaluator<T>, PipelineError> {
    let rc = cfg.render_config();
    let render = RenderConfig {
        grid_step: rc.grid_step,
        use_atlas: rc.use_atlas,
        // Candidates fan out across threads instead.
        parallel: false,
        ..RenderConfig::default()
    };
    EnergyEvaluator::new(photo, mask, texture, cfg.energy_config()?, cfg.ocean_config(true), render)
        .map_err(stage_err(Stage::Estimate))
}

/// Streams iteration rows into a CSV file as they arrive.
pub struct EnergyLog {
    file: File,
    error: Option<std::io::Error>,
}

impl EnergyLog {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "iteration,best_energy,evals_total,wall_ms")?;
        Ok(Self { file, error: None })
    }

    pub fn record(&mut self, l: &IterationLog) {
        if self.error.is_some() {
            return;
        }
        let r = writeln!(self.file, "{},{},{},{}", l.iteration, l.best_energy, l.evals_total, l.wall_ms)
            .and_then(|_| self.file.flush());
        if let Err(e) = r {
            self.error = Some(e);
        }
    }

    pub fn finish(self) -> std::io::Result<()> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimateOptions {
    pub seed: u64,
    pub serial: bool,
}

/// Runs the optimizer, streaming the energy log to `log_path` if given.
pub fn run_estimate(
    photo: &ImageBuffer<f64>,
    mask: &WaterMask<f64>,
    texture: &ReflectionTexture<f64>,
    cfg: &PipelineConfig,
    opts: EstimateOptions,
    log_path: Option<&Path>,
) -> Result<CuckooResult<f64>, PipelineError> {
    let eval = energy_evaluator(photo, mask, texture, cfg)?;
    let ccfg = cfg.cuckoo_config(opts.seed);
    ccfg.validate().map_err(PipelineError::validation)?;
    let mut log = log_path
        .map(EnergyLog::create)
        .transpose()
        .map_err(stage_err(Stage::Estimate))?;
    let bounds = Bounds::water_params();
    let on_iter = |l: &IterationLog| {
        if let Some(log) = log.as_mut() {
            log.record(l);
        }
    };
    let result = if opts.serial {
        run_serial(&bounds, &ccfg, &eval, on_iter)
    } else {
        run_pipelined(&bounds, &ccfg, &eval, on_iter)
    }
    .map_err(stage_err(Stage::Estimate))?;
    if let Some(log) = log {
        log.finish().map_err(stage_err(Stage::Estimate))?;
    }
    Ok(result)
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:05}.png")
}

/// Scene contents loaded from disk, ready to render.
pub struct LoadedScene {
    pub scene: SceneDescriptor,
    pub photo: ImageBuffer<f64>,
    pub mask: WaterMask<f64>,
    pub texture: ReflectionTexture<f64>,
}

impl LoadedScene {
    pub fn load(scene: SceneDescriptor, scene_dir: &Path) -> Result<Self, PipelineError> {
        let at = |a: &str| SceneDescriptor::resolve(scene_dir, a);
        let photo = load_image(at(&scene.assets.photo)).map_err(PipelineError::validation)?;
        let mask = load_mask(at(&scene.assets.mask)).map_err(PipelineError::validation)?;
        let texture = load_image(at(&scene.assets.texture)).map_err(PipelineError::validation)?;
        if mask.dims() != photo.dims() || texture.dims() != photo.dims() {
            return Err(PipelineError::Validation(format!(
                "scene assets disagree in size: photo {:?}, mask {:?}, texture {:?}",
                photo.dims(),
                mask.dims(),
                texture.dims()
            )));
        }
        Ok(Self {
            scene,
            photo,
            mask,
            texture: ReflectionTexture::from_image(texture),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOptions {
    pub frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub render: RenderConfig<f64>,
    pub spheres: Vec<Sphere<f64>>,
    /// Also write each frame's height raster as `height_%05d.csv`.
    pub heights: bool,
}

/// Writes `frame_%05d.png` for `t = i / fps`, `i < frames`.
pub fn render_sequence(
    loaded: &LoadedScene,
    opts: &SequenceOptions,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(stage_err(Stage::Render))?;
    let p = &loaded.scene.params;
    let renderer = Renderer::new(
        &loaded.photo,
        &loaded.mask,
        &loaded.texture,
        opts.width,
        opts.height,
        opts.render.clone(),
    )
    .map_err(stage_err(Stage::Render))?;
    let ocean = Ocean::new(p.wind_speed, p.wind_dir, &loaded.scene.ocean.to_config()).map_err(stage_err(Stage::Render))?;
    let mut out = Vec::with_capacity(opts.frames);
    for i in 0..opts.frames {
        let t = i as f64 / opts.fps;
        let field = ocean.field(t, p.choppiness).map_err(stage_err(Stage::Render))?;
        let frame = renderer.render(p, &field, &opts.spheres).map_err(stage_err(Stage::Render))?;
        let path = out_dir.join(frame_name(i));
        save_image(&frame, &path).map_err(stage_err(Stage::Render))?;
        if opts.heights {
            write_height_csv(&field, out_dir.join(format!("height_{i:05}.csv"))).map_err(stage_err(Stage::Render))?;
        }
        out.push(path);
    }
    Ok(out)
}

/// Height raster as CSV: row `z`, column `x`, in meters.
pub fn write_height_csv<T: Real>(field: &DisplacementField<T>, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    let n = field.n;
    for z in 0..n {
        let row: Vec<String> = (0..n).map(|x| format!("{:?}", field.height[z * n + x].as_f64())).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub serial: bool,
    /// Existing mask; skips segmentation.
    pub mask: Option<PathBuf>,
    /// Existing reflection texture; skips texture prediction.
    pub texture: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scene: SceneDescriptor,
    pub best_energy: f64,
    pub iterations: usize,
    pub evals: usize,
    pub frames: Vec<PathBuf>,
}

/// Segment, texture, estimate and preview into `opts.out_dir`, which ends up
/// holding `mask.png`, `texture.png`, `scene.toml`, `energy.csv` and
/// `preview/frame_%05d.png`. Artifacts of finished stages are kept when a
/// later stage fails.
pub fn run_full(photo_path: &Path, cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(&opts.out_dir)?;
    let dir = &opts.out_dir;
    let photo: ImageBuffer<f64> = load_image(photo_path).map_err(PipelineError::validation)?;

    let mask = match &opts.mask {
        Some(p) => {
            let m: WaterMask<f64> = load_mask(p).map_err(PipelineError::validation)?;
            if m.dims() != photo.dims() {
                return Err(PipelineError::Validation(format!(
                    "mask {} is {:?}, photo is {:?}",
                    p.display(),
                    m.dims(),
                    photo.dims()
                )));
            }
            m
        }
        None => run_segment(&photo, cfg)?,
    };
    save_mask(&mask, dir.join(MASK_FILE)).map_err(stage_err(Stage::Segment))?;

    let texture = match &opts.texture {
        Some(p) => {
            let t: ImageBuffer<f64> = load_image(p).map_err(PipelineError::validation)?;
            if t.dims() != photo.dims() {
                return Err(PipelineError::Validation(format!(
                    "texture {} is {:?}, photo is {:?}",
                    p.display(),
                    t.dims(),
                    photo.dims()
                )));
            }
            ReflectionTexture::from_image(t)
        }
        None => run_texture(&photo, &mask, cfg)?,
    };
    save_image(&texture.image, dir.join(TEXTURE_FILE)).map_err(stage_err(Stage::Texture))?;

    let est = run_estimate(
        &photo,
        &mask,
        &texture,
        cfg,
        EstimateOptions {
            seed: opts.seed,
            serial: opts.serial,
        },
        Some(&dir.join(ENERGY_FILE)),
    )?;
    let params = WaterParams::from_vec_clamped(&est.best).map_err(stage_err(Stage::Estimate))?;
    let photo_abs = std::fs::canonicalize(photo_path).unwrap_or_else(|_| photo_path.to_path_buf());
    let scene = SceneDescriptor {
        params,
        assets: SceneAssets {
            photo: photo_abs.to_string_lossy().into_owned(),
            mask: MASK_FILE.into(),
            texture: TEXTURE_FILE.into(),
        },
        ocean: OceanSettings {
            grid_size: cfg.ocean.grid_size,
            domain_len: cfg.ocean.domain_len,
            seed: cfg.ocean.seed,
        },
        render: RenderSettings {
            width: cfg.render.width,
            height: cfg.render.height,
            fps: cfg.render.fps,
        },
    };
    export_scene(&scene, dir.join(SCENE_FILE)).map_err(stage_err(Stage::Estimate))?;

    let loaded = LoadedScene {
        scene: scene.clone(),
        photo,
        mask,
        texture,
    };
    let frames = render_sequence(
        &loaded,
        &SequenceOptions {
            frames: cfg.render.frames,
            fps: cfg.render.fps,
            width: cfg.render.width,
            height: cfg.render.height,
            render: cfg.render_config(),
            spheres: Vec::new(),
            heights: false,
        },
        &dir.join(PREVIEW_DIR),
    )?;
    Ok(RunReport {
        scene,
        best_energy: est.best_energy,
        iterations: est.iterations,
        evals: est.evals,
        frames,
    })
}
