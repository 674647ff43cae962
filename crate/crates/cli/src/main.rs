use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stillwater::geom::Vec3;
use stillwater::pipeline::{
    run_estimate, run_full, run_segment, run_texture, EstimateOptions, LoadedScene, OutputLock, PipelineConfig,
    PipelineError, PredictorKind, RunOptions, SequenceOptions, ENERGY_FILE,
};
use stillwater::raster::{load_image, load_mask, save_image, save_mask, ImageBuffer, WaterMask};
use stillwater::reflect::ReflectionTexture;
use stillwater::render::{Sphere, WaterParams};
use stillwater::scene::{
    blend_scenes, blend_textures, export_scene, import_scene, OceanSettings, RenderSettings, SceneAssets,
    SceneDescriptor,
};

#[derive(Parser, Debug)]
#[command(name = "stillwater", version, about = "Animate the water in a single photograph")]
struct Cli {
    /// Optimizer seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for outputs; relative output paths are resolved against it.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// TOML file overriding pipeline defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict a water mask.
    Segment(SegmentArgs),
    /// Build a reflection texture from a photo and its mask.
    Texture(TextureArgs),
    /// Estimate water parameters and write a scene file.
    Estimate(EstimateArgs),
    /// Render an animation from a scene file.
    Render(RenderArgs),
    /// Segment, texture, estimate and render a preview in one go.
    Run(RunArgs),
    /// Blend several scenes of the same photo for a time-lapse.
    Blend(BlendArgs),
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use this mask instead of predicting one.
    #[arg(long)]
    external_mask: Option<PathBuf>,
    /// Refinement threshold on the per-pixel probability change.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct TextureArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-patch predictor: flip or mirror.
    #[arg(long)]
    predictor: Option<PredictorKind>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    texture: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Single-threaded search instead of the two-stage pipeline.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Weight of the colour term.
    #[arg(long)]
    lambda: Option<f64>,
    /// Energy log path; defaults to energy.csv next to the scene file.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    /// Output resolution as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_res)]
    res: Option<(usize, usize)>,
    /// Sphere as x,y,z,radius,r,g,b (world meters, albedo in [0,1]). Repeatable.
    #[arg(long, value_parser = parse_sphere)]
    sphere: Vec<Sphere<f64>>,
    /// Also write each frame's height raster as height_%05d.csv.
    #[arg(long)]
    heights: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    /// Existing mask; skips segmentation.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Existing reflection texture; skips texture prediction.
    #[arg(long)]
    texture: Option<PathBuf>,
    #[arg(long)]
    predictor: Option<PredictorKind>,
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Preview frame count.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args, Debug)]
struct BlendArgs {
    /// Scene files in time order. At least two.
    #[arg(long = "scene", required = true, num_args = 1..)]
    scenes: Vec<PathBuf>,
    /// Position in [0, 1] along the sequence.
    #[arg(long)]
    t: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_res(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err(format!("resolution must be positive, got {s:?}"));
    }
    Ok((w, h))
}

fn parse_sphere(s: &str) -> Result<Sphere<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("bad sphere {s:?}"))?;
    if v.len() != 7 {
        return Err(format!("sphere needs 7 comma-separated numbers, got {}", v.len()));
    }
    if !(v[3] > 0.0) || v[4..].iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(format!("sphere radius must be positive and albedo in [0, 1]: {s:?}"));
    }
    Ok(Sphere {
        center: Vec3::new(v[0], v[1], v[2]),
        radius: v[3],
        albedo: [v[4], v[5], v[6]],
    })
}

struct Ctx {
    seed: u64,
    out_dir: Option<PathBuf>,
    cfg: PipelineConfig,
}

impl Ctx {
    fn output(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn validation(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(e.to_string())
}

fn load_photo(p: &Path) -> Result<ImageBuffer<f64>, PipelineError> {
    load_image(p).map_err(validation)
}

fn load_aligned_mask(p: &Path, photo: &ImageBuffer<f64>) -> Result<WaterMask<f64>, PipelineError> {
    let m: WaterMask<f64> = load_mask(p).map_err(validation)?;
    if m.dims() != photo.dims() {
        return Err(PipelineError::Validation(format!(
            "mask {} is {:?} but the photo is {:?}",
            p.display(),
            m.dims(),
            photo.dims()
        )));
    }
    Ok(m)
}

/// Path of `asset` as written in a scene file stored in `scene_dir`:
/// relative when it lives below that directory, absolute otherwise.
fn asset_path(asset: &Path, scene_dir: &Path) -> String {
    let abs = std::fs::canonicalize(asset).unwrap_or_else(|_| asset.to_path_buf());
    if let Ok(dir) = std::fs::canonicalize(scene_dir) {
        if let Ok(rel) = abs.strip_prefix(&dir) {
            return rel.to_string_lossy().into_owned();
        }
    }
    abs.to_string_lossy().into_owned()
}

fn segment_cmd(ctx: &Ctx, a: &SegmentArgs) -> Result<(), PipelineError> {
    let out = ctx.output(&a.out);
    let _lock = OutputLock::acquire(parent_dir(&out))?;
    let photo = load_photo(&a.input)?;
    let mask = match &a.external_mask {
        Some(p) => load_aligned_mask(p, &photo)?,
        None => {
            let mut cfg = ctx.cfg.clone();
            if let Some(t) = a.threshold {
                cfg.segment.threshold = t;
            }
            cfg.validate()?;
            run_segment(&photo, &cfg)?
        }
    };
    save_mask(&mask, &out).map_err(|e| PipelineError::Stage {
        stage: stillwater::pipeline::Stage::Segment,
        message: e.to_string(),
    })
}

fn texture_cmd(ctx: &Ctx, a: &TextureArgs) -> Result<(), PipelineError> {
    let out = ctx.output(&a.out);
    let _lock = OutputLock::acquire(parent_dir(&out))?;
    let photo = load_photo(&a.input)?;
    let mask = load_aligned_mask(&a.mask, &photo)?;
    let mut cfg = ctx.cfg.clone();
    if let Some(p) = a.predictor {
        cfg.texture.predictor = p;
    }
    let tex = run_texture(&photo, &mask, &cfg)?;
    save_image(&tex.image, &out).map_err(|e| PipelineError::Stage {
        stage: stillwater::pipeline::Stage::Texture,
        message: e.to_string(),
    })
}

fn estimate_cmd(ctx: &Ctx, a: &EstimateArgs) -> Result<(), PipelineError> {
    let out = ctx.output(&a.out);
    let dir = parent_dir(&out);
    let _lock = OutputLock::acquire(&dir)?;
    let mut cfg = ctx.cfg.clone();
    if let Some(m) = a.max_iters {
        cfg.cuckoo.max_iters = m;
    }
    if let Some(l) = a.lambda {
        cfg.energy.lambda = l;
    }
    cfg.validate()?;
    let photo = load_photo(&a.input)?;
    let mask = load_aligned_mask(&a.mask, &photo)?;
    let tex = load_photo(&a.texture)?;
    if tex.dims() != photo.dims() {
        return Err(PipelineError::Validation(format!(
            "texture {} is {:?} but the photo is {:?}",
            a.texture.display(),
            tex.dims(),
            photo.dims()
        )));
    }
    let log = a.log.as_ref().map(|p| ctx.output(p)).unwrap_or_else(|| dir.join(ENERGY_FILE));
    let res = run_estimate(
        &photo,
        &mask,
        &ReflectionTexture::from_image(tex),
        &cfg,
        EstimateOptions {
            seed: ctx.seed,
            serial: a.serial,
        },
        Some(&log),
    )?;
    let params = WaterParams::from_vec_clamped(&res.best).map_err(validation)?;
    let scene = SceneDescriptor {
        params,
        assets: SceneAssets {
            photo: asset_path(&a.input, &dir),
            mask: asset_path(&a.mask, &dir),
            texture: asset_path(&a.texture, &dir),
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
    export_scene(&scene, &out).map_err(|e| PipelineError::Stage {
        stage: stillwater::pipeline::Stage::Estimate,
        message: e.to_string(),
    })?;
    eprintln!(
        "best energy {:.6} after {} iterations ({} evaluations)",
        res.best_energy, res.iterations, res.evals
    );
    Ok(())
}

fn render_cmd(ctx: &Ctx, a: &RenderArgs) -> Result<(), PipelineError> {
    let scene = import_scene(&a.scene).map_err(validation)?;
    let out = ctx.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let _lock = OutputLock::acquire(&out)?;
    let (width, height) = a.res.unwrap_or((scene.render.width, scene.render.height));
    let fps = a.fps.unwrap_or(scene.render.fps);
    if !(fps > 0.0) {
        return Err(PipelineError::Validation(format!("fps must be positive, got {fps}")));
    }
    let loaded = LoadedScene::load(scene, &parent_dir(&a.scene))?;
    let frames = stillwater::pipeline::render_sequence(
        &loaded,
        &SequenceOptions {
            frames: a.frames.unwrap_or(ctx.cfg.render.frames),
            fps,
            width,
            height,
            render: ctx.cfg.render_config(),
            spheres: a.sphere.clone(),
            heights: a.heights,
        },
        &out,
    )?;
    eprintln!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn run_cmd(ctx: &Ctx, a: &RunArgs) -> Result<(), PipelineError> {
    let mut cfg = ctx.cfg.clone();
    if let Some(p) = a.predictor {
        cfg.texture.predictor = p;
    }
    if let Some(m) = a.max_iters {
        cfg.cuckoo.max_iters = m;
    }
    if let Some(l) = a.lambda {
        cfg.energy.lambda = l;
    }
    if let Some(f) = a.frames {
        cfg.render.frames = f;
    }
    let out_dir = ctx.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let report = run_full(
        &a.input,
        &cfg,
        &RunOptions {
            out_dir: out_dir.clone(),
            seed: ctx.seed,
            serial: a.serial,
            mask: a.mask.clone(),
            texture: a.texture.clone(),
        },
    )?;
    eprintln!(
        "best energy {:.6} after {} iterations; {} preview frames in {}",
        report.best_energy,
        report.iterations,
        report.frames.len(),
        out_dir.display()
    );
    Ok(())
}

fn blend_cmd(ctx: &Ctx, a: &BlendArgs) -> Result<(), PipelineError> {
    let out = ctx.output(&a.out);
    let dir = parent_dir(&out);
    let _lock = OutputLock::acquire(&dir)?;
    let mut scenes = Vec::new();
    let mut textures = Vec::new();
    for p in &a.scenes {
        let mut s = import_scene(p).map_err(validation)?;
        let sdir = parent_dir(p);
        let resolve = |asset: &str| asset_path(&SceneDescriptor::resolve(&sdir, asset), &dir);
        let tex_path = SceneDescriptor::resolve(&sdir, &s.assets.texture);
        textures.push(load_photo(&tex_path)?);
        s.assets = SceneAssets {
            photo: resolve(&s.assets.photo),
            mask: resolve(&s.assets.mask),
            texture: resolve(&s.assets.texture),
        };
        scenes.push(s);
    }
    let mut blended = blend_scenes(&scenes, a.t).map_err(validation)?;
    let tex = blend_textures(&textures, a.t).map_err(validation)?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "blend".into());
    let tex_path = dir.join(format!("{stem}_texture.png"));
    let stage = |e: &dyn std::fmt::Display| PipelineError::Stage {
        stage: stillwater::pipeline::Stage::Render,
        message: e.to_string(),
    };
    save_image(&tex, &tex_path).map_err(|e| stage(&e))?;
    blended.assets.texture = asset_path(&tex_path, &dir);
    export_scene(&blended, &out).map_err(|e| stage(&e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    };
    let result = cfg.and_then(|cfg| {
        let ctx = Ctx {
            seed: cli.seed,
            out_dir: cli.out_dir.clone(),
            cfg,
        };
        match &cli.command {
            Command::Segment(a) => segment_cmd(&ctx, a),
            Command::Texture(a) => texture_cmd(&ctx, a),
            Command::Estimate(a) => estimate_cmd(&ctx, a),
            Command::Render(a) => render_cmd(&ctx, a),
            Command::Run(a) => run_cmd(&ctx, a),
            Command::Blend(a) => blend_cmd(&ctx, a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
