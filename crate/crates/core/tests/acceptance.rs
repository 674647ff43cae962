//! Acceptance report: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The two estimator runs take
//! roughly half an hour on a single core.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stillwater::cuckoo::{iterate_serial, Bounds, CuckooConfig, EnergyTrace, NestPopulation};
use stillwater::fft::{fft2, ifft2};
use stillwater::metrics::{
    hellinger, hellinger_slices, texture_distance, EnergyConfig, HsvHistogram, CROP_SIZE, HIST_BINS,
};
use stillwater::ocean::{init_spectrum, synthesize, Ocean, OceanConfig};
use stillwater::pipeline::{
    energy_evaluator, run_estimate, run_full, EstimateOptions, PipelineConfig, RunOptions, ENERGY_FILE, PREVIEW_DIR,
    SCENE_FILE,
};
use stillwater::raster::save_image;
use stillwater::render::{render_frame, RenderConfig, WaterParams, PARAM_SPECS};
use stillwater::scene::{scene_from_str, scene_to_string, SceneAssets, SceneDescriptor};

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Report {
    lines: Vec<(Verdict, String)>,
}

impl Report {
    fn record(&mut self, name: &str, verdict: Verdict, detail: String) {
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        };
        println!("{tag} {name}: {detail}");
        self.lines.push((verdict, name.to_owned()));
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.record(name, if ok { Verdict::Pass } else { Verdict::Fail }, detail);
    }
}

fn naive_idft(f: &[Complex<f64>], n: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = Complex::new(0.0, 0.0);
            for v in 0..n {
                for u in 0..n {
                    let ang = std::f64::consts::TAU * ((u * x + v * y) as f64) / n as f64;
                    acc += f[v * n + u] * Complex::from_polar(1.0, ang);
                }
            }
            out[y * n + x] = acc / (n * n) as f64;
        }
    }
    out
}

fn max_abs_diff(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn fft_oracle(r: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_dft, mut worst_round) = (0.0f64, 0.0f64);
    for n in [8, 16] {
        let f: Vec<Complex<f64>> =
            (0..n * n).map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let fast = ifft2(&f).unwrap();
        worst_dft = worst_dft.max(max_abs_diff(&fast, &naive_idft(&f, n)));
        worst_round = worst_round.max(max_abs_diff(&fft2(&fast).unwrap(), &f));
    }
    let secs = t0.elapsed().as_secs_f64();
    r.check(
        "FFT oracle",
        worst_dft <= 1e-9 && worst_round <= 1e-9 && secs < 1.0,
        format!("max |ifft - dft| {worst_dft:.2e}, max |fft(ifft) - id| {worst_round:.2e}, {secs:.3} s"),
    );
}

fn realness_and_stationarity(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_imag, mut worst_spread) = (0.0f64, 0.0f64);
    for draw in 0..10 {
        let cfg = OceanConfig { seed: draw, ..OceanConfig::optimization() };
        let grid =
            init_spectrum::<f64>(rng.random_range(1.5..30.0), rng.random_range(0.0..180.0), &cfg).unwrap();
        let chop = rng.random_range(0.0..3.0);
        let vars: Vec<f64> = [0.0, 1.7, 13.2]
            .iter()
            .map(|&t| {
                let f = synthesize::<f64>(&grid, t, chop).unwrap();
                let max_re = f.height.iter().map(|h| h.abs()).fold(0.0, f64::max);
                worst_imag = worst_imag.max(f.imag_residual / max_re);
                f.height_variance()
            })
            .collect();
        let lo = vars.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vars.iter().cloned().fold(0.0, f64::max);
        worst_spread = worst_spread.max((hi - lo) / hi);
    }
    r.check(
        "Surface realness & stationarity",
        worst_imag <= 1e-6 && worst_spread <= 0.05,
        format!("max |Im|/max|Re| {worst_imag:.2e}, max variance spread {:.3}%", 100.0 * worst_spread),
    );
}

fn hellinger_axioms(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = HsvHistogram::<f64>::empty();
    for b in x.bins.iter_mut() {
        *b = rng.random_range(0.0..3.0);
    }
    let same = hellinger(&x, &x).unwrap();
    let (mut a, mut b) = (HsvHistogram::<f64>::empty(), HsvHistogram::<f64>::empty());
    a.bins[0] = 1.0;
    b.bins[HIST_BINS - 1] = 1.0;
    let disjoint = hellinger(&a, &b).unwrap();
    let worked = hellinger_slices(&[1.0f64, 1.0], &[1.0, 0.0]).unwrap();
    r.check(
        "Hellinger axioms",
        same <= 1e-12 && (disjoint - 1.0).abs() <= 1e-12 && (worked - 0.54120).abs() <= 1e-5,
        format!("identical {same:.1e}, disjoint {disjoint}, worked {worked:.6}"),
    );
}

fn energy_constants(r: &mut Report) {
    let c = EnergyConfig::default();
    let s = common::shore_scene();
    let ev = stillwater::metrics::EnergyEvaluator::new(
        &s.photo,
        &s.mask,
        &s.texture,
        c.clone(),
        OceanConfig::optimization(),
        RenderConfig::default(),
    )
    .unwrap();
    let crop = ev.reference().dims();
    let frame = ev.render(&common::true_params()).unwrap().dims();
    r.check(
        "Energy constants",
        c.lambda == 1.0 && HIST_BINS == 1536 && HIST_BINS == 24 * 8 * 8 && CROP_SIZE == 256 && crop == (256, 256) && frame == (256, 256),
        format!("lambda {}, bins {HIST_BINS}, reference crop {crop:?}, candidate crop {frame:?}", c.lambda),
    );
}

fn cuckoo_constants(r: &mut Report) {
    let c = CuckooConfig::default();
    let consts = c.nests == 25 && c.abandon == 5 && c.smoothing == 100 && c.epsilon == 1e-4;
    let b = Bounds::new(vec![-1.0; 6], vec![1.0; 6]);
    let obj = stillwater::cuckoo::FnObjective(|x: &[f64]| {
        Ok(x.iter().map(|v| v * v - 0.1 * (std::f64::consts::TAU * 3.0 * v).cos() + 0.1).sum::<f64>())
    });
    let mut monotone = true;
    for seed in 1..=5 {
        let cfg = CuckooConfig { seed, ..CuckooConfig::default() };
        let mut pop = NestPopulation::init(&b, &cfg, &obj).unwrap();
        let mut prev = pop.best_energy;
        for _ in 0..500 {
            iterate_serial(&mut pop, &b, &cfg, &obj).unwrap();
            monotone &= pop.best_energy <= prev;
            prev = pop.best_energy;
        }
    }
    let mut t = EnergyTrace::new(100, 1e-4);
    for k in 0..50 {
        t.push(1.0 - 0.01 * k as f64);
    }
    let filled_at = t.len() + 100 + 1;
    let mut fired_at = None;
    while t.len() < filled_at + 10 {
        t.push(0.5);
        if t.should_terminate() {
            fired_at = Some(t.len());
            break;
        }
    }
    let prompt = fired_at.is_some_and(|k| k <= filled_at);
    r.check(
        "Cuckoo constants & elitism",
        consts && monotone && prompt,
        format!(
            "n {} k {} s {} eps {}; best non-increasing over 500 iterations on 5 seeds: {monotone}; plateau fired at {fired_at:?} (window full at {filled_at})",
            c.nests, c.abandon, c.smoothing, c.epsilon
        ),
    );
}

const RECOVERY_SEED: u64 = 11;
const PAIRED_ITERS: usize = 200;
const BUDGET: Duration = Duration::from_secs(600);
/// Four cores for ten minutes, spent on this machine's cores.
fn compute_budget() -> Duration {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()) as u32;
    BUDGET * 4 / threads.min(4)
}

struct SerialRun {
    at_budget: (usize, f64, f64, f64),
    at_compute_budget: (usize, f64, f64, f64),
    paired_energy: f64,
    paired_secs: f64,
    paired_evals: usize,
}

/// Serial estimation on the self-recovery scene, through the same evaluator
/// `estimate` builds, snapshotting the elite at the wall-clock budgets.
fn serial_recovery(cfg: &PipelineConfig, s: &common::ShoreScene, reference: &stillwater::raster::ImageBuffer<f64>) -> SerialRun {
    let ev = energy_evaluator(reference, &s.mask, &s.texture, cfg).unwrap();
    let ccfg = cfg.cuckoo_config(RECOVERY_SEED);
    let bounds = Bounds::water_params();
    let texture = |best: &[f64]| {
        let f = ev.render(&WaterParams::from_vec_clamped(best).unwrap()).unwrap();
        texture_distance(&f, ev.reference()).unwrap()
    };
    let start = Instant::now();
    let mut pop = NestPopulation::init(&bounds, &ccfg, &ev).unwrap();
    let mut at_budget = None;
    let mut paired = None;
    let long = compute_budget();
    loop {
        iterate_serial(&mut pop, &bounds, &ccfg, &ev).unwrap();
        let el = start.elapsed();
        if el <= BUDGET {
            at_budget = Some((pop.iteration, pop.best_energy, pop.best.clone(), el.as_secs_f64()));
        }
        if pop.iteration == PAIRED_ITERS {
            paired = Some((pop.best_energy, el.as_secs_f64(), pop.evals));
        }
        let reached = pop.best_energy <= 0.1;
        if pop.iteration >= PAIRED_ITERS && (reached || el >= long) {
            break;
        }
    }
    let last = (pop.iteration, pop.best_energy, pop.best.clone(), start.elapsed().as_secs_f64());
    let at_budget = at_budget.unwrap_or_else(|| last.clone());
    let finish = |(it, e, best, secs): (usize, f64, Vec<f64>, f64)| (it, e, texture(&best), secs);
    let (paired_energy, paired_secs, paired_evals) = paired.unwrap();
    SerialRun {
        at_budget: finish(at_budget),
        at_compute_budget: finish(last),
        paired_energy,
        paired_secs,
        paired_evals,
    }
}

fn self_recovery_and_pipelining(r: &mut Report) {
    let s = common::shore_scene();
    let reference = common::rendered_reference(&s, &common::true_params());
    let cfg = PipelineConfig { cuckoo: stillwater::pipeline::CuckooSection { epsilon: 0.0, ..Default::default() }, ..Default::default() };
    let serial = serial_recovery(&cfg, &s, &reference);

    let (it, e, td, secs) = serial.at_budget;
    r.check(
        "Self-recovery",
        e <= 0.1 && td <= 0.05,
        format!(
            "seed {RECOVERY_SEED}, serial on {} thread(s): energy {e:.4} (<= 0.1), texture_distance {td:.4} (<= 0.05) after {it} iterations in {secs:.0} s (budget {} s)",
            std::thread::available_parallelism().map_or(1, |n| n.get()),
            BUDGET.as_secs()
        ),
    );
    let (it, e, td, secs) = serial.at_compute_budget;
    println!(
        "     self-recovery, same run continued to a four-core-equivalent {} s budget or energy 0.1: energy {e:.4}, texture_distance {td:.4} after {it} iterations in {secs:.0} s",
        compute_budget().as_secs()
    );

    let mut pcfg = cfg.clone();
    pcfg.cuckoo.max_iters = PAIRED_ITERS;
    let t0 = Instant::now();
    let piped = run_estimate(
        &reference,
        &s.mask,
        &s.texture,
        &pcfg,
        EstimateOptions { seed: RECOVERY_SEED, serial: false },
        None,
    )
    .unwrap();
    let psecs = t0.elapsed().as_secs_f64();
    let rel = (piped.best_energy - serial.paired_energy).abs() / serial.paired_energy;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let speedup = (piped.evals as f64 / psecs) / (serial.paired_evals as f64 / serial.paired_secs);
    r.check(
        "Pipelined energy",
        rel <= 0.1,
        format!(
            "{PAIRED_ITERS} iterations, seed {RECOVERY_SEED}: pipelined {:.4} vs serial {:.4} ({:.1}% apart, <= 10%)",
            piped.best_energy,
            serial.paired_energy,
            100.0 * rel
        ),
    );
    let detail = format!("throughput {speedup:.2}x serial on {threads} hardware thread(s) (>= 1.2x required with >= 4)");
    if threads >= 4 {
        r.check("Pipelined throughput", speedup >= 1.2, detail);
    } else {
        r.record("Pipelined throughput", Verdict::Skip, format!("{detail}; precondition not met"));
    }
}

fn mirror_and_atlas_agreement(r: &mut Report) {
    let mut worst = 1.0f64;
    let mut walls = 1.0f64;
    for atlas in [false, true] {
        let m = common::mirror_oracle(256, atlas);
        worst = worst.min(m.matched as f64 / m.water_pixels as f64);
        walls = walls.min(m.wall_hits as f64 / m.water_pixels as f64);
    }
    let cmp = common::compare_atlas(256, 1);
    let agree = cmp.within_005 as f64 / cmp.water_pixels as f64;
    let identical = cmp.identical as f64 / cmp.water_pixels as f64;
    r.check(
        "Mirror reflection oracle",
        worst >= 0.99 && agree >= 0.95,
        format!(
            "texel within 1 px of the mirror image: {:.2}% (wall crossings {:.1}%); atlas on/off RGB diff <= 0.05: {:.2}% (bit-identical {:.1}%)",
            100.0 * worst,
            100.0 * walls,
            100.0 * agree,
            100.0 * identical
        ),
    );
}

fn atlas_speed(r: &mut Report) {
    let cmp = common::compare_atlas(512, 3);
    let speedup = cmp.brute_secs / cmp.atlas_secs;
    r.check(
        "Collision-atlas performance",
        speedup >= 3.0,
        format!(
            "512x512 reflection pass: {:.1} ms without, {:.1} ms with the atlas ({speedup:.2}x, >= 3x)",
            1e3 * cmp.brute_secs,
            1e3 * cmp.atlas_secs
        ),
    );
}

fn files_equal(a: &Path, b: &Path) -> bool {
    std::fs::read(a).ok() == std::fs::read(b).ok()
}

fn compositing_integrity(r: &mut Report) {
    let s = common::shore_scene();
    let mask = common::wavy_shore_mask();
    let p = common::true_params();
    let field = Ocean::new(p.wind_speed, p.wind_dir, &OceanConfig::default()).unwrap().field(0.7, p.choppiness).unwrap();
    let out = render_frame(&s.photo, &mask, &s.texture, &p, &field, common::SIZE, common::SIZE, RenderConfig::default()).unwrap();
    let (mut land, mut same) = (0, 0);
    for y in 0..common::SIZE {
        for x in 0..common::SIZE {
            if mask.prob(x, y) == 0.0 {
                land += 1;
                same += usize::from(out.pixel(x, y) == s.photo.pixel(x, y));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut round_trips = 0;
    for i in 0..200 {
        let v: Vec<f64> = PARAM_SPECS.iter().map(|sp| rng.random_range(sp.lo..=sp.hi)).collect();
        let mut scene = SceneDescriptor::new(
            WaterParams::from_vec_checked(&v).unwrap(),
            SceneAssets { photo: format!("p{i}.png"), mask: "m.png".into(), texture: "t.png".into() },
        );
        scene.ocean.seed = rng.random_range(0..=i64::MAX as u64);
        scene.ocean.domain_len = rng.random_range(1.0..1000.0);
        scene.render.fps = rng.random_range(1.0..120.0);
        round_trips += usize::from(scene_from_str(&scene_to_string(&scene)).ok() == Some(scene));
    }

    let inputs = tempfile::tempdir().unwrap();
    let photo = inputs.path().join("photo.png");
    save_image(&s.photo, &photo).unwrap();
    let cfg = PipelineConfig::from_toml_str(
        "[cuckoo]\nnests = 8\nabandon = 2\nmax_iters = 4\n[render]\nwidth = 128\nheight = 128\nframes = 3\n",
    )
    .unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let opts = RunOptions { out_dir: d.path().to_path_buf(), seed: 3, serial: false, mask: None, texture: None };
        run_full(&photo, &cfg, &opts).unwrap();
    }
    let (a, b) = (dirs[0].path(), dirs[1].path());
    let energies = |d: &Path| -> Vec<String> {
        std::fs::read_to_string(d.join(ENERGY_FILE))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
            .collect()
    };
    let mut reproducible = files_equal(&a.join(SCENE_FILE), &b.join(SCENE_FILE))
        && files_equal(&a.join("mask.png"), &b.join("mask.png"))
        && files_equal(&a.join("texture.png"), &b.join("texture.png"))
        && energies(a) == energies(b);
    for i in 0..3 {
        let f = stillwater::pipeline::frame_name(i);
        reproducible &= files_equal(&a.join(PREVIEW_DIR).join(&f), &b.join(PREVIEW_DIR).join(&f));
    }

    r.check(
        "Compositing integrity",
        land > 0 && same == land && round_trips == 200 && reproducible,
        format!(
            "mask-zero pixels identical {same}/{land}; scene round-trips {round_trips}/200; fixed-seed run reproducible: {reproducible}"
        ),
    );
}

fn main() {
    // Let `cargo test -- <filter>` and `--list` behave sensibly.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }

    let mut r = Report { lines: Vec::new() };
    fft_oracle(&mut r);
    realness_and_stationarity(&mut r);
    hellinger_axioms(&mut r);
    energy_constants(&mut r);
    cuckoo_constants(&mut r);
    mirror_and_atlas_agreement(&mut r);
    atlas_speed(&mut r);
    compositing_integrity(&mut r);
    self_recovery_and_pipelining(&mut r);

    let failed: Vec<&str> = r.lines.iter().filter(|(v, _)| *v == Verdict::Fail).map(|(_, n)| n.as_str()).collect();
    println!(
        "acceptance: {} pass, {} fail, {} skip",
        r.lines.iter().filter(|(v, _)| *v == Verdict::Pass).count(),
        failed.len(),
        r.lines.iter().filter(|(v, _)| *v == Verdict::Skip).count()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        // The report is informational under `cargo test`; CI gates opt in.
        if std::env::var_os("STILLWATER_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
