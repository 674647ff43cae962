//! Cuckoo search over a box-bounded parameter space.
//!
//! Each iteration lays one Lévy-flight egg per nest into a random nest,
//! then one mutated egg per nest into its own nest, and finally replaces the
//! worst nests with fresh random eggs. Eggs only replace nests they beat. The
//! best egg ever seen is tracked separately and never abandoned.
//!
//! The pipelined driver splits the objective into a render stage and a
//! scoring stage and overlaps rendering of iteration `k` with scoring and
//! nest updates of iteration `k-1`.

use std::io::Write;
use std::path::Path;
use std::sync::mpsc::{sync_channel, RecvTimeoutError};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::real::Real;
use crate::render::PARAM_SPECS;

#[derive(Debug, Error)]
pub enum CuckooError {
    #[error("energy evaluation failed in iteration {iteration} ({phase}): {message}")]
    Energy {
        iteration: usize,
        phase: &'static str,
        message: String,
    },
    #[error("render stage stalled for {waited_ms} ms in iteration {iteration}")]
    Stall { iteration: usize, waited_ms: u128 },
    #[error("render stage terminated unexpectedly")]
    WorkerGone,
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("cannot write energy log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuckooConfig {
    pub nests: usize,
    pub abandon: usize,
    /// Lévy step scale as a fraction of each dimension's range.
    pub alpha: f64,
    pub beta: f64,
    pub mutation_prob: f64,
    /// Mutation standard deviation as a fraction of each dimension's range.
    pub mutation_sigma: f64,
    pub smoothing: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Render-stage stall limit for the pipelined driver.
    pub stall_timeout: Duration,
}

impl Default for CuckooConfig {
    fn default() -> Self {
        Self {
            nests: 25,
            abandon: 5,
            alpha: 0.01,
            beta: 1.5,
            mutation_prob: 0.5,
            mutation_sigma: 0.05,
            smoothing: 100,
            epsilon: 1e-4,
            max_iters: 1000,
            seed: 0,
            stall_timeout: Duration::from_secs(120),
        }
    }
}

impl CuckooConfig {
    pub fn validate(&self) -> Result<(), CuckooError> {
        if self.nests == 0 {
            return Err(CuckooError::Config("nests must be positive".into()));
        }
        if self.abandon >= self.nests {
            return Err(CuckooError::Config(format!(
                "abandon count {} must be below the nest count {}",
                self.abandon, self.nests
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 2.0) {
            return Err(CuckooError::Config(format!("beta must lie in (0, 2], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(CuckooError::Config(format!("mutation_prob must lie in [0, 1], got {}", self.mutation_prob)));
        }
        if self.smoothing == 0 {
            return Err(CuckooError::Config("smoothing window must be positive".into()));
        }
        Ok(())
    }
}

/// Per-dimension lower and upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    /// The water parameter space.
    pub fn water_params() -> Self {
        Self::new(PARAM_SPECS.iter().map(|s| s.lo).collect(), PARAM_SPECS.iter().map(|s| s.hi).collect())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn range(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn clamp<T: Real>(&self, d: usize, v: T) -> T {
        v.clamp_to(T::lit(self.lo[d]), T::lit(self.hi[d]))
    }

    pub fn contains<T: Real>(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(d, v)| {
                let v = v.as_f64();
                v >= self.lo[d] && v <= self.hi[d]
            })
    }

    pub fn uniform<T: Real>(&self, rng: &mut impl Rng) -> Vec<T> {
        (0..self.dim())
            .map(|d| T::lit(self.lo[d] + rng.random::<f64>() * self.range(d)))
            .collect()
    }
}

/// Mantegna's scale `σ_u` for stability index `beta`.
pub fn mantegna_sigma(beta: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let num = gamma(1.0 + beta) * (std::f64::consts::PI * beta / 2.0).sin();
    let den = gamma((1.0 + beta) / 2.0) * beta * 2f64.powf((beta - 1.0) / 2.0);
    (num / den).powf(1.0 / beta)
}

/// One Lévy-stable sample by Mantegna's construction `u / |v|^(1/β)`.
pub fn levy_sample(beta: f64, sigma_u: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_u;
    let v: f64 = rng.sample(StandardNormal);
    u / v.abs().powf(1.0 / beta)
}

/// `x + α·range·ℓ` per dimension, clamped.
pub fn levy_step<T: Real>(x: &[T], bounds: &Bounds, alpha: f64, beta: f64, rng: &mut impl Rng) -> Vec<T> {
    let sigma = mantegna_sigma(beta);
    x.iter()
        .enumerate()
        .map(|(d, &v)| {
            let l = levy_sample(beta, sigma, rng);
            if alpha == 0.0 {
                return v;
            }
            bounds.clamp(d, v + T::lit(alpha * bounds.range(d) * l))
        })
        .collect()
}

/// Each dimension perturbed with probability `p` by `N(0, (σ·range)²)`, clamped.
pub fn mutate<T: Real>(x: &[T], bounds: &Bounds, p: f64, sigma: f64, rng: &mut impl Rng) -> Vec<T> {
    x.iter()
        .enumerate()
        .map(|(d, &v)| {
            let pick = rng.random::<f64>() < p;
            let n: f64 = rng.sample(StandardNormal);
            if pick {
                bounds.clamp(d, v + T::lit(sigma * bounds.range(d) * n))
            } else {
                v
            }
        })
        .collect()
}

/// Best-energy history with the ramp-weighted smoothing termination test.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace<T> {
    pub values: Vec<T>,
    pub smoothing: usize,
    pub epsilon: f64,
}

impl<T: Real> EnergyTrace<T> {
    pub fn new(smoothing: usize, epsilon: f64) -> Self {
        Self {
            values: Vec::new(),
            smoothing,
            epsilon,
        }
    }

    pub fn push(&mut self, e: T) {
        self.values.push(e);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `E'(k) = Σ_{i=k-s+1}^{k} (i - (k - s)) E(i)` with 1-based `k`.
    pub fn smoothed(&self, k: usize) -> Option<T> {
        let s = self.smoothing;
        if k < s || k > self.values.len() {
            return None;
        }
        let mut acc = T::zero();
        for i in (k - s + 1)..=k {
            acc += T::lit((i - (k - s)) as f64) * self.values[i - 1];
        }
        Some(acc)
    }

    /// Relative change `|E'(k) - E'(k-1)| / |E'(k)|` at the latest `k`.
    pub fn relative_change(&self) -> Option<T> {
        let k = self.values.len();
        if k < self.smoothing + 1 {
            return None;
        }
        let now = self.smoothed(k)?;
        let prev = self.smoothed(k - 1)?;
        let diff = (now - prev).abs();
        if diff == T::zero() {
            return Some(T::zero());
        }
        if now == T::zero() {
            return Some(T::infinity());
        }
        Some(diff / now.abs())
    }

    pub fn should_terminate(&self) -> bool {
        self.relative_change().is_some_and(|r| r < T::lit(self.epsilon))
    }
}

/// Free-function form of [`EnergyTrace::should_terminate`].
pub fn should_terminate<T: Real>(trace: &EnergyTrace<T>) -> bool {
    trace.should_terminate()
}

/// Objective split into a render stage and a scoring stage.
pub trait StagedObjective<T: Real>: Sync {
    type Frame: Send;
    fn render(&self, x: &[T]) -> Result<Self::Frame, String>;
    fn score(&self, frame: &Self::Frame) -> Result<T, String>;

    fn energy(&self, x: &[T]) -> Result<T, String> {
        self.score(&self.render(x)?)
    }
}

/// Plain closures as a single-stage objective.
pub struct FnObjective<F>(pub F);

impl<T: Real, F> StagedObjective<T> for FnObjective<F>
where
    F: Fn(&[T]) -> Result<T, String> + Sync,
{
    type Frame = T;
    fn render(&self, x: &[T]) -> Result<T, String> {
        (self.0)(x)
    }
    fn score(&self, frame: &T) -> Result<T, String> {
        Ok(*frame)
    }
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub best_energy: f64,
    pub evals_total: usize,
    pub wall_ms: u128,
}

pub fn write_energy_csv(path: impl AsRef<Path>, logs: &[IterationLog]) -> Result<(), CuckooError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,best_energy,evals_total,wall_ms")?;
    for l in logs {
        writeln!(f, "{},{},{},{}", l.iteration, l.best_energy, l.evals_total, l.wall_ms)?;
    }
    f.flush()?;
    Ok(())
}

/// Nests, their energies, the elite egg and the generator state.
#[derive(Debug, Clone)]
pub struct NestPopulation<T> {
    pub nests: Vec<Vec<T>>,
    pub energies: Vec<T>,
    pub best: Vec<T>,
    pub best_energy: T,
    pub iteration: usize,
    pub evals: usize,
    pub rng: ChaCha8Rng,
}

impl<T: Real> NestPopulation<T> {
    /// Uniform random nests, evaluated.
    pub fn init<O: StagedObjective<T>>(bounds: &Bounds, cfg: &CuckooConfig, obj: &O) -> Result<Self, CuckooError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let nests: Vec<Vec<T>> = (0..cfg.nests).map(|_| bounds.uniform(&mut rng)).collect();
        let energies = nests
            .iter()
            .map(|x| obj.energy(x))
            .collect::<Result<Vec<T>, String>>()
            .map_err(|message| CuckooError::Energy {
                iteration: 0,
                phase: "init",
                message,
            })?;
        let bi = argmin(&energies);
        Ok(Self {
            best: nests[bi].clone(),
            best_energy: energies[bi],
            nests,
            energies,
            iteration: 0,
            evals: cfg.nests,
            rng,
        })
    }

    fn offer_best(&mut self, x: &[T], e: T) {
        if e < self.best_energy {
            self.best_energy = e;
            self.best = x.to_vec();
        }
    }

    /// Indices of the `k` highest-energy nests, never including the current best nest.
    fn worst(&self, k: usize) -> Vec<usize> {
        let keep = argmin(&self.energies);
        let mut idx: Vec<usize> = (0..self.nests.len()).filter(|&i| i != keep).collect();
        idx.sort_by(|&a, &b| {
            self.energies[b]
                .partial_cmp(&self.energies[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx.truncate(k);
        idx
    }
}

fn argmin<T: Real>(v: &[T]) -> usize {
    let mut bi = 0;
    for (i, &e) in v.iter().enumerate() {
        if e < v[bi] {
            bi = i;
        }
    }
    bi
}

fn energy_err(iteration: usize, phase: &'static str) -> impl Fn(String) -> CuckooError {
    move |message| CuckooError::Energy {
        iteration,
        phase,
        message,
    }
}

/// One serial iteration: Lévy phase, mutation phase, abandonment.
pub fn iterate_serial<T: Real, O: StagedObjective<T>>(
    pop: &mut NestPopulation<T>,
    bounds: &Bounds,
    cfg: &CuckooConfig,
    obj: &O,
) -> Result<(), CuckooError> {
    let it = pop.iteration + 1;
    let n = pop.nests.len();
    for i in 0..n {
        let egg = levy_step(&pop.nests[i], bounds, cfg.alpha, cfg.beta, &mut pop.rng);
        let j = pop.rng.random_range(0..n);
        let e = obj.energy(&egg).map_err(energy_err(it, "levy"))?;
        pop.evals += 1;
        pop.offer_best(&egg, e);
        if e < pop.energies[j] {
            pop.nests[j] = egg;
            pop.energies[j] = e;
        }
    }
    for i in 0..n {
        let egg = mutate(&pop.nests[i], bounds, cfg.mutation_prob, cfg.mutation_sigma, &mut pop.rng);
        let e = obj.energy(&egg).map_err(energy_err(it, "mutation"))?;
        pop.evals += 1;
        pop.offer_best(&egg, e);
        if e < pop.energies[i] {
            pop.nests[i] = egg;
            pop.energies[i] = e;
        }
    }
    for i in pop.worst(cfg.abandon) {
        let egg: Vec<T> = bounds.uniform(&mut pop.rng);
        let e = obj.energy(&egg).map_err(energy_err(it, "abandon"))?;
        pop.evals += 1;
        pop.offer_best(&egg, e);
        pop.nests[i] = egg;
        pop.energies[i] = e;
    }
    pop.iteration = it;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CuckooResult<T> {
    pub best: Vec<T>,
    pub best_energy: T,
    pub trace: EnergyTrace<T>,
    pub logs: Vec<IterationLog>,
    pub evals: usize,
    pub iterations: usize,
    /// Stopped by the smoothing rule rather than the iteration cap.
    pub converged: bool,
}

fn log_row<T: Real>(pop: &NestPopulation<T>, start: Instant) -> IterationLog {
    IterationLog {
        iteration: pop.iteration,
        best_energy: pop.best_energy.as_f64(),
        evals_total: pop.evals,
        wall_ms: start.elapsed().as_millis(),
    }
}

/// Serial search on the calling thread until the smoothing rule fires or
/// `max_iters` iterations have run.
pub fn run_serial<T: Real, O: StagedObjective<T>>(
    bounds: &Bounds,
    cfg: &CuckooConfig,
    obj: &O,
    mut on_iter: impl FnMut(&IterationLog),
) -> Result<CuckooResult<T>, CuckooError> {
    let start = Instant::now();
    let mut pop = NestPopulation::init(bounds, cfg, obj)?;
    let mut trace = EnergyTrace::new(cfg.smoothing, cfg.epsilon);
    let mut logs = Vec::new();
    let mut converged = false;
    while pop.iteration < cfg.max_iters {
        iterate_serial(&mut pop, bounds, cfg, obj)?;
        trace.push(pop.best_energy);
        let row = log_row(&pop, start);
        on_iter(&row);
        logs.push(row);
        if trace.should_terminate() {
            converged = true;
            break;
        }
    }
    Ok(CuckooResult {
        best: pop.best,
        best_energy: pop.best_energy,
        trace,
        logs,
        evals: pop.evals,
        iterations: pop.iteration,
        converged,
    })
}

/// Candidate sets generated for one pipelined iteration.
struct Batch<T> {
    levy: Vec<Vec<T>>,
    mutated: Vec<Vec<T>>,
    random: Vec<Vec<T>>,
}

impl<T: Real> Batch<T> {
    fn generate(pop: &mut NestPopulation<T>, bounds: &Bounds, cfg: &CuckooConfig) -> Self {
        let levy = pop
            .nests
            .iter()
            .map(|x| levy_step(x, bounds, cfg.alpha, cfg.beta, &mut pop.rng))
            .collect();
        let mutated = pop
            .nests
            .iter()
            .map(|x| mutate(x, bounds, cfg.mutation_prob, cfg.mutation_sigma, &mut pop.rng))
            .collect();
        let random = (0..cfg.abandon).map(|_| bounds.uniform(&mut pop.rng)).collect();
        Self { levy, mutated, random }
    }

    fn all(&self) -> Vec<Vec<T>> {
        self.levy.iter().chain(&self.mutated).chain(&self.random).cloned().collect()
    }
}

/// Applies scored candidates of one batch to the nests, lazily: targets and
/// comparisons use the nest state at update time.
fn apply_batch<T: Real>(pop: &mut NestPopulation<T>, batch: &Batch<T>, scores: &[T]) {
    let n = pop.nests.len();
    let (ls, rest) = scores.split_at(batch.levy.len());
    let (ms, rs) = rest.split_at(batch.mutated.len());
    for (egg, &e) in batch.levy.iter().zip(ls) {
        pop.offer_best(egg, e);
        let j = pop.rng.random_range(0..n);
        if e < pop.energies[j] {
            pop.nests[j] = egg.clone();
            pop.energies[j] = e;
        }
    }
    for (i, (egg, &e)) in batch.mutated.iter().zip(ms).enumerate() {
        pop.offer_best(egg, e);
        if e < pop.energies[i] {
            pop.nests[i] = egg.clone();
            pop.energies[i] = e;
        }
    }
    for (slot, (egg, &e)) in pop.worst(batch.random.len()).into_iter().zip(batch.random.iter().zip(rs)) {
        pop.offer_best(egg, e);
        pop.nests[slot] = egg.clone();
        pop.energies[slot] = e;
    }
    pop.evals += scores.len();
    pop.iteration += 1;
}

/// Two-stage search: a render thread (fanning candidates out over the rayon
/// pool) works on iteration `k` while this thread scores iteration `k-1` and
/// applies its nest updates. Queues between the stages hold one batch.
pub fn run_pipelined<T: Real, O: StagedObjective<T>>(
    bounds: &Bounds,
    cfg: &CuckooConfig,
    obj: &O,
    mut on_iter: impl FnMut(&IterationLog),
) -> Result<CuckooResult<T>, CuckooError> {
    let start = Instant::now();
    let mut pop = NestPopulation::init(bounds, cfg, obj)?;
    let mut trace = EnergyTrace::new(cfg.smoothing, cfg.epsilon);
    let mut logs = Vec::new();
    let mut converged = false;

    std::thread::scope(|scope| -> Result<(), CuckooError> {
        let (job_tx, job_rx) = sync_channel::<Vec<Vec<T>>>(1);
        let (frame_tx, frame_rx) = sync_channel::<Result<Vec<O::Frame>, String>>(1);
        scope.spawn(move || {
            for job in job_rx {
                let frames: Result<Vec<O::Frame>, String> = job.par_iter().map(|x| obj.render(x)).collect();
                if frame_tx.send(frames).is_err() {
                    break;
                }
            }
        });

        let receive = |iteration: usize| -> Result<Vec<O::Frame>, CuckooError> {
            let t0 = Instant::now();
            match frame_rx.recv_timeout(cfg.stall_timeout) {
                Ok(r) => r.map_err(energy_err(iteration, "render")),
                Err(RecvTimeoutError::Timeout) => Err(CuckooError::Stall {
                    iteration,
                    waited_ms: t0.elapsed().as_millis(),
                }),
                Err(RecvTimeoutError::Disconnected) => Err(CuckooError::WorkerGone),
            }
        };

        let mut in_flight: Option<Batch<T>> = None;
        let mut k = 0;
        loop {
            let next = (k < cfg.max_iters && !converged).then(|| Batch::generate(&mut pop, bounds, cfg));
            let frames = match in_flight.is_some() {
                true => Some(receive(pop.iteration + 1)?),
                false => None,
            };
            if let Some(b) = &next {
                job_tx.send(b.all()).map_err(|_| CuckooError::WorkerGone)?;
            }
            if let (Some(prev), Some(frames)) = (in_flight.take(), frames) {
                let it = pop.iteration + 1;
                let scores = frames
                    .iter()
                    .map(|f| obj.score(f))
                    .collect::<Result<Vec<T>, String>>()
                    .map_err(energy_err(it, "score"))?;
                apply_batch(&mut pop, &prev, &scores);
                trace.push(pop.best_energy);
                let row = log_row(&pop, start);
                on_iter(&row);
                logs.push(row);
                if trace.should_terminate() {
                    converged = true;
                }
            }
            match next {
                Some(b) => {
                    in_flight = Some(b);
                    k += 1;
                }
                None => break,
            }
            if converged {
                // Let the in-flight batch finish so the worker can exit cleanly.
                let _ = receive(pop.iteration + 1);
                break;
            }
        }
        drop(job_tx);
        Ok(())
    })?;

    Ok(CuckooResult {
        best: pop.best,
        best_energy: pop.best_energy,
        trace,
        logs,
        evals: pop.evals,
        iterations: pop.iteration,
        converged,
    })
}
