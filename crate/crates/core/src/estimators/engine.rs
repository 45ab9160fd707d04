use rand::Rng;

use super::{EngineOptions, EstimateReport, EventSpec, TrajectoryRecord};
use crate::error::Result;
use crate::mixing::MixtureSpec;
use crate::model::Model;
use crate::rng::{chunk_rng, RunStats, SimRng, CHUNK_RUNS};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub contribution: f64,
    pub hit: bool,
    pub truncated: bool,
}

/// Simulates one run under `mixture` and returns `L 1_A`.
pub fn simulate_run<R: Rng + ?Sized>(
    model: &Model,
    mixture: &MixtureSpec,
    event: &EventSpec,
    rng: &mut R,
    mut record: Option<&mut TrajectoryRecord>,
) -> Result<RunOutcome> {
    let x0 = model.sample_initial(rng);
    let k = mixture.sample_component(rng);
    let tilt = mixture.tilt(k);
    let d = model.dim();
    let mut s = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut x = x0;
    let horizon = event.horizon();
    let mut t = 0;
    let mut crossed = false;
    while t < horizon {
        x = tilt.step(x, rng, &mut xi);
        t += 1;
        for (a, b) in s.iter_mut().zip(&xi) {
            *a += b;
        }
        if let Some(r) = record.as_deref_mut() {
            if matches!(model, Model::Markov(_)) {
                r.states.push(x);
            }
            r.increments.push(xi.clone());
            r.sums.push(s.clone());
        }
        crossed = match event {
            EventSpec::Tail(_) => false,
            EventSpec::Boundary(e) => e.crossed(&s, t),
            EventSpec::FirstPassage { boundary, c, .. } => boundary.crossed(&s, *c),
        };
        if crossed {
            break;
        }
    }
    let hit = match event {
        EventSpec::Tail(e) => e.hit(&s),
        _ => crossed,
    };
    let truncated = matches!(event, EventSpec::FirstPassage { .. }) && !crossed;
    let contribution = if hit {
        (-mixture.log_inverse_likelihood_ratio(&s, t, x, x0)?).exp()
    } else {
        0.0
    };
    if let Some(r) = record {
        r.component = k;
        r.initial_state = x0;
        r.stop = t;
        r.stopped_early = crossed;
        r.hit = hit;
        r.truncated = truncated;
        r.contribution = contribution;
    }
    Ok(RunOutcome {
        contribution,
        hit,
        truncated,
    })
}

fn chunk_count(m: u64) -> u64 {
    m.div_ceil(CHUNK_RUNS)
}

fn chunk_len(m: u64, i: u64) -> u64 {
    CHUNK_RUNS.min(m - i * CHUNK_RUNS)
}

/// Runs `m` replications in deterministic chunks and merges their statistics
/// in chunk order. `run` receives the chunk stream and the global run index.
pub fn run_chunks<F>(m: u64, seed: u64, opts: EngineOptions, run: F) -> Result<RunStats>
where
    F: Fn(&mut SimRng, u64) -> Result<RunOutcome> + Sync,
{
    let do_chunk = |i: u64| -> Result<RunStats> {
        let mut rng = chunk_rng(seed, i);
        let mut stats = RunStats::default();
        for j in 0..chunk_len(m, i) {
            let o = run(&mut rng, i * CHUNK_RUNS + j)?;
            stats.push(o.contribution, o.hit, o.truncated);
        }
        Ok(stats)
    };
    let chunks = chunk_count(m);
    let per_chunk: Vec<Result<RunStats>> = dispatch(chunks, opts, &do_chunk);
    let mut total = RunStats::default();
    for s in per_chunk {
        total.merge(&s?);
    }
    Ok(total)
}

#[cfg(feature = "parallel")]
fn dispatch<F>(chunks: u64, opts: EngineOptions, f: &F) -> Vec<Result<RunStats>>
where
    F: Fn(u64) -> Result<RunStats> + Sync,
{
    use rayon::prelude::*;
    if opts.workers == Some(1) || chunks <= 1 {
        return (0..chunks).map(f).collect();
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        builder = builder.num_threads(w);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| (0..chunks).into_par_iter().map(f).collect()),
        Err(_) => (0..chunks).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn dispatch<F>(chunks: u64, _opts: EngineOptions, f: &F) -> Vec<Result<RunStats>>
where
    F: Fn(u64) -> Result<RunStats> + Sync,
{
    (0..chunks).map(f).collect()
}

#[cfg(not(target_arch = "wasm32"))]
pub(crate) struct Stopwatch(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self(std::time::Instant::now())
    }
    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(target_arch = "wasm32")]
pub(crate) struct Stopwatch;

#[cfg(target_arch = "wasm32")]
impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self
    }
    pub(crate) fn seconds(&self) -> f64 {
        0.0
    }
}

pub(crate) fn report(method: String, stats: &RunStats, seed: u64, seconds: f64) -> EstimateReport {
    EstimateReport {
        method,
        estimate: stats.mean(),
        std_error: stats.std_error(),
        runs: stats.count,
        second_moment: stats.mean_sq(),
        hits: stats.hits,
        truncations: stats.truncations,
        seconds,
        seed,
    }
}

pub(crate) fn estimate(
    model: &Model,
    mixture: &MixtureSpec,
    event: &EventSpec,
    m: u64,
    seed: u64,
    opts: EngineOptions,
    method: String,
) -> Result<EstimateReport> {
    if m == 0 {
        return Err(crate::Error::Config("at least one run is required".into()));
    }
    if mixture.tilt(0).theta().len() != model.dim() {
        return Err(crate::Error::Config("mixture dimension does not match the model".into()));
    }
    let clock = Stopwatch::start();
    let stats = run_chunks(m, seed, opts, |rng, _| simulate_run(model, mixture, event, rng, None))?;
    Ok(report(method, &stats, seed, clock.seconds()))
}

/// Full records of the first `m` runs, identical to the runs an estimator
/// with the same seed performs.
pub fn trace_runs(
    model: &Model,
    mixture: &MixtureSpec,
    event: &EventSpec,
    m: u64,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let atom = crate::regeneration::default_atom(model);
    let mut out = Vec::with_capacity(m as usize);
    for i in 0..chunk_count(m) {
        let mut rng = chunk_rng(seed, i);
        for j in 0..chunk_len(m, i) {
            let mut rec = TrajectoryRecord {
                run: i * CHUNK_RUNS + j,
                component: 0,
                initial_state: 0,
                states: Vec::new(),
                increments: Vec::new(),
                sums: Vec::new(),
                stop: 0,
                stopped_early: false,
                hit: false,
                truncated: false,
                contribution: 0.0,
                regenerations: Vec::new(),
            };
            simulate_run(model, mixture, event, &mut rng, Some(&mut rec))?;
            rec.regenerations = match model {
                Model::Markov(_) => {
                    let mut path = vec![rec.initial_state];
                    path.extend(&rec.states);
                    crate::regeneration::regeneration_times(&path, atom, None).times
                }
                Model::Iid(_) => (1..=rec.stop).collect(),
            };
            out.push(rec);
        }
    }
    Ok(out)
}
