//! Simulation engine and estimators.
//!
//! Every estimator draws `m` independent runs. Runs are split into chunks of
//! [`CHUNK_RUNS`](crate::rng::CHUNK_RUNS); chunk `i` draws from a stream
//! derived from `(seed, i)` and the per-chunk sums are merged in chunk order,
//! so results do not depend on the number of worker threads.

mod engine;
mod first_passage;
mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::events::{BoundaryEvent, FirstPassageBoundary, TailEvent};
use crate::mixing::{MixtureFlavor, MixtureSpec};
use crate::model::Model;

pub use engine::{run_chunks, simulate_run, trace_runs, RunOutcome};
pub use first_passage::{default_max_steps, estimate_first_passage, first_passage_mixture, solve_zero_cgf};
pub use oracle::{exact_probability_oracle, OracleResult, DEFAULT_ORACLE_HORIZON, MAX_ORACLE_PATHS};

/// What a run simulates and when it counts as a hit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventSpec {
    Tail(TailEvent),
    Boundary(BoundaryEvent),
    FirstPassage {
        boundary: FirstPassageBoundary,
        c: f64,
        max_steps: usize,
    },
}

impl EventSpec {
    /// Longest possible run.
    pub fn horizon(&self) -> usize {
        match self {
            EventSpec::Tail(e) => e.n,
            EventSpec::Boundary(e) => e.n1,
            EventSpec::FirstPassage { max_steps, .. } => *max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineOptions {
    /// Worker threads; `None` uses all available cores.
    pub workers: Option<usize>,
}

impl EngineOptions {
    pub fn sequential() -> Self {
        Self { workers: Some(1) }
    }
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub run: u64,
    pub component: usize,
    pub initial_state: usize,
    /// `X_1..X_t`; empty for i.i.d. models.
    pub states: Vec<usize>,
    pub increments: Vec<Vec<f64>>,
    /// `S_1..S_t`.
    pub sums: Vec<Vec<f64>>,
    /// Length of the path: the stopping time or the horizon.
    pub stop: usize,
    /// The path stopped on the event rather than at the horizon.
    pub stopped_early: bool,
    pub hit: bool,
    pub truncated: bool,
    pub contribution: f64,
    /// Times `n >= 1` with `X_n` at the regeneration atom.
    pub regenerations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub estimate: f64,
    pub std_error: f64,
    pub runs: u64,
    /// Mean of squared contributions, `E_Q[L^2 1_A]`.
    pub second_moment: f64,
    pub hits: u64,
    pub truncations: u64,
    pub seconds: f64,
    pub seed: u64,
}

/// `E_Q[L^2 1_A] / p^2`.
pub fn relative_second_moment(report: &EstimateReport, reference_p: f64) -> f64 {
    report.second_moment / (reference_p * reference_p)
}

fn method_label(mixture: &MixtureSpec) -> String {
    match mixture.flavor {
        MixtureFlavor::Finite if mixture.len() == 1 => "single-tilt".into(),
        MixtureFlavor::Finite => "finite-mixture".into(),
        MixtureFlavor::TailGrid => "tail-grid".into(),
        MixtureFlavor::BoundaryGrid => "boundary-grid".into(),
        MixtureFlavor::RegimeGrid => "regime-grid".into(),
    }
}

/// Importance sampling estimate of `P{ g(S_n / n) >= b }`.
pub fn estimate_tail(
    model: &Model,
    mixture: &MixtureSpec,
    event: &TailEvent,
    m: u64,
    seed: u64,
    opts: EngineOptions,
) -> Result<EstimateReport> {
    engine::estimate(model, mixture, &EventSpec::Tail(event.clone()), m, seed, opts, method_label(mixture))
}

/// Importance sampling estimate of `P{ T_c <= n1 }`.
pub fn estimate_boundary(
    model: &Model,
    mixture: &MixtureSpec,
    event: &BoundaryEvent,
    m: u64,
    seed: u64,
    opts: EngineOptions,
) -> Result<EstimateReport> {
    engine::estimate(model, mixture, &EventSpec::Boundary(event.clone()), m, seed, opts, method_label(mixture))
}

/// Plain Monte Carlo under the untilted measure.
pub fn estimate_direct(model: &Model, event: &EventSpec, m: u64, seed: u64, opts: EngineOptions) -> Result<EstimateReport> {
    let untilted = direct_mixture(model)?;
    engine::estimate(model, &untilted, event, m, seed, opts, "direct".into())
}

/// The untilted measure as a one-component mixture; its likelihood ratio is 1.
pub fn direct_mixture(model: &Model) -> Result<MixtureSpec> {
    MixtureSpec::from_tilts(MixtureFlavor::Finite, Default::default(), vec![(model.untilted()?, 1.0)])
}

/// Estimate for any event under any proposal mixture.
pub fn estimate_event(
    model: &Model,
    mixture: &MixtureSpec,
    event: &EventSpec,
    m: u64,
    seed: u64,
    opts: EngineOptions,
) -> Result<EstimateReport> {
    engine::estimate(model, mixture, event, m, seed, opts, method_label(mixture))
}

#[cfg(test)]
mod tests;
