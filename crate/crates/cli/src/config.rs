//! Experiment configuration. Parsed strictly: unknown keys are errors, and
//! every default is filled in before anything runs so the resolved document
//! can be written next to the report.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use exceedmc_core::events::{BoundaryEvent, FirstPassageBoundary, GFunction, TailEvent};
use exceedmc_core::mixing::WeightRule;
use exceedmc_core::model::{presets, ModelSpec};
use exceedmc_core::{Emission, InitialLaw};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 20_240_501;
pub const DEFAULT_RUNS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by `estimate`; the other experiments have built-in models.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    pub experiment: Experiment,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; all cores when absent. Never changes an estimate.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: Output,
}

fn default_runs() -> u64 {
    DEFAULT_RUNS
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Table1 {
        #[serde(default = "table1_ns")]
        ns: Vec<usize>,
        #[serde(default = "table1_means")]
        means: Vec<f64>,
        /// Rates used in the mixture weights.
        #[serde(default = "table1_phi")]
        phi: Vec<f64>,
    },
    Table2 {
        #[serde(default = "table2_rows")]
        rows: Vec<BoundaryRow>,
        #[serde(default = "table2_b")]
        b: f64,
        #[serde(default)]
        spacing: Option<f64>,
        #[serde(default = "yes")]
        direct: bool,
    },
    Counterexample {
        #[serde(default = "counterexample_level")]
        level: f64,
        #[serde(default = "counterexample_ladder")]
        ladder: Vec<usize>,
    },
    Estimate {
        event: EventConfig,
        method: MethodConfig,
    },
    Verify {
        #[serde(default = "verify_thetas")]
        thetas: Vec<f64>,
        /// Horizon of the martingale checks.
        #[serde(default = "verify_horizon")]
        horizon: usize,
        /// Horizon of the unbiasedness identities.
        #[serde(default = "verify_identity_horizon")]
        identity_horizon: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryRow {
    pub c: f64,
    pub n0: usize,
    pub n1: usize,
}

fn yes() -> bool {
    true
}

pub fn table1_ns() -> Vec<usize> {
    vec![10, 20, 40, 60, 80, 100]
}

fn table1_means() -> Vec<f64> {
    vec![1.5, 2.7]
}

fn table1_phi() -> Vec<f64> {
    vec![0.120, 0.251]
}

pub fn table2_rows() -> Vec<BoundaryRow> {
    [(20.0, 5, 50), (25.0, 5, 50), (30.0, 5, 50), (35.0, 5, 50), (40.0, 10, 100), (50.0, 10, 100), (60.0, 10, 100), (70.0, 10, 100)]
        .into_iter()
        .map(|(c, n0, n1)| BoundaryRow { c, n0, n1 })
        .collect()
}

fn table2_b() -> f64 {
    7.0
}

fn counterexample_level() -> f64 {
    presets::SKEWED_LEVEL
}

pub fn counterexample_ladder() -> Vec<usize> {
    vec![8, 12, 16]
}

fn verify_thetas() -> Vec<f64> {
    vec![0.0, -0.507, 0.815]
}

fn verify_horizon() -> usize {
    8
}

fn verify_identity_horizon() -> usize {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EventConfig {
    Tail {
        g: GFunction,
        b: f64,
        n: usize,
    },
    Boundary {
        g: GFunction,
        c: f64,
        n0: usize,
        n1: usize,
    },
    FirstPassage {
        boundary: FirstPassageBoundary,
        c: f64,
        #[serde(default)]
        max_steps: Option<usize>,
    },
}

impl EventConfig {
    pub fn tail(&self) -> Option<TailEvent> {
        match self {
            EventConfig::Tail { g, b, n } => Some(TailEvent::new(g.clone(), *b, *n)),
            _ => None,
        }
    }

    pub fn boundary(&self) -> Option<BoundaryEvent> {
        match self {
            EventConfig::Boundary { g, c, n0, n1 } => Some(BoundaryEvent::new(g.clone(), *c, *n0, *n1)),
            _ => None,
        }
    }

    /// `n` for tail events, `c` otherwise.
    pub fn n_or_c(&self) -> f64 {
        match self {
            EventConfig::Tail { n, .. } => *n as f64,
            EventConfig::Boundary { c, .. } | EventConfig::FirstPassage { c, .. } => *c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridFlavor {
    TailGrid,
    BoundaryGrid,
    RegimeGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodConfig {
    Direct,
    SingleTilt {
        mu: Vec<f64>,
    },
    FiniteMixture {
        means: Vec<Vec<f64>>,
        weights: WeightRule,
    },
    GridMixture {
        flavor: GridFlavor,
        #[serde(default)]
        spacing: Option<f64>,
        /// Box for the tail grid.
        #[serde(default)]
        lower: Option<Vec<f64>>,
        #[serde(default)]
        upper: Option<Vec<f64>>,
        /// Outer level of the regime grid.
        #[serde(default)]
        b: Option<f64>,
        /// Boundary-grid parameters.
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        r: Option<f64>,
        #[serde(default)]
        eps0: Option<f64>,
        #[serde(default)]
        eps1: Option<f64>,
        #[serde(default)]
        eps1_tail: Option<f64>,
    },
    /// First passage only: tilts with `psi(theta) = 0`.
    ZeroCgf {
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg.resolved())
    }

    /// Checks that need more than the schema. Runs before any simulation.
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            bail!("runs must be positive");
        }
        if self.workers == Some(0) {
            bail!("workers must be positive");
        }
        if let Some(spec) = &self.model {
            spec.build().context("model block")?;
        }
        let builtin = self.builtin_model();
        if let (Some(given), Some(fixed)) = (&self.model, &builtin) {
            if given != fixed {
                bail!("table1 and table2 use their built-in models; drop the model block");
            }
        }
        match &self.experiment {
            Experiment::Table1 { ns, means, phi } => {
                if ns.is_empty() || ns.contains(&0) {
                    bail!("table1 needs positive horizons");
                }
                if means.len() != 2 || phi.len() != 2 {
                    bail!("table1 takes exactly two means and two rates");
                }
            }
            Experiment::Table2 { rows, b, .. } => {
                for r in rows {
                    if r.n0 == 0 || r.n0 > r.n1 || !(r.c > 0.0) {
                        bail!("table2 row {r:?} needs 1 <= n0 <= n1 and c > 0");
                    }
                    if *b < r.c / r.n0 as f64 {
                        bail!("b = {b} is below c/n0 for row {r:?}");
                    }
                }
            }
            Experiment::Counterexample { level, ladder } => {
                if !(*level > 0.0) || ladder.is_empty() || ladder.contains(&0) {
                    bail!("counterexample needs level > 0 and positive horizons");
                }
                if let Some(spec) = &self.model {
                    let m = spec.build()?;
                    if m.dim() != 1 || m.states() != 1 {
                        bail!("counterexample needs a one-dimensional i.i.d. model");
                    }
                }
            }
            Experiment::Estimate { event, method } => {
                if self.model.is_none() {
                    bail!("estimate needs a model block");
                }
                match (event, method) {
                    (EventConfig::FirstPassage { .. }, MethodConfig::GridMixture { .. }) => {
                        bail!("grid mixtures apply to tail and boundary events")
                    }
                    (EventConfig::Tail { .. } | EventConfig::Boundary { .. }, MethodConfig::ZeroCgf { .. }) => {
                        bail!("zero-cgf tilts apply to first-passage events")
                    }
                    (EventConfig::Tail { .. }, MethodConfig::GridMixture { flavor, .. }) if *flavor != GridFlavor::TailGrid => {
                        bail!("tail events take the tail-grid flavor")
                    }
                    (EventConfig::Boundary { .. }, MethodConfig::GridMixture { flavor: GridFlavor::TailGrid, .. }) => {
                        bail!("boundary events take the boundary-grid or regime-grid flavor")
                    }
                    _ => {}
                }
                if let (EventConfig::Tail { n, .. }, _) | (EventConfig::Boundary { n1: n, .. }, _) = (event, method) {
                    if *n == 0 {
                        bail!("event horizon must be positive");
                    }
                }
            }
            Experiment::Verify { horizon, identity_horizon, .. } => {
                if *horizon > 10 || *identity_horizon > 8 {
                    bail!("verify horizons are capped at 10 (martingale) and 8 (identities)");
                }
            }
        }
        Ok(())
    }

    fn builtin_model(&self) -> Option<ModelSpec> {
        match self.experiment {
            Experiment::Table1 { .. } | Experiment::Verify { .. } => Some(three_state_walk_spec()),
            Experiment::Table2 { .. } => Some(regime_switching_spec()),
            Experiment::Counterexample { .. } | Experiment::Estimate { .. } => None,
        }
    }

    /// Fills in the model block so the echoed config is complete.
    pub fn resolved(mut self) -> Self {
        if self.model.is_none() {
            self.model = self.builtin_model().or_else(|| match self.experiment {
                Experiment::Counterexample { .. } => Some(skewed_three_point_spec()),
                _ => None,
            });
        }
        self
    }

    pub fn engine_options(&self) -> exceedmc_core::estimators::EngineOptions {
        exceedmc_core::estimators::EngineOptions { workers: self.workers }
    }
}

/// The chain of the fixed-horizon example, as a model block.
pub fn three_state_walk_spec() -> ModelSpec {
    ModelSpec::MarkovAdditive {
        transition: presets::cyclic_transition(),
        emission: Emission::Deterministic {
            increments: vec![vec![vec![1.0], vec![2.0], vec![3.0]]; 3],
        },
        initial: InitialLaw::Stationary,
    }
}

/// The regime-switching Gaussian walk, as a model block.
pub fn regime_switching_spec() -> ModelSpec {
    let means = vec![vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
    ModelSpec::MarkovAdditive {
        transition: presets::cyclic_transition(),
        emission: Emission::Gaussian { means: vec![means; 3] },
        initial: InitialLaw::Stationary,
    }
}

/// The skewed three-point lattice, as a model block.
pub fn skewed_three_point_spec() -> ModelSpec {
    ModelSpec::IidLattice {
        points: vec![vec![-2.0], vec![0.0], vec![1.0]],
        probs: vec![0.28, 0.12, 0.6],
    }
}
