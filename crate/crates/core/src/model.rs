//! One interface over i.i.d. and Markov additive walks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::{cumulative, draw_index, IidFamily, IidModel, TiltPoint, TiltedIidSampler};
use crate::markov_additive::{
    Emission, MarkovAdditiveModel, PerronSolution, TiltCache, TiltedChainSampler, DEFAULT_PERRON_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelSpec {
    IidGaussian {
        mean: Vec<f64>,
    },
    IidLattice {
        points: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
    MarkovAdditive {
        transition: Vec<Vec<f64>>,
        emission: Emission,
        #[serde(default = "default_initial")]
        initial: crate::markov_additive::InitialLaw,
    },
}

fn default_initial() -> crate::markov_additive::InitialLaw {
    crate::markov_additive::InitialLaw::Stationary
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Iid(IidModel),
    Markov(MarkovAdditiveModel),
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        Ok(match self {
            ModelSpec::IidGaussian { mean } => Model::Iid(IidModel::gaussian(mean.clone())?),
            ModelSpec::IidLattice { points, probs } => Model::Iid(IidModel::lattice(points.clone(), probs.clone())?),
            ModelSpec::MarkovAdditive {
                transition,
                emission,
                initial,
            } => Model::Markov(MarkovAdditiveModel::new(transition.clone(), emission.clone(), *initial)?),
        })
    }
}

/// A tilted measure ready for sampling and likelihood-ratio evaluation.
#[derive(Debug, Clone)]
pub struct Tilt {
    pub point: TiltPoint,
    pub perron: Option<PerronSolution>,
    /// `ln r(x; theta)` per state; a single zero for i.i.d. models.
    pub log_r: Vec<f64>,
    sampler: TiltSampler,
}

#[derive(Debug, Clone)]
enum TiltSampler {
    Iid(TiltedIidSampler),
    Markov(TiltedChainSampler),
}

impl Tilt {
    pub fn theta(&self) -> &[f64] {
        &self.point.theta
    }

    pub fn psi(&self) -> f64 {
        self.point.psi
    }

    /// Mean increment under the tilted measure.
    pub fn drift(&self) -> &[f64] {
        match &self.perron {
            Some(p) => &p.drift,
            None => &self.point.mu,
        }
    }

    /// Draws one tilted step from `state`, writing the increment into `out`.
    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R, out: &mut [f64]) -> usize {
        match &self.sampler {
            TiltSampler::Iid(s) => {
                s.sample_into(rng, out);
                0
            }
            TiltSampler::Markov(s) => s.step(state, rng, out),
        }
    }
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Iid(m) => m.dim(),
            Model::Markov(m) => m.dim(),
        }
    }

    pub fn states(&self) -> usize {
        match self {
            Model::Iid(_) => 1,
            Model::Markov(m) => m.states(),
        }
    }

    /// Mean increment of the untilted walk (stationary drift for chains).
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Model::Iid(m) => m.mean(),
            Model::Markov(m) => m.untilted_drift(),
        }
    }

    pub fn initial_distribution(&self) -> Vec<f64> {
        match self {
            Model::Iid(_) => vec![1.0],
            Model::Markov(m) => m.initial_distribution(),
        }
    }

    /// Coordinate-wise range of attainable means, when bounded.
    pub fn mean_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let vectors: Vec<&[f64]> = match self {
            Model::Iid(m) => match &m.family {
                IidFamily::Lattice { points, .. } => points.iter().map(|p| p.as_slice()).collect(),
                IidFamily::Gaussian { .. } => return None,
            },
            Model::Markov(m) => match m.emission() {
                Emission::Deterministic { increments } => increments
                    .iter()
                    .enumerate()
                    .flat_map(|(x, row)| {
                        row.iter()
                            .enumerate()
                            .filter(move |(y, _)| m.transition()[x][*y] > 0.0)
                            .map(|(_, v)| v.as_slice())
                    })
                    .collect(),
                Emission::Gaussian { .. } => return None,
            },
        };
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for v in vectors {
            for j in 0..d {
                lo[j] = lo[j].min(v[j]);
                hi[j] = hi[j].max(v[j]);
            }
        }
        Some((lo, hi))
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Model::Iid(_) => 0,
            Model::Markov(m) => match m.initial() {
                crate::markov_additive::InitialLaw::State(x) => x,
                crate::markov_additive::InitialLaw::Stationary => draw_index(&cumulative(m.stationary()), rng),
            },
        }
    }

    fn wrap_iid(&self, m: &IidModel, point: TiltPoint) -> Result<Tilt> {
        let sampler = TiltSampler::Iid(m.sampler(&point.theta)?);
        Ok(Tilt {
            point,
            perron: None,
            log_r: vec![0.0],
            sampler,
        })
    }

    fn wrap_markov(m: &MarkovAdditiveModel, point: TiltPoint, perron: PerronSolution) -> Tilt {
        let sampler = TiltSampler::Markov(m.sampler(&perron));
        Tilt {
            log_r: perron.r.iter().map(|r| r.ln()).collect(),
            point,
            perron: Some(perron),
            sampler,
        }
    }

    pub fn tilt_for_mean(&self, mu: &[f64], tol: f64) -> Result<Tilt> {
        self.tilt_for_mean_cached(mu, tol, None)
    }

    pub fn tilt_for_mean_cached(&self, mu: &[f64], tol: f64, cache: Option<&mut TiltCache>) -> Result<Tilt> {
        match self {
            Model::Iid(m) => {
                let point = m.tilt_for_mean(mu, tol)?;
                self.wrap_iid(m, point)
            }
            Model::Markov(m) => {
                let t = m.tilt_for_mean_cached(mu, tol, cache)?;
                Ok(Self::wrap_markov(m, t.point, t.perron))
            }
        }
    }

    pub fn tilt_at(&self, theta: &[f64]) -> Result<Tilt> {
        match self {
            Model::Iid(m) => {
                let point = m.tilt_at(theta)?;
                self.wrap_iid(m, point)
            }
            Model::Markov(m) => {
                let t = m.tilt_at(theta)?;
                Ok(Self::wrap_markov(m, t.point, t.perron))
            }
        }
    }

    /// The untilted measure itself.
    pub fn untilted(&self) -> Result<Tilt> {
        self.tilt_at(&vec![0.0; self.dim()])
    }

    /// Cumulant generating function (log Perron root for chains).
    pub fn cgf(&self, theta: &[f64]) -> Result<f64> {
        match self {
            Model::Iid(m) => m.cgf(theta),
            Model::Markov(m) => Ok(m.perron(theta, DEFAULT_PERRON_TOL)?.psi),
        }
    }

    /// Possible one-step moves from `state` as `(next, probability, increment)`.
    /// Only defined when the increment law is discrete.
    pub fn transitions(&self, state: usize) -> Result<Vec<(usize, f64, Vec<f64>)>> {
        match self {
            Model::Iid(m) => match &m.family {
                IidFamily::Lattice { points, probs } => Ok(points
                    .iter()
                    .zip(probs)
                    .map(|(x, p)| (0, *p, x.clone()))
                    .collect()),
                IidFamily::Gaussian { .. } => Err(Error::Refused("Gaussian increments cannot be enumerated".into())),
            },
            Model::Markov(m) => match m.emission() {
                Emission::Deterministic { increments } => Ok((0..m.states())
                    .filter(|y| m.transition()[state][*y] > 0.0)
                    .map(|y| (y, m.transition()[state][y], increments[state][y].clone()))
                    .collect()),
                Emission::Gaussian { .. } => Err(Error::Refused("Gaussian emissions cannot be enumerated".into())),
            },
        }
    }

    /// Probabilities of the moves listed by [`Model::transitions`] under `tilt`,
    /// taken from the tilted transition law rather than the likelihood ratio.
    pub fn tilted_transition_probs(&self, tilt: &Tilt, state: usize) -> Result<Vec<f64>> {
        match self {
            Model::Iid(m) => m.tilted_pmf(tilt.theta()),
            Model::Markov(m) => {
                let perron = tilt
                    .perron
                    .as_ref()
                    .ok_or_else(|| Error::Consistency("Markov tilt without eigen-solution".into()))?;
                Ok((0..m.states())
                    .filter(|y| m.transition()[state][*y] > 0.0)
                    .map(|y| perron.tilted_transition[state][y])
                    .collect())
            }
        }
    }
}

/// Models used by the bundled experiments.
pub mod presets {
    use super::*;
    use crate::markov_additive::InitialLaw;

    /// Three-state chain with `p_xx = 0.5`, `p_12 = p_23 = p_31 = 0.3`,
    /// `p_13 = p_21 = p_32 = 0.2`.
    pub fn cyclic_transition() -> Vec<Vec<f64>> {
        vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.5, 0.3], vec![0.3, 0.2, 0.5]]
    }

    /// The cyclic chain with increment equal to the new state label (1, 2 or 3),
    /// started from stationarity.
    pub fn three_state_walk() -> MarkovAdditiveModel {
        MarkovAdditiveModel::with_destination_increments(
            cyclic_transition(),
            vec![vec![1.0], vec![2.0], vec![3.0]],
            InitialLaw::Stationary,
        )
        .expect("valid preset")
    }

    /// Three-dimensional standard Gaussian walk whose first coordinate is
    /// shifted by `X_n - 2` for the cyclic chain `X_n`.
    pub fn regime_switching_gaussian() -> MarkovAdditiveModel {
        MarkovAdditiveModel::gaussian_by_destination(
            cyclic_transition(),
            vec![vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            InitialLaw::Stationary,
        )
        .expect("valid preset")
    }

    /// Asymmetric three-point lattice used to show single-tilt variance blowup
    /// for `|S_n| >= n / 2`.
    pub fn skewed_three_point() -> IidModel {
        IidModel::scalar_lattice(&[-2.0, 0.0, 1.0], &[0.28, 0.12, 0.6]).expect("valid preset")
    }

    pub const SKEWED_LEVEL: f64 = 0.5;
}
