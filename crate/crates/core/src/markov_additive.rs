//! Finite-state Markov additive models.
//!
//! The chain `X_n` moves by a row-stochastic matrix `P` and each transition
//! `x -> y` emits an increment that is either deterministic, `delta(x, y)`,
//! or Gaussian with mean `m(x, y)` and identity covariance. Tilting by `theta`
//! gives the kernel `P(x, y) E[exp(theta' xi) | x -> y]`, whose Perron root is
//! `exp(psi(theta))`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::{cumulative, dot, draw_index, IidModel, TiltPoint, DEFAULT_MAX_ITER};

pub const DEFAULT_PERRON_TOL: f64 = 1e-13;
pub const DEFAULT_PERRON_MAX_ITER: usize = 100_000;
pub const DEFAULT_FD_STEP: f64 = 1e-6;

const BRACKET_START: f64 = 8.0;
const BRACKET_LIMIT: f64 = 512.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Emission {
    /// `increments[x][y]` is emitted on every `x -> y` transition.
    Deterministic { increments: Vec<Vec<Vec<f64>>> },
    /// `N(means[x][y], I)` is emitted on an `x -> y` transition.
    Gaussian { means: Vec<Vec<Vec<f64>>> },
}

impl Emission {
    fn table(&self) -> &Vec<Vec<Vec<f64>>> {
        match self {
            Emission::Deterministic { increments } => increments,
            Emission::Gaussian { means } => means,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Emission::Gaussian { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    State(usize),
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovAdditiveModel {
    transition: Vec<Vec<f64>>,
    emission: Emission,
    initial: InitialLaw,
    stationary: Vec<f64>,
    dim: usize,
    /// `Some(c)` for coordinates whose emission mean is the constant `c` on
    /// every possible transition.
    constant_coords: Vec<Option<f64>>,
}

/// Perron eigen-solution of the kernel tilted by `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronSolution {
    pub theta: Vec<f64>,
    pub psi: f64,
    /// Right eigenvector, normalised so that `sum_x pi(x) r(x) = 1` for the
    /// untilted stationary law `pi`.
    pub r: Vec<f64>,
    /// Tilted transition matrix.
    pub tilted_transition: Vec<Vec<f64>>,
    /// Stationary law of the tilted transition matrix.
    pub tilted_stationary: Vec<f64>,
    /// Mean increment under the tilted chain in stationarity.
    pub drift: Vec<f64>,
}

/// Tilt point together with the eigen-solution at its natural parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTilt {
    pub point: TiltPoint,
    pub perron: PerronSolution,
}

/// Reduced eigen-solutions keyed by the value of the single non-constant
/// coordinate; used while enumerating large grids.
pub type TiltCache = HashMap<u64, PerronSolution>;

fn is_primitive(p: &[Vec<f64>]) -> bool {
    let k = p.len();
    let adj: Vec<Vec<bool>> = p.iter().map(|row| row.iter().map(|v| *v > 0.0).collect()).collect();
    let mut power = adj.clone();
    for _ in 0..(k * k).max(1) {
        if power.iter().all(|row| row.iter().all(|b| *b)) {
            return true;
        }
        let mut next = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = (0..k).any(|l| power[i][l] && adj[l][j]);
            }
        }
        power = next;
    }
    power.iter().all(|row| row.iter().all(|b| *b))
}

/// Left Perron vector of a row-stochastic matrix, normalised to sum 1.
pub fn stationary(p: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    let k = p.len();
    let mut pi = vec![1.0 / k as f64; k];
    let mut diff = f64::INFINITY;
    for _ in 0..DEFAULT_PERRON_MAX_ITER {
        let mut next = vec![0.0; k];
        for (x, row) in p.iter().enumerate() {
            for (y, pxy) in row.iter().enumerate() {
                next[y] += pi[x] * pxy;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        diff = next.iter().zip(&pi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        pi = next;
        if diff < tol {
            return Ok(pi);
        }
    }
    Err(Error::IterationCap {
        what: "stationary distribution",
        iterations: DEFAULT_PERRON_MAX_ITER,
        residual: diff,
    })
}

impl MarkovAdditiveModel {
    pub fn new(transition: Vec<Vec<f64>>, emission: Emission, initial: InitialLaw) -> Result<Self> {
        let k = transition.len();
        if k == 0 {
            return Err(Error::InvalidModel("empty state space".into()));
        }
        for (x, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidModel(format!("transition row {x} has wrong length")));
            }
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidModel(format!("transition row {x} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!("transition row {x} sums to {s}")));
            }
        }
        if !is_primitive(&transition) {
            return Err(Error::InvalidModel("chain is not irreducible and aperiodic".into()));
        }
        let table = emission.table();
        if table.len() != k || table.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidModel("emission table must be K x K".into()));
        }
        let dim = table[0][0].len();
        if dim == 0 || table.iter().flatten().any(|v| v.len() != dim || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidModel("emission vectors must share a positive dimension".into()));
        }
        if let InitialLaw::State(x0) = initial {
            if x0 >= k {
                return Err(Error::InvalidModel(format!("initial state {x0} out of range")));
            }
        }
        let constant_coords = (0..dim)
            .map(|j| {
                let mut vals = (0..k)
                    .flat_map(|x| (0..k).map(move |y| (x, y)))
                    .filter(|&(x, y)| transition[x][y] > 0.0)
                    .map(|(x, y)| table[x][y][j]);
                let first = vals.next()?;
                vals.all(|v| v == first).then_some(first)
            })
            .collect();
        let stationary = stationary(&transition, 1e-15)?;
        Ok(Self {
            transition,
            emission,
            initial,
            stationary,
            dim,
            constant_coords,
        })
    }

    /// Deterministic emission that depends only on the destination state.
    pub fn with_destination_increments(
        transition: Vec<Vec<f64>>,
        by_destination: Vec<Vec<f64>>,
        initial: InitialLaw,
    ) -> Result<Self> {
        let k = transition.len();
        let increments = vec![by_destination; k];
        Self::new(transition, Emission::Deterministic { increments }, initial)
    }

    /// Gaussian emission whose mean depends only on the destination state.
    pub fn gaussian_by_destination(
        transition: Vec<Vec<f64>>,
        means_by_destination: Vec<Vec<f64>>,
        initial: InitialLaw,
    ) -> Result<Self> {
        let k = transition.len();
        let means = vec![means_by_destination; k];
        Self::new(transition, Emission::Gaussian { means }, initial)
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission(&self) -> &Emission {
        &self.emission
    }

    pub fn initial(&self) -> InitialLaw {
        self.initial
    }

    /// Stationary law of the untilted chain.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn initial_distribution(&self) -> Vec<f64> {
        match self.initial {
            InitialLaw::State(x0) => {
                let mut v = vec![0.0; self.states()];
                v[x0] = 1.0;
                v
            }
            InitialLaw::Stationary => self.stationary.clone(),
        }
    }

    /// Mean of the emission on `x -> y` (the increment itself when deterministic).
    pub fn emission_mean(&self, x: usize, y: usize) -> &[f64] {
        &self.emission.table()[x][y]
    }

    /// Drift of the untilted chain in stationarity.
    pub fn untilted_drift(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for x in 0..self.states() {
            for y in 0..self.states() {
                let w = self.stationary[x] * self.transition[x][y];
                m.iter_mut().zip(self.emission_mean(x, y)).for_each(|(a, b)| *a += w * b);
            }
        }
        m
    }

    /// A one-state model is an i.i.d. walk.
    pub fn as_iid(&self) -> Option<IidModel> {
        if self.states() != 1 {
            return None;
        }
        let v = self.emission_mean(0, 0).to_vec();
        match self.emission {
            Emission::Gaussian { .. } => IidModel::gaussian(v).ok(),
            Emission::Deterministic { .. } => IidModel::lattice(vec![v], vec![1.0]).ok(),
        }
    }

    fn log_kernel_entry(&self, theta: &[f64], x: usize, y: usize) -> f64 {
        let p = self.transition[x][y];
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut e = dot(theta, self.emission_mean(x, y));
        if self.emission.is_gaussian() {
            e += 0.5 * dot(theta, theta);
        }
        p.ln() + e
    }

    /// `P(x, y) E[exp(theta' xi) | x -> y]`.
    pub fn tilted_kernel(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let k = self.states();
        (0..k)
            .map(|x| (0..k).map(|y| self.log_kernel_entry(theta, x, y).exp()).collect())
            .collect()
    }

    /// Perron root and eigenvector of the tilted kernel by power iteration.
    pub fn perron(&self, theta: &[f64], tol: f64) -> Result<PerronSolution> {
        if theta.len() != self.dim {
            return Err(Error::OutOfDomain { theta: theta.to_vec() });
        }
        let k = self.states();
        if theta.iter().all(|t| *t == 0.0) {
            return Ok(PerronSolution {
                theta: theta.to_vec(),
                psi: 0.0,
                r: vec![1.0; k],
                tilted_transition: self.transition.clone(),
                tilted_stationary: self.stationary.clone(),
                drift: self.untilted_drift(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::OutOfDomain { theta: theta.to_vec() });
        }
        let logs: Vec<Vec<f64>> = (0..k)
            .map(|x| (0..k).map(|y| self.log_kernel_entry(theta, x, y)).collect())
            .collect();
        let shift = logs.iter().flatten().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let m: Vec<Vec<f64>> = logs
            .iter()
            .map(|row| row.iter().map(|v| (v - shift).exp()).collect())
            .collect();

        let apply = |v: &[f64]| -> Vec<f64> { m.iter().map(|row| dot(row, v)).collect() };
        let mut v = vec![1.0; k];
        let mut lambda = f64::NAN;
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..DEFAULT_PERRON_MAX_ITER {
            let w = apply(&v);
            let norm = w.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Consistency(format!("tilted kernel degenerate at theta {theta:?}")));
            }
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let dv = next.iter().zip(&v).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            let dl = (norm - lambda).abs() / norm;
            residual = dv.max(if dl.is_nan() { f64::INFINITY } else { dl });
            v = next;
            lambda = norm;
            if residual < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::IterationCap {
                what: "perron power iteration",
                iterations: DEFAULT_PERRON_MAX_ITER,
                residual,
            });
        }
        // Rayleigh-style refinement of the root from the converged vector.
        let w = apply(&v);
        let lambda = dot(&w, &v) / dot(&v, &v);
        let psi = lambda.ln() + shift;

        let scale: f64 = dot(&self.stationary, &v);
        let r: Vec<f64> = v.iter().map(|x| x / scale).collect();
        let tilted_transition: Vec<Vec<f64>> = (0..k)
            .map(|x| {
                let row: Vec<f64> = (0..k).map(|y| m[x][y] * r[y] / (lambda * r[x])).collect();
                let s: f64 = row.iter().sum();
                row.iter().map(|p| p / s).collect()
            })
            .collect();
        let tilted_stationary = stationary(&tilted_transition, 1e-15)?;
        let drift = self.drift_under(theta, &tilted_transition, &tilted_stationary);
        Ok(PerronSolution {
            theta: theta.to_vec(),
            psi,
            r,
            tilted_transition,
            tilted_stationary,
            drift,
        })
    }

    fn drift_under(&self, theta: &[f64], pt: &[Vec<f64>], pi: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for x in 0..self.states() {
            for y in 0..self.states() {
                let w = pi[x] * pt[x][y];
                if w == 0.0 {
                    continue;
                }
                for (j, mj) in m.iter_mut().enumerate() {
                    let shift = if self.emission.is_gaussian() { theta[j] } else { 0.0 };
                    *mj += w * (self.emission_mean(x, y)[j] + shift);
                }
            }
        }
        m
    }

    /// Gradient of psi by central differences, checked against the tilted drift.
    pub fn markov_cgf_gradient(&self, theta: &[f64], h: f64) -> Result<Vec<f64>> {
        let base = self.perron(theta, DEFAULT_PERRON_TOL)?;
        let mut grad = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[j] += h;
            down[j] -= h;
            let fd = (self.perron(&up, DEFAULT_PERRON_TOL)?.psi - self.perron(&down, DEFAULT_PERRON_TOL)?.psi) / (2.0 * h);
            grad.push(fd);
        }
        let gap = grad
            .iter()
            .zip(&base.drift)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if gap > 1e-4 {
            return Err(Error::Consistency(format!(
                "finite-difference gradient {grad:?} disagrees with tilted drift {:?}",
                base.drift
            )));
        }
        Ok(grad)
    }

    fn active_coords(&self) -> Vec<usize> {
        (0..self.dim).filter(|j| self.constant_coords[*j].is_none()).collect()
    }

    /// Fills the natural parameter on coordinates whose emission is constant.
    fn constant_theta(&self, mu: &[f64], tol: f64) -> Result<Vec<f64>> {
        let mut theta = vec![0.0; self.dim];
        for (j, c) in self.constant_coords.iter().enumerate() {
            if let Some(c) = c {
                if self.emission.is_gaussian() {
                    theta[j] = mu[j] - c;
                } else if (mu[j] - c).abs() > tol {
                    return Err(Error::Unattainable {
                        mu: mu.to_vec(),
                        detail: format!("coordinate {j} is the constant {c}"),
                    });
                }
            }
        }
        Ok(theta)
    }

    /// Lifts a solution computed with zero parameter on the constant
    /// coordinates to the full parameter. Only the constant coordinates of
    /// `full_theta` may differ from `reduced.theta`.
    fn lift(&self, reduced: &PerronSolution, full_theta: &[f64]) -> PerronSolution {
        let mut sol = reduced.clone();
        for (j, c) in self.constant_coords.iter().enumerate() {
            if let Some(c) = c {
                let t = full_theta[j];
                sol.psi += t * c;
                sol.drift[j] = *c;
                if self.emission.is_gaussian() {
                    sol.psi += 0.5 * t * t;
                    sol.drift[j] += t;
                }
            }
        }
        sol.theta = full_theta.to_vec();
        sol
    }

    /// Solves grad psi(theta) = mu.
    ///
    /// When at most one coordinate of the emission varies across transitions
    /// the other coordinates are solved in closed form and the remaining one
    /// by bisection, which is safe because psi is convex. Otherwise Newton on
    /// the drift with a finite-difference Jacobian.
    pub fn tilt_for_mean(&self, mu: &[f64], tol: f64) -> Result<MarkovTilt> {
        self.tilt_for_mean_cached(mu, tol, None)
    }

    pub fn tilt_for_mean_cached(&self, mu: &[f64], tol: f64, cache: Option<&mut TiltCache>) -> Result<MarkovTilt> {
        if mu.len() != self.dim {
            return Err(Error::InvalidModel(format!(
                "mean has dimension {}, model has {}",
                mu.len(),
                self.dim
            )));
        }
        let active = self.active_coords();
        let mut theta = self.constant_theta(mu, tol)?;
        let perron = match active.as_slice() {
            [] => {
                let reduced = self.perron(&vec![0.0; self.dim], DEFAULT_PERRON_TOL)?;
                self.lift(&reduced, &theta)
            }
            [a] => {
                let a = *a;
                let key = mu[a].to_bits();
                let cached = cache.as_ref().and_then(|c| c.get(&key)).cloned();
                let reduced = match cached {
                    Some(sol) => sol,
                    None => {
                        let sol = self.bisect_coordinate(a, mu, tol)?;
                        if let Some(c) = cache {
                            c.insert(key, sol.clone());
                        }
                        sol
                    }
                };
                theta[a] = reduced.theta[a];
                self.lift(&reduced, &theta)
            }
            _ => self.newton_tilt(mu, tol, theta)?,
        };
        let psi = perron.psi;
        let phi = (dot(&perron.theta, mu) - psi).max(0.0);
        Ok(MarkovTilt {
            point: TiltPoint {
                mu: mu.to_vec(),
                theta: perron.theta.clone(),
                psi,
                phi,
            },
            perron,
        })
    }

    fn bisect_coordinate(&self, a: usize, mu: &[f64], tol: f64) -> Result<PerronSolution> {
        let at = |t: f64| -> Result<PerronSolution> {
            let mut theta = vec![0.0; self.dim];
            theta[a] = t;
            let mut sol = self.perron(&theta, DEFAULT_PERRON_TOL)?;
            // The constant coordinates are lifted later; keep the active part only.
            for (j, c) in self.constant_coords.iter().enumerate() {
                if c.is_some() {
                    sol.drift[j] = f64::NAN;
                }
            }
            Ok(sol)
        };
        let target = mu[a];
        let f = |sol: &PerronSolution| sol.drift[a] - target;

        let zero = at(0.0)?;
        if f(&zero).abs() <= tol {
            return Ok(zero);
        }
        let (mut lo, mut hi) = (-BRACKET_START, BRACKET_START);
        let mut f_lo = f(&at(lo)?);
        let mut f_hi = f(&at(hi)?);
        while f_lo > 0.0 || f_hi < 0.0 {
            if hi >= BRACKET_LIMIT {
                return Err(Error::Unattainable {
                    mu: mu.to_vec(),
                    detail: format!("no sign change of the drift equation on [-{BRACKET_LIMIT}, {BRACKET_LIMIT}]"),
                });
            }
            if f_lo > 0.0 {
                lo *= 2.0;
                f_lo = f(&at(lo)?);
            }
            if f_hi < 0.0 {
                hi *= 2.0;
                f_hi = f(&at(hi)?);
            }
        }
        let mut best: Option<PerronSolution> = None;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let sol = at(mid)?;
            let fm = f(&sol);
            let done = fm.abs() <= tol || (hi - lo) < 1e-15 * (1.0 + mid.abs());
            if fm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            best = Some(sol);
            if done {
                break;
            }
        }
        let sol = best.expect("at least one bisection step");
        if f(&sol).abs() > tol.max(1e-9) {
            return Err(Error::NonConvergence {
                mu: mu.to_vec(),
                detail: format!("bisection residual {:e}", f(&sol).abs()),
            });
        }
        Ok(sol)
    }

    fn newton_tilt(&self, mu: &[f64], tol: f64, mut theta: Vec<f64>) -> Result<PerronSolution> {
        let d = self.dim;
        let residual = |sol: &PerronSolution| -> Vec<f64> { sol.drift.iter().zip(mu).map(|(a, b)| a - b).collect() };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut sol = self.perron(&theta, DEFAULT_PERRON_TOL)?;
        for _ in 0..DEFAULT_MAX_ITER {
            let res = residual(&sol);
            if norm(&res) <= tol {
                return Ok(sol);
            }
            let mut jac = nalgebra::DMatrix::zeros(d, d);
            for j in 0..d {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += DEFAULT_FD_STEP;
                down[j] -= DEFAULT_FD_STEP;
                let du = self.perron(&up, DEFAULT_PERRON_TOL)?.drift;
                let dd = self.perron(&down, DEFAULT_PERRON_TOL)?.drift;
                for i in 0..d {
                    jac[(i, j)] = (du[i] - dd[i]) / (2.0 * DEFAULT_FD_STEP);
                }
            }
            let rhs = nalgebra::DVector::from_iterator(d, res.iter().map(|r| -r));
            let step = jac.lu().solve(&rhs).ok_or_else(|| Error::NonConvergence {
                mu: mu.to_vec(),
                detail: "singular drift Jacobian".into(),
            })?;
            let mut scale = 1.0;
            let current = norm(&res);
            loop {
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
                let trial_sol = self.perron(&trial, DEFAULT_PERRON_TOL)?;
                if norm(&residual(&trial_sol)) < current || scale < 1e-6 {
                    theta = trial;
                    sol = trial_sol;
                    break;
                }
                scale *= 0.5;
            }
            if norm(&theta) > BRACKET_LIMIT {
                return Err(Error::Unattainable {
                    mu: mu.to_vec(),
                    detail: "natural parameter diverges".into(),
                });
            }
        }
        Err(Error::NonConvergence {
            mu: mu.to_vec(),
            detail: format!("Newton iteration cap reached, residual {:e}", norm(&residual(&sol))),
        })
    }

    /// Tilt point at a given natural parameter.
    pub fn tilt_at(&self, theta: &[f64]) -> Result<MarkovTilt> {
        let perron = self.perron(theta, DEFAULT_PERRON_TOL)?;
        let mu = perron.drift.clone();
        let phi = (dot(theta, &mu) - perron.psi).max(0.0);
        Ok(MarkovTilt {
            point: TiltPoint {
                mu,
                theta: theta.to_vec(),
                psi: perron.psi,
                phi,
            },
            perron,
        })
    }

    pub fn sampler(&self, perron: &PerronSolution) -> TiltedChainSampler {
        let k = self.states();
        let gaussian = self.emission.is_gaussian();
        let increments = (0..k)
            .map(|x| {
                (0..k)
                    .map(|y| {
                        self.emission_mean(x, y)
                            .iter()
                            .zip(&perron.theta)
                            .map(|(m, t)| if gaussian { m + t } else { *m })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        TiltedChainSampler {
            cumulative: perron.tilted_transition.iter().map(|row| cumulative(row)).collect(),
            increments,
            gaussian,
        }
    }

    /// One tilted transition from `state`.
    pub fn sample_step_tilted<R: Rng + ?Sized>(
        &self,
        perron: &PerronSolution,
        state: usize,
        rng: &mut R,
    ) -> (usize, Vec<f64>) {
        let mut out = vec![0.0; self.dim];
        let next = self.sampler(perron).step(state, rng, &mut out);
        (next, out)
    }
}

/// Precomputed transition tables for one tilt.
#[derive(Debug, Clone)]
pub struct TiltedChainSampler {
    cumulative: Vec<Vec<f64>>,
    /// Emission mean, already shifted by theta for Gaussian emissions.
    increments: Vec<Vec<Vec<f64>>>,
    gaussian: bool,
}

impl TiltedChainSampler {
    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R, out: &mut [f64]) -> usize {
        let next = draw_index(&self.cumulative[state], rng);
        let base = &self.increments[state][next];
        if self.gaussian {
            for (o, m) in out.iter_mut().zip(base) {
                let e: f64 = rng.sample(StandardNormal);
                *o = m + e;
            }
        } else {
            out.copy_from_slice(base);
        }
        next
    }
}
