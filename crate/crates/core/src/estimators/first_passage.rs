use std::collections::BTreeMap;

use super::{engine, EngineOptions, EstimateReport, EventSpec};
use crate::error::{Error, Result};
use crate::events::FirstPassageBoundary;
use crate::exp_family::dot;
use crate::mixing::{MixtureFlavor, MixtureSpec};
use crate::model::{Model, Tilt};

const MIN_MAX_STEPS: usize = 100;
const ROOT_BRACKET_LIMIT: f64 = 1e3;

/// The positive root `t*` of `t -> psi(t u)`, returned as the tilt at
/// `theta* = t* u`. Requires a negative drift along `u`.
pub fn solve_zero_cgf(model: &Model, direction: &[f64]) -> Result<Tilt> {
    if direction.len() != model.dim() {
        return Err(Error::Config("direction dimension does not match the model".into()));
    }
    let norm = dot(direction, direction).sqrt();
    let u: Vec<f64> = direction.iter().map(|x| x / norm).collect();
    let no_root = || Error::NoPositiveRoot { direction: u.clone() };
    if dot(&model.mean(), &u) >= 0.0 {
        return Err(no_root());
    }
    let psi = |t: f64| -> Result<f64> { model.cgf(&u.iter().map(|x| t * x).collect::<Vec<_>>()) };
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        match psi(hi) {
            Ok(v) if v > 0.0 => break,
            Ok(_) => {
                lo = hi;
                hi *= 2.0;
            }
            Err(_) => return Err(no_root()),
        }
        if hi > ROOT_BRACKET_LIMIT {
            return Err(no_root());
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = psi(mid)?;
        if v.abs() <= 1e-14 || hi - lo < 1e-15 * mid {
            lo = mid;
            hi = mid;
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let theta: Vec<f64> = u.iter().map(|x| t * x).collect();
    let tilt = model.tilt_at(&theta)?;
    if tilt.psi().abs() > 1e-10 {
        return Err(Error::NonConvergence {
            mu: tilt.point.mu.clone(),
            detail: format!("psi(theta*) = {:e}", tilt.psi()),
        });
    }
    Ok(tilt)
}

/// Proposal for a first-passage target: the zero-cgf tilt, or for the
/// max-coordinate target one such tilt per coordinate mixed with `weights`
/// (equal when absent).
pub fn first_passage_mixture(model: &Model, boundary: &FirstPassageBoundary, weights: Option<&[f64]>) -> Result<MixtureSpec> {
    let tilts = boundary
        .directions(model.dim())
        .iter()
        .map(|u| solve_zero_cgf(model, u))
        .collect::<Result<Vec<_>>>()?;
    let k = tilts.len();
    let w: Vec<f64> = match weights {
        Some(w) if w.len() == k => w.to_vec(),
        Some(w) => {
            return Err(Error::Config(format!("{} weights given for {k} tilts", w.len())));
        }
        None => vec![1.0 / k as f64; k],
    };
    MixtureSpec::from_tilts(MixtureFlavor::Finite, BTreeMap::new(), tilts.into_iter().zip(w).collect())
}

/// `ceil(10 c / drift)` with `drift` the smallest tilted drift towards the
/// boundary over the mixture components; at least 100 steps.
pub fn default_max_steps(mixture: &MixtureSpec, boundary: &FirstPassageBoundary, c: f64) -> usize {
    let dim = mixture.tilt(0).theta().len();
    let dirs = boundary.directions(dim);
    let drift = mixture
        .components()
        .iter()
        .map(|comp| {
            dirs.iter()
                .map(|u| dot(comp.tilt.drift(), u))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    if drift > 0.0 {
        ((10.0 * c / drift).ceil() as usize).max(MIN_MAX_STEPS)
    } else {
        // crossing is not certain under the proposal; truncations will show it
        (10.0 * c.abs()).ceil() as usize + 10 * MIN_MAX_STEPS
    }
}

/// Estimate of `P{ the walk reaches the boundary at level c }`. Runs that
/// have not crossed after `max_steps` contribute zero and are counted as
/// truncations.
pub fn estimate_first_passage(
    model: &Model,
    mixture: &MixtureSpec,
    boundary: &FirstPassageBoundary,
    c: f64,
    max_steps: Option<usize>,
    m: u64,
    seed: u64,
    opts: EngineOptions,
) -> Result<EstimateReport> {
    let max_steps = max_steps.unwrap_or_else(|| default_max_steps(mixture, boundary, c));
    let event = EventSpec::FirstPassage {
        boundary: boundary.clone(),
        c,
        max_steps,
    };
    let method = if mixture.len() == 1 {
        "zero-cgf-tilt"
    } else {
        "zero-cgf-mixture"
    };
    engine::estimate(model, mixture, &event, m, seed, opts, method.into())
}
