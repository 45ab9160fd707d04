use super::EventSpec;
use crate::error::{Error, Result};
use crate::mixing::MixtureSpec;
use crate::model::Model;
use crate::rng::CompensatedSum;

pub const DEFAULT_ORACLE_HORIZON: usize = 12;
pub const MAX_ORACLE_PATHS: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// `P(A)` by exhaustive enumeration.
    pub probability: f64,
    /// `sum over paths of Q(path) L(path) 1_A(path)` when a mixture is given,
    /// with `Q` built from the tilted transition laws step by step and `L`
    /// from the closed-form likelihood ratio.
    pub importance_identity: Option<f64>,
    pub paths: u64,
}

struct Walker<'a> {
    model: &'a Model,
    event: &'a EventSpec,
    mixture: Option<&'a MixtureSpec>,
    moves: Vec<Vec<(usize, f64, Vec<f64>)>>,
    /// `tilted[k][x]` aligned with `moves[x]`.
    tilted: Vec<Vec<Vec<f64>>>,
    prob: CompensatedSum,
    identity: CompensatedSum,
    paths: u64,
}

impl Walker<'_> {
    fn visit(&mut self, x0: usize, x: usize, t: usize, s: &mut [f64], p: f64, q: &mut Vec<f64>) -> Result<()> {
        let (done, hit) = match self.event {
            EventSpec::Tail(e) => (t == e.n, t == e.n && e.hit(s)),
            EventSpec::Boundary(e) => {
                let crossed = t > 0 && e.crossed(s, t);
                (crossed || t == e.n1, crossed)
            }
            EventSpec::FirstPassage { boundary, c, max_steps } => {
                let crossed = t > 0 && boundary.crossed(s, *c);
                (crossed || t == *max_steps, crossed)
            }
        };
        if done {
            self.paths += 1;
            if hit {
                self.prob.add(p);
                if let Some(mix) = self.mixture {
                    let q_mix: f64 = mix.components().iter().zip(q.iter()).map(|(c, qk)| c.weight * qk).sum();
                    let l = (-mix.log_inverse_likelihood_ratio(s, t, x, x0)?).exp();
                    self.identity.add(q_mix * l);
                }
            }
            return Ok(());
        }
        for i in 0..self.moves[x].len() {
            let (y, py, ref xi) = self.moves[x][i];
            let xi = xi.clone();
            let saved = q.clone();
            for (k, qk) in q.iter_mut().enumerate() {
                *qk *= self.tilted[k][x][i];
            }
            let mut next: Vec<f64> = s.iter().zip(&xi).map(|(a, b)| a + b).collect();
            self.visit(x0, y, t + 1, &mut next, p * py, q)?;
            *q = saved;
        }
        Ok(())
    }
}

/// Exhaustive enumeration of all paths up to the event horizon.
pub fn exact_probability_oracle(
    model: &Model,
    event: &EventSpec,
    mixture: Option<&MixtureSpec>,
    horizon_cap: usize,
) -> Result<OracleResult> {
    let horizon = event.horizon();
    if horizon > horizon_cap {
        return Err(Error::Refused(format!("horizon {horizon} exceeds the cap {horizon_cap}")));
    }
    let states = model.states();
    let moves = (0..states).map(|x| model.transitions(x)).collect::<Result<Vec<_>>>()?;
    let branching = moves.iter().map(|m| m.len()).max().unwrap_or(1) as f64;
    let bound = states as f64 * branching.powi(horizon as i32);
    if bound > MAX_ORACLE_PATHS {
        return Err(Error::Refused(format!("up to {bound:e} paths, limit {MAX_ORACLE_PATHS:e}")));
    }
    let tilted = match mixture {
        Some(mix) => mix
            .components()
            .iter()
            .map(|c| (0..states).map(|x| model.tilted_transition_probs(&c.tilt, x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let mut w = Walker {
        model,
        event,
        mixture,
        moves,
        tilted,
        prob: CompensatedSum::default(),
        identity: CompensatedSum::default(),
        paths: 0,
    };
    let init = model.initial_distribution();
    for (x0, p0) in init.iter().enumerate() {
        if *p0 == 0.0 {
            continue;
        }
        let mut s = vec![0.0; w.model.dim()];
        let mut q = vec![*p0; mixture.map_or(0, |m| m.len())];
        w.visit(x0, x0, 0, &mut s, *p0, &mut q)?;
    }
    Ok(OracleResult {
        probability: w.prob.value(),
        importance_identity: mixture.map(|_| w.identity.value()),
        paths: w.paths,
    })
}
