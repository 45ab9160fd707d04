//! Exceedance events and stopping rules.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exp_family::dot;

/// Relative slack applied to every threshold comparison, so that lattice
/// sums landing exactly on a boundary count as hits despite rounding.
pub const THRESHOLD_SLACK: f64 = 1e-12;

pub(crate) fn at_least(value: f64, threshold: f64) -> bool {
    value >= threshold - THRESHOLD_SLACK * threshold.abs().max(1.0)
}

/// A user function of the mean, not serialisable.
#[derive(Clone)]
pub struct CustomG(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl fmt::Debug for CustomG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomG(..)")
    }
}

/// The function `g` in `g(S_n / n) >= b` and `n g(S_n / n) >= c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GFunction {
    /// First coordinate.
    Identity,
    /// `u' mu`.
    Linear { u: Vec<f64> },
    /// `||mu - center||^2`.
    SquaredDistance { center: Vec<f64> },
    /// `||mu||^2`.
    NormSquared,
    /// `||mu||`.
    Norm,
    /// `max_j mu_j`.
    MaxCoordinate,
    #[serde(skip)]
    Custom(CustomG),
}

impl GFunction {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        GFunction::Custom(CustomG(Arc::new(f)))
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        match self {
            GFunction::Identity => mu[0],
            GFunction::Linear { u } => dot(u, mu),
            GFunction::SquaredDistance { center } => mu.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum(),
            GFunction::NormSquared => dot(mu, mu),
            GFunction::Norm => dot(mu, mu).sqrt(),
            GFunction::MaxCoordinate => mu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            GFunction::Custom(f) => (f.0)(mu),
        }
    }

    /// `n g(s / n)`.
    pub fn scaled(&self, s: &[f64], n: usize) -> f64 {
        let nf = n as f64;
        match self {
            // exact forms avoid dividing and re-multiplying
            GFunction::NormSquared => dot(s, s) / nf,
            GFunction::Linear { u } => dot(u, s),
            GFunction::Identity => s[0],
            _ => {
                let mu: Vec<f64> = s.iter().map(|x| x / nf).collect();
                nf * self.eval(&mu)
            }
        }
    }
}

/// `{ g(S_n / n) >= b }` at a fixed horizon `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailEvent {
    pub g: GFunction,
    pub b: f64,
    pub n: usize,
}

impl TailEvent {
    pub fn new(g: GFunction, b: f64, n: usize) -> Self {
        Self { g, b, n }
    }

    /// Event containing every path.
    pub fn sure(n: usize) -> Self {
        Self::new(GFunction::Identity, f64::NEG_INFINITY, n)
    }

    pub fn hit(&self, s: &[f64]) -> bool {
        if self.b == f64::NEG_INFINITY {
            return true;
        }
        let mu: Vec<f64> = s.iter().map(|x| x / self.n as f64).collect();
        at_least(self.g.eval(&mu), self.b)
    }
}

/// `{ T_c <= n1 }` with `T_c = inf { n >= n0 : n g(S_n / n) >= c }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryEvent {
    pub g: GFunction,
    pub c: f64,
    pub n0: usize,
    pub n1: usize,
}

impl BoundaryEvent {
    pub fn new(g: GFunction, c: f64, n0: usize, n1: usize) -> Self {
        Self { g, c, n0, n1 }
    }

    /// Whether the walk stops at time `n` with partial sum `s`.
    pub fn crossed(&self, s: &[f64], n: usize) -> bool {
        n >= self.n0 && at_least(self.g.scaled(s, n), self.c)
    }
}

/// Targets for first-passage estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FirstPassageBoundary {
    /// `S_n >= c` for a scalar walk.
    OneSided,
    /// `u' S_n >= c`.
    HalfSpace { normal: Vec<f64> },
    /// `max_j S_{n,j} >= c`.
    MaxCoordinate,
}

impl FirstPassageBoundary {
    pub fn crossed(&self, s: &[f64], c: f64) -> bool {
        let v = match self {
            FirstPassageBoundary::OneSided => s[0],
            FirstPassageBoundary::HalfSpace { normal } => dot(normal, s),
            FirstPassageBoundary::MaxCoordinate => s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        at_least(v, c)
    }

    /// Unit directions along which the zero of the cumulant generating
    /// function is sought, one per mixture component.
    pub fn directions(&self, dim: usize) -> Vec<Vec<f64>> {
        match self {
            FirstPassageBoundary::OneSided => {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                vec![e]
            }
            FirstPassageBoundary::HalfSpace { normal } => {
                let norm = dot(normal, normal).sqrt();
                vec![normal.iter().map(|x| x / norm).collect()]
            }
            FirstPassageBoundary::MaxCoordinate => (0..dim)
                .map(|j| {
                    let mut e = vec![0.0; dim];
                    e[j] = 1.0;
                    e
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_ties_are_hits() {
        let g = GFunction::SquaredDistance { center: vec![2.1] };
        let e = TailEvent::new(g.clone(), 0.36, 10);
        assert!(e.hit(&[27.0]));
        assert!(e.hit(&[15.0]));
        assert!(!e.hit(&[16.0]));
        assert!(!e.hit(&[26.0]));
        assert!(TailEvent::sure(3).hit(&[-1e9]));
    }

    #[test]
    fn boundary_rule() {
        let e = BoundaryEvent::new(GFunction::NormSquared, 20.0, 5, 50);
        assert!(!e.crossed(&[100.0, 0.0, 0.0], 4));
        assert!(e.crossed(&[10.0, 0.0, 0.0], 5));
        assert!(!e.crossed(&[9.9, 0.0, 0.0], 5));
        assert_eq!(GFunction::Norm.eval(&[3.0, 4.0]), 5.0);
        assert_eq!(GFunction::MaxCoordinate.eval(&[3.0, 4.0]), 4.0);
        let custom = GFunction::custom(|m| m[0] * 2.0);
        assert_eq!(custom.scaled(&[3.0], 3), 6.0);
    }

    #[test]
    fn first_passage_targets() {
        assert!(FirstPassageBoundary::OneSided.crossed(&[5.0], 5.0));
        let h = FirstPassageBoundary::HalfSpace { normal: vec![3.0, 4.0] };
        assert_eq!(h.directions(2), vec![vec![0.6, 0.8]]);
        assert!(h.crossed(&[1.0, 1.0], 7.0));
        assert_eq!(FirstPassageBoundary::MaxCoordinate.directions(2).len(), 2);
    }

    #[test]
    fn config_form() {
        let g: GFunction = serde_json::from_str(r#"{"kind":"squared-distance","center":[2.1]}"#).unwrap();
        assert!((g.eval(&[2.7]) - 0.36).abs() < 1e-12);
    }
}
