//! Mixtures of tilted measures and their likelihood ratios.
//!
//! A mixture `Q = sum_k w_k P_{theta_k}` is sampled by drawing a component
//! and then a path from that tilt. On a path of length `t` from `x0` to `x_t`
//! with sum `S`,
//!
//! ```text
//! dQ/dP = sum_k w_k exp(theta_k' S - t psi(theta_k)) r(x_t; theta_k) / r(x0; theta_k)
//! ```
//!
//! which is evaluated in the log domain.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{at_least, GFunction};
use crate::exp_family::{cumulative, draw_index, log_sum_exp, TiltPoint, DEFAULT_TILT_TOL};
use crate::markov_additive::TiltCache;
use crate::model::{Model, Tilt};

/// Refuse grids larger than this many points.
pub const MAX_GRID_POINTS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureFlavor {
    BoundaryGrid,
    TailGrid,
    RegimeGrid,
    Finite,
}

#[derive(Debug, Clone)]
pub struct Component {
    pub weight: f64,
    pub tilt: Tilt,
}

impl Component {
    pub fn point(&self) -> &TiltPoint {
        &self.tilt.point
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub flavor: MixtureFlavor,
    /// Parameters the mixture was built from.
    pub params: BTreeMap<String, f64>,
    /// Grid points skipped because the tilt solve failed or the weight underflowed.
    pub dropped: usize,
    components: Vec<Component>,
    cumulative: Vec<f64>,
    dim: usize,
    states: usize,
    log_w: Vec<f64>,
    theta: Vec<f64>,
    psi: Vec<f64>,
    log_r: Vec<f64>,
}

/// How finite-mixture weights are set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum WeightRule {
    /// Given weights, normalised.
    Explicit { weights: Vec<f64> },
    /// `w_k` proportional to `exp(-n phi(mu_k))`, optionally with supplied rates.
    Exponential {
        n: f64,
        #[serde(default)]
        phi: Option<Vec<f64>>,
    },
}

/// Inputs of the boundary-crossing grid mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryGridParams {
    pub g: GFunction,
    pub c: f64,
    pub n0: usize,
    pub n1: usize,
    pub delta: f64,
    pub a: f64,
    pub r: f64,
    pub eps0: f64,
    /// Rate slack in the definition of the core region.
    pub eps1: f64,
    /// Rate slack in the second term; half of `eps1` when absent.
    #[serde(default)]
    pub eps1_tail: Option<f64>,
    /// Grid spacing; `c^{-1/2}` when absent.
    #[serde(default)]
    pub spacing: Option<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn grid_points(lower: &[f64], upper: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    if !(h > 0.0) || lower.len() != upper.len() || lower.is_empty() {
        return Err(Error::Config("grid needs a positive spacing and a box".into()));
    }
    let ranges: Vec<(i64, i64)> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| ((lo / h).ceil() as i64, (hi / h).floor() as i64))
        .collect();
    let mut total: usize = 1;
    for (a, b) in &ranges {
        if b < a {
            return Ok(Vec::new());
        }
        total = total.saturating_mul((b - a + 1) as usize);
    }
    if total > MAX_GRID_POINTS {
        return Err(Error::Config(format!("grid has {total} points, limit {MAX_GRID_POINTS}")));
    }
    let mut out = Vec::with_capacity(total);
    let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(k.iter().map(|ki| *ki as f64 * h).collect());
        let mut j = k.len();
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            if k[j] < ranges[j].1 {
                k[j] += 1;
                for (kk, r) in k.iter_mut().zip(&ranges).skip(j + 1) {
                    *kk = r.0;
                }
                break;
            }
        }
    }
}

impl MixtureSpec {
    /// Builds a mixture from tilts and unnormalised log masses.
    pub fn from_log_masses(
        flavor: MixtureFlavor,
        params: BTreeMap<String, f64>,
        entries: Vec<(Tilt, f64)>,
        dropped: usize,
    ) -> Result<Self> {
        let entries: Vec<(Tilt, f64)> = entries.into_iter().filter(|(_, lm)| *lm > f64::NEG_INFINITY).collect();
        if entries.is_empty() {
            return Err(Error::EmptyMixture(format!("{flavor:?} mixture received no positive mass")));
        }
        if entries.iter().any(|(_, lm)| !lm.is_finite()) {
            return Err(Error::Config("mixture masses must be finite".into()));
        }
        let total = log_sum_exp(entries.iter().map(|(_, lm)| *lm));
        let mut underflow = 0;
        let components: Vec<Component> = entries
            .into_iter()
            .filter_map(|(tilt, lm)| {
                let weight = (lm - total).exp();
                if weight > 0.0 {
                    Some(Component { weight, tilt })
                } else {
                    underflow += 1;
                    None
                }
            })
            .collect();
        let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
        let dim = components[0].tilt.theta().len();
        let states = components[0].tilt.log_r.len();
        let mut spec = Self {
            flavor,
            params,
            dropped: dropped + underflow,
            cumulative: cumulative(&weights),
            dim,
            states,
            log_w: weights.iter().map(|w| w.ln()).collect(),
            theta: components.iter().flat_map(|c| c.tilt.theta().to_vec()).collect(),
            psi: components.iter().map(|c| c.tilt.psi()).collect(),
            log_r: components.iter().flat_map(|c| c.tilt.log_r.clone()).collect(),
            components,
        };
        spec.renormalise();
        Ok(spec)
    }

    fn renormalise(&mut self) {
        let s: f64 = self.components.iter().map(|c| c.weight).sum();
        for c in &mut self.components {
            c.weight /= s;
        }
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        self.log_w = weights.iter().map(|w| w.ln()).collect();
        self.cumulative = cumulative(&weights);
    }

    /// Builds a mixture from tilts and positive weights.
    pub fn from_tilts(flavor: MixtureFlavor, params: BTreeMap<String, f64>, tilts: Vec<(Tilt, f64)>) -> Result<Self> {
        if tilts.iter().any(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("mixture weights must be positive and finite".into()));
        }
        let entries = tilts.into_iter().map(|(t, w)| (t, w.ln())).collect();
        Self::from_log_masses(flavor, params, entries, 0)
    }

    /// Point mass on the tilt with mean `mu`.
    pub fn single_tilt(model: &Model, mu: &[f64]) -> Result<Self> {
        Self::finite(model, &[mu.to_vec()], &WeightRule::Explicit { weights: vec![1.0] })
    }

    /// Finite mixture over the given means.
    pub fn finite(model: &Model, means: &[Vec<f64>], rule: &WeightRule) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::EmptyMixture("finite mixture needs at least one mean".into()));
        }
        let tilts = means
            .iter()
            .map(|mu| model.tilt_for_mean(mu, DEFAULT_TILT_TOL))
            .collect::<Result<Vec<_>>>()?;
        let mut params = BTreeMap::new();
        let log_masses: Vec<f64> = match rule {
            WeightRule::Explicit { weights } => {
                if weights.len() != means.len() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::Config("explicit weights must be positive, one per mean".into()));
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("explicit weights sum to {s}, not 1")));
                }
                weights.iter().map(|w| w.ln()).collect()
            }
            WeightRule::Exponential { n, phi } => {
                params.insert("n".into(), *n);
                let rates: Vec<f64> = match phi {
                    Some(p) if p.len() == means.len() => p.clone(),
                    Some(_) => return Err(Error::Config("one rate per mean required".into())),
                    None => tilts.iter().map(|t| t.point.phi).collect(),
                };
                rates.iter().map(|p| -n * p).collect()
            }
        };
        Self::from_log_masses(MixtureFlavor::Finite, params, tilts.into_iter().zip(log_masses).collect(), 0)
    }

    /// Discrete mixture over `(h Z)^d` with masses proportional to
    /// `exp(-n phi(mu))` on `{ g(mu) >= b }`, restricted to a box.
    pub fn tail_grid(
        model: &Model,
        n: usize,
        b: f64,
        g: &GFunction,
        spacing: Option<f64>,
        bounds: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        let h = spacing.unwrap_or(1.0 / (n as f64).sqrt());
        let (lower, upper) = bounds
            .or_else(|| model.mean_box())
            .ok_or_else(|| Error::Config("tail grid over an unbounded mean space needs a box".into()))?;
        let mut cache = TiltCache::new();
        let mut dropped = 0;
        let mut entries = Vec::new();
        for mu in grid_points(&lower, &upper, h)? {
            if !at_least(g.eval(&mu), b) {
                continue;
            }
            match model.tilt_for_mean_cached(&mu, DEFAULT_TILT_TOL, Some(&mut cache)) {
                Ok(t) => {
                    let lm = -(n as f64) * t.point.phi;
                    entries.push((t, lm));
                }
                Err(_) => dropped += 1,
            }
        }
        let params = BTreeMap::from([("n".into(), n as f64), ("b".into(), b), ("spacing".into(), h)]);
        Self::from_log_masses(MixtureFlavor::TailGrid, params, entries, dropped)
            .map_err(|e| match e {
                Error::EmptyMixture(_) => Error::EmptyMixture(format!(
                    "no attainable grid point with g(mu) >= {b} in the box {lower:?}..{upper:?}"
                )),
                other => other,
            })
    }

    /// Discrete analogue of the boundary-crossing mixing density: masses
    /// `g^{-d/2} exp(-c phi / g)` on grid cells meeting the core region plus
    /// `delta^{d/2} exp(-n0 phi)` where `phi > 1/(delta r) + eps1_tail`.
    ///
    /// The core region is `{ phi <= 1/(delta r) + eps1, 1/a - eps0 < g < 1/delta + eps0 }`;
    /// a cell is taken to meet it when one of its corners lies in it.
    pub fn boundary_grid(model: &Model, p: &BoundaryGridParams) -> Result<Self> {
        let h = p.spacing.unwrap_or(1.0 / p.c.sqrt());
        let d = model.dim();
        if p.lower.len() != d || p.upper.len() != d {
            return Err(Error::Config("box dimension does not match the model".into()));
        }
        let eps1_tail = p.eps1_tail.unwrap_or(p.eps1 / 2.0);
        let core_phi = 1.0 / (p.delta * p.r) + p.eps1;
        let tail_phi = 1.0 / (p.delta * p.r) + eps1_tail;
        let g_lo = 1.0 / p.a - p.eps0;
        let g_hi = 1.0 / p.delta + p.eps0;

        // rates on the grid extended by one cell so every corner is available
        let upper_ext: Vec<f64> = p.upper.iter().map(|u| u + h).collect();
        let points = grid_points(&p.lower, &upper_ext, h)?;
        let mut cache = TiltCache::new();
        let index = |mu: &[f64]| -> Vec<i64> { mu.iter().map(|m| (m / h).round() as i64).collect() };
        let mut tilts: BTreeMap<Vec<i64>, Option<Tilt>> = BTreeMap::new();
        for mu in &points {
            let t = model.tilt_for_mean_cached(mu, DEFAULT_TILT_TOL, Some(&mut cache)).ok();
            tilts.insert(index(mu), t);
        }
        let in_core = |key: &[i64]| -> bool {
            match tilts.get(key) {
                Some(Some(t)) => {
                    let gv = p.g.eval(&t.point.mu);
                    t.point.phi <= core_phi && gv > g_lo && gv < g_hi
                }
                _ => false,
            }
        };
        let mut dropped = 0;
        let mut entries = Vec::new();
        for mu in points.iter().filter(|mu| mu.iter().zip(&p.upper).all(|(m, u)| *m <= *u + 1e-12 * h)) {
            let key = index(mu);
            let Some(Some(tilt)) = tilts.get(&key) else {
                dropped += 1;
                continue;
            };
            let meets_core = (0..1usize << d).any(|mask| {
                let corner: Vec<i64> = key
                    .iter()
                    .enumerate()
                    .map(|(j, k)| k + ((mask >> j) & 1) as i64)
                    .collect();
                in_core(&corner)
            });
            let phi = tilt.point.phi;
            let gv = p.g.eval(mu);
            let mut terms = Vec::with_capacity(2);
            if meets_core && gv > 0.0 {
                terms.push(-(d as f64) / 2.0 * gv.ln() - p.c * phi / gv);
            }
            if phi > tail_phi {
                terms.push((d as f64) / 2.0 * p.delta.ln() - p.n0 as f64 * phi);
            }
            if !terms.is_empty() {
                entries.push((tilt.clone(), log_sum_exp(terms.iter().copied())));
            }
        }
        let params = BTreeMap::from([
            ("c".into(), p.c),
            ("n0".into(), p.n0 as f64),
            ("n1".into(), p.n1 as f64),
            ("delta".into(), p.delta),
            ("a".into(), p.a),
            ("r".into(), p.r),
            ("eps0".into(), p.eps0),
            ("eps1".into(), p.eps1),
            ("eps1_tail".into(), eps1_tail),
            ("spacing".into(), h),
        ]);
        Self::from_log_masses(MixtureFlavor::BoundaryGrid, params, entries, dropped).map_err(|e| match e {
            Error::EmptyMixture(_) => Error::EmptyMixture(format!(
                "no grid cell meets {{phi <= {core_phi}, {g_lo} < g < {g_hi}}} and no point has phi > {tail_phi}"
            )),
            other => other,
        })
    }

    /// Grid mixture for `g(mu) = ||mu||^2` over `(h Z)^d`: masses
    /// `g^{-d/2} exp(-c phi / g)` on `{ c/n1 <= g <= c/n0 }` and
    /// `(c/n0)^{d/2} exp(-n0 phi)` on `{ c/n0 < g <= b }`.
    pub fn regime_grid(model: &Model, c: f64, n0: usize, n1: usize, b: f64, spacing: Option<f64>) -> Result<Self> {
        if b < c / n0 as f64 {
            return Err(Error::Config(format!("b = {b} must be at least c/n0 = {}", c / n0 as f64)));
        }
        let h = spacing.unwrap_or(1.0 / c.sqrt());
        let d = model.dim();
        let half = d as f64 / 2.0;
        let lo_g = c / n1 as f64;
        let mid_g = c / n0 as f64;
        let radius = b.sqrt();
        let lower = vec![-radius; d];
        let upper = vec![radius; d];
        let mut cache = TiltCache::new();
        let mut dropped = 0;
        let mut entries = Vec::new();
        for mu in grid_points(&lower, &upper, h)? {
            let gv: f64 = mu.iter().map(|x| x * x).sum();
            if gv < lo_g || gv > b {
                continue;
            }
            let tilt = match model.tilt_for_mean_cached(&mu, DEFAULT_TILT_TOL, Some(&mut cache)) {
                Ok(t) => t,
                Err(_) => {
                    dropped += 1;
                    continue;
                }
            };
            let phi = tilt.point.phi;
            let lm = if gv <= mid_g {
                -half * gv.ln() - c * phi / gv
            } else {
                half * mid_g.ln() - n0 as f64 * phi
            };
            entries.push((tilt, lm));
        }
        let params = BTreeMap::from([
            ("c".into(), c),
            ("n0".into(), n0 as f64),
            ("n1".into(), n1 as f64),
            ("b".into(), b),
            ("spacing".into(), h),
        ]);
        Self::from_log_masses(MixtureFlavor::RegimeGrid, params, entries, dropped)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn tilt(&self, k: usize) -> &Tilt {
        &self.components[k].tilt
    }

    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.components.len() == 1 {
            return 0;
        }
        draw_index(&self.cumulative, rng)
    }

    /// `ln(1/L)` for a path of length `t` with sum `s`.
    pub fn log_inverse_likelihood_ratio(&self, s: &[f64], t: usize, terminal: usize, initial: usize) -> Result<f64> {
        let tf = t as f64;
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for k in 0..self.components.len() {
            let th = &self.theta[k * self.dim..(k + 1) * self.dim];
            let mut a = self.log_w[k] - tf * self.psi[k];
            for (x, y) in th.iter().zip(s) {
                a += x * y;
            }
            if self.states > 1 {
                let lr = &self.log_r[k * self.states..(k + 1) * self.states];
                a += lr[terminal] - lr[initial];
            }
            if !a.is_finite() {
                return Err(Error::Overflow {
                    component: k,
                    detail: format!("log term {a} at t = {t}"),
                });
            }
            if a > max {
                acc = acc * (max - a).exp() + 1.0;
                max = a;
            } else {
                acc += (a - max).exp();
            }
        }
        Ok(max + acc.ln())
    }

    pub fn inverse_likelihood_ratio(&self, s: &[f64], t: usize, terminal: usize, initial: usize) -> Result<f64> {
        let v = self.log_inverse_likelihood_ratio(s, t, terminal, initial)?.exp();
        if !v.is_finite() {
            return Err(Error::Overflow {
                component: 0,
                detail: format!("1/L = {v} at t = {t}"),
            });
        }
        Ok(v)
    }
}
