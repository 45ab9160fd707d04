//! Exponential-family machinery for i.i.d. increments.
//!
//! Two families are supported: multivariate Gaussian with identity covariance
//! and finite lattices (arbitrary support points in R^d). Both have closed
//! forms for the cumulant generating function and its derivatives, which is
//! what the tilt solver and the rate function rely on.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TILT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

const ILL_CONDITIONED: f64 = 1e12;
const THETA_RUNAWAY: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum IidFamily {
    /// N(mean, I).
    Gaussian { mean: Vec<f64> },
    /// Finite support with positive probabilities.
    Lattice { points: Vec<Vec<f64>>, probs: Vec<f64> },
}

/// Box constraint on the natural parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ThetaBox {
    fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidModel {
    pub family: IidFamily,
    /// `None` means all of R^d.
    #[serde(default)]
    pub domain: Option<ThetaBox>,
}

/// A mean vector together with its natural parameter and rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltPoint {
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: f64,
    pub phi: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl IidModel {
    pub fn gaussian(mean: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        Ok(Self {
            family: IidFamily::Gaussian { mean },
            domain: None,
        })
    }

    pub fn standard_normal(d: usize) -> Self {
        Self::gaussian(vec![0.0; d.max(1)]).expect("positive dimension")
    }

    pub fn lattice(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let model = Self {
            family: IidFamily::Lattice { points, probs },
            domain: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Scalar lattice with the given support values.
    pub fn scalar_lattice(values: &[f64], probs: &[f64]) -> Result<Self> {
        Self::lattice(values.iter().map(|v| vec![*v]).collect(), probs.to_vec())
    }

    pub fn with_domain(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.domain = Some(ThetaBox { lower, upper });
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            IidFamily::Gaussian { mean } => {
                if mean.is_empty() || mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidModel("gaussian mean must be finite and non-empty".into()));
                }
            }
            IidFamily::Lattice { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(Error::InvalidModel(
                        "lattice needs one probability per support point".into(),
                    ));
                }
                let d = points[0].len();
                if d == 0 || points.iter().any(|p| p.len() != d) {
                    return Err(Error::InvalidModel("lattice points must share a positive dimension".into()));
                }
                if probs.iter().any(|p| !(*p > 0.0)) {
                    return Err(Error::InvalidModel("lattice probabilities must be positive".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "lattice probabilities sum to {total}, not 1"
                    )));
                }
            }
        }
        if let Some(b) = &self.domain {
            if b.lower.len() != self.dim() || b.upper.len() != self.dim() {
                return Err(Error::InvalidModel("domain box has the wrong dimension".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            IidFamily::Gaussian { mean } => mean.len(),
            IidFamily::Lattice { points, .. } => points[0].len(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match &self.family {
            IidFamily::Gaussian { mean } => mean.clone(),
            IidFamily::Lattice { points, probs } => {
                let mut m = vec![0.0; self.dim()];
                for (x, p) in points.iter().zip(probs) {
                    m.iter_mut().zip(x).for_each(|(mi, xi)| *mi += p * xi);
                }
                m
            }
        }
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        let ok = theta.len() == self.dim()
            && theta.iter().all(|t| t.is_finite())
            && self.domain.as_ref().is_none_or(|b| b.contains(theta));
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                theta: theta.to_vec(),
            })
        }
    }

    /// Log moment generating function.
    pub fn cgf(&self, theta: &[f64]) -> Result<f64> {
        self.check_domain(theta)?;
        Ok(match &self.family {
            IidFamily::Gaussian { mean } => dot(theta, mean) + 0.5 * dot(theta, theta),
            IidFamily::Lattice { points, probs } => log_sum_exp(
                points
                    .iter()
                    .zip(probs)
                    .map(|(x, p)| p.ln() + dot(theta, x)),
            ),
        })
    }

    /// Probabilities of the support points under the tilt `theta`.
    pub fn tilted_pmf(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(theta)?;
        match &self.family {
            IidFamily::Lattice { points, probs } => {
                let logs: Vec<f64> = points
                    .iter()
                    .zip(probs)
                    .map(|(x, p)| p.ln() + dot(theta, x))
                    .collect();
                let psi = log_sum_exp(logs.iter().copied());
                Ok(logs.iter().map(|l| (l - psi).exp()).collect())
            }
            IidFamily::Gaussian { .. } => Err(Error::InvalidModel(
                "tilted pmf requested for a continuous family".into(),
            )),
        }
    }

    pub fn cgf_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(theta)?;
        match &self.family {
            IidFamily::Gaussian { mean } => Ok(mean.iter().zip(theta).map(|(m, t)| m + t).collect()),
            IidFamily::Lattice { points, .. } => {
                let w = self.tilted_pmf(theta)?;
                let mut g = vec![0.0; self.dim()];
                for (x, wi) in points.iter().zip(&w) {
                    g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += wi * xi);
                }
                Ok(g)
            }
        }
    }

    pub fn cgf_hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        match &self.family {
            IidFamily::Gaussian { .. } => {
                self.check_domain(theta)?;
                Ok(DMatrix::identity(d, d))
            }
            IidFamily::Lattice { points, .. } => {
                let w = self.tilted_pmf(theta)?;
                let g = self.cgf_gradient(theta)?;
                let mut h = DMatrix::zeros(d, d);
                for (x, wi) in points.iter().zip(&w) {
                    for i in 0..d {
                        for j in 0..d {
                            h[(i, j)] += wi * (x[i] - g[i]) * (x[j] - g[j]);
                        }
                    }
                }
                Ok(h)
            }
        }
    }

    /// Solves grad psi(theta) = mu.
    ///
    /// Newton with step halving on the concave dual objective; coordinate
    /// bisection when the Hessian is numerically singular.
    pub fn tilt_for_mean(&self, mu: &[f64], tol: f64) -> Result<TiltPoint> {
        if mu.len() != self.dim() {
            return Err(Error::InvalidModel(format!(
                "mean has dimension {}, model has {}",
                mu.len(),
                self.dim()
            )));
        }
        let theta = match &self.family {
            IidFamily::Gaussian { mean } => mu.iter().zip(mean).map(|(m, m0)| m - m0).collect(),
            IidFamily::Lattice { points, .. } => {
                if self.dim() == 1 {
                    let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                    let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                    if !(lo < mu[0] && mu[0] < hi) {
                        return Err(Error::NonConvergence {
                            mu: mu.to_vec(),
                            detail: format!("mean lies outside the open support interval ({lo}, {hi})"),
                        });
                    }
                }
                let theta = self.newton_tilt(mu, tol)?;
                self.reject_boundary(mu, &theta, points)?;
                theta
            }
        };
        self.tilt_point(mu.to_vec(), theta)
    }

    /// A mean on a face of the support hull is reached only as the natural
    /// parameter diverges, which shows up as a nearly singular tilted covariance.
    fn reject_boundary(&self, mu: &[f64], theta: &[f64], points: &[Vec<f64>]) -> Result<()> {
        let diameter = points
            .iter()
            .flat_map(|a| points.iter().map(move |b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()))
            .fold(0.0f64, f64::max);
        let hess = self.cgf_hessian(theta)?;
        let emin = hess.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if emin < 1e-9 * diameter {
            return Err(Error::NonConvergence {
                mu: mu.to_vec(),
                detail: format!("mean lies on the boundary of the mean space (tilted variance {emin:e})"),
            });
        }
        Ok(())
    }

    fn tilt_point(&self, mu: Vec<f64>, theta: Vec<f64>) -> Result<TiltPoint> {
        let psi = self.cgf(&theta)?;
        let phi = (dot(&theta, &mu) - psi).max(0.0);
        Ok(TiltPoint { mu, theta, psi, phi })
    }

    /// TiltPoint at a given natural parameter, with mu = grad psi(theta).
    pub fn tilt_at(&self, theta: &[f64]) -> Result<TiltPoint> {
        let mu = self.cgf_gradient(theta)?;
        self.tilt_point(mu, theta.to_vec())
    }

    fn residual(&self, theta: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .cgf_gradient(theta)?
            .iter()
            .zip(mu)
            .map(|(g, m)| g - m)
            .collect())
    }

    fn newton_tilt(&self, mu: &[f64], tol: f64) -> Result<Vec<f64>> {
        let d = self.dim();
        let objective = |t: &[f64]| -> Result<f64> { Ok(dot(t, mu) - self.cgf(t)?) };
        let mut theta = vec![0.0; d];
        let mut res = self.residual(&theta, mu)?;
        for _ in 0..DEFAULT_MAX_ITER {
            if sup_norm(&res) <= tol {
                return Ok(theta);
            }
            let hess = self.cgf_hessian(&theta)?;
            let eig = hess.clone().symmetric_eigen();
            let (emin, emax) = eig
                .eigenvalues
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
            if !(emin > 0.0) || emax / emin > ILL_CONDITIONED {
                return self.coordinate_bisection(mu, theta, tol);
            }
            let rhs = DVector::from_iterator(d, res.iter().map(|r| -r));
            let step = match hess.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => return self.coordinate_bisection(mu, theta, tol),
            };
            let current = objective(&theta)?;
            let current_res = sup_norm(&res);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
                if self.check_domain(&trial).is_ok() {
                    // near the root the objective is flat to rounding, so a
                    // smaller residual also counts as progress
                    let trial_res = sup_norm(&self.residual(&trial, mu)?);
                    if objective(&trial)? > current || trial_res < current_res {
                        theta = trial;
                        accepted = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !accepted {
                return self.coordinate_bisection(mu, theta, tol);
            }
            if sup_norm(&theta) > THETA_RUNAWAY {
                return Err(Error::NonConvergence {
                    mu: mu.to_vec(),
                    detail: "natural parameter diverges; mean is on or beyond the boundary of the mean space".into(),
                });
            }
            res = self.residual(&theta, mu)?;
        }
        if sup_norm(&res) <= tol {
            return Ok(theta);
        }
        Err(Error::NonConvergence {
            mu: mu.to_vec(),
            detail: format!("iteration cap {DEFAULT_MAX_ITER} reached with residual {:e}", sup_norm(&res)),
        })
    }

    fn coordinate_bisection(&self, mu: &[f64], mut theta: Vec<f64>, tol: f64) -> Result<Vec<f64>> {
        let d = self.dim();
        for _ in 0..DEFAULT_MAX_ITER {
            let res = self.residual(&theta, mu)?;
            if sup_norm(&res) <= tol {
                return Ok(theta);
            }
            for j in 0..d {
                let f = |t: f64, theta: &mut Vec<f64>| -> Result<f64> {
                    theta[j] = t;
                    Ok(self.cgf_gradient(theta)?[j] - mu[j])
                };
                let start = theta[j];
                let (mut lo, mut hi) = (start - 1.0, start + 1.0);
                let mut width = 1.0;
                while f(lo, &mut theta)? > 0.0 {
                    width *= 2.0;
                    lo = start - width;
                    if width > THETA_RUNAWAY {
                        return Err(Error::NonConvergence {
                            mu: mu.to_vec(),
                            detail: format!("no bracket for coordinate {j}"),
                        });
                    }
                }
                width = 1.0;
                while f(hi, &mut theta)? < 0.0 {
                    width *= 2.0;
                    hi = start + width;
                    if width > THETA_RUNAWAY {
                        return Err(Error::NonConvergence {
                            mu: mu.to_vec(),
                            detail: format!("no bracket for coordinate {j}"),
                        });
                    }
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid, &mut theta)? < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                theta[j] = 0.5 * (lo + hi);
            }
        }
        let res = self.residual(&theta, mu)?;
        if sup_norm(&res) <= tol {
            Ok(theta)
        } else {
            Err(Error::NonConvergence {
                mu: mu.to_vec(),
                detail: format!("coordinate bisection stalled with residual {:e}", sup_norm(&res)),
            })
        }
    }

    pub fn rate(&self, mu: &[f64]) -> Result<f64> {
        Ok(self.tilt_for_mean(mu, DEFAULT_TILT_TOL)?.phi)
    }

    pub fn sampler(&self, theta: &[f64]) -> Result<TiltedIidSampler> {
        self.check_domain(theta)?;
        Ok(match &self.family {
            IidFamily::Gaussian { mean } => TiltedIidSampler::Gaussian {
                mean: mean.iter().zip(theta).map(|(m, t)| m + t).collect(),
            },
            IidFamily::Lattice { points, .. } => {
                let pmf = self.tilted_pmf(theta)?;
                TiltedIidSampler::Lattice {
                    points: points.clone(),
                    cumulative: cumulative(&pmf),
                }
            }
        })
    }

    /// One draw from F_theta.
    pub fn sample_increment_tilted<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.sampler(theta)?.sample_into(rng, &mut out);
        Ok(out)
    }
}

pub(crate) fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cum.last_mut() {
        *last = f64::INFINITY;
    }
    cum
}

/// Inversion against a cumulative table whose last entry is +inf.
pub(crate) fn draw_index<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cumulative.partition_point(|c| *c <= u)
}

/// Precomputed sampler for one tilt; tilts are reused across many runs.
#[derive(Debug, Clone)]
pub enum TiltedIidSampler {
    Gaussian { mean: Vec<f64> },
    Lattice { points: Vec<Vec<f64>>, cumulative: Vec<f64> },
}

impl TiltedIidSampler {
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            TiltedIidSampler::Gaussian { mean } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    let e: f64 = rng.sample(StandardNormal);
                    *o = m + e;
                }
            }
            TiltedIidSampler::Lattice { points, cumulative } => {
                out.copy_from_slice(&points[draw_index(cumulative, rng)]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chunk_rng;
    use approx::assert_abs_diff_eq;

    fn coin() -> IidModel {
        IidModel::scalar_lattice(&[-1.0, 1.0], &[0.5, 0.5]).unwrap()
    }

    fn bernoulli() -> IidModel {
        IidModel::scalar_lattice(&[0.0, 1.0], &[0.5, 0.5]).unwrap()
    }

    /// sup over a dense theta grid; independent of the Newton solver.
    fn grid_rate(model: &IidModel, mu: f64) -> f64 {
        (-400_000..=400_000)
            .map(|k| k as f64 * 1e-5)
            .map(|t| t * mu - model.cgf(&[t]).unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn cgf_examples() {
        let n = IidModel::standard_normal(1);
        assert_abs_diff_eq!(n.cgf(&[0.5]).unwrap(), 0.125, epsilon = 1e-15);
        assert_eq!(n.cgf(&[0.0]).unwrap(), 0.0);
        assert_eq!(coin().cgf(&[0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(coin().cgf(&[1.0]).unwrap(), 1f64.cosh().ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(coin().cgf(&[1.0]).unwrap(), 0.433781, epsilon = 1e-6);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let m = IidModel::standard_normal(1).with_domain(vec![-1.0], vec![1.0]);
        assert!(matches!(m.cgf(&[2.0]), Err(Error::OutOfDomain { .. })));
        assert!(m.cgf(&[0.9]).is_ok());
    }

    #[test]
    fn tilt_examples() {
        let n = IidModel::standard_normal(1);
        let tp = n.tilt_for_mean(&[1.0], 1e-10).unwrap();
        assert_abs_diff_eq!(tp.theta[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tp.phi, 0.5, epsilon = 1e-12);
        let at_mean = bernoulli().tilt_for_mean(&[0.5], 1e-10).unwrap();
        assert_abs_diff_eq!(at_mean.theta[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(at_mean.phi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bernoulli_rate_matches_grid_oracle() {
        let oracle = grid_rate(&bernoulli(), 0.75);
        assert_abs_diff_eq!(oracle, 0.130812, epsilon = 1e-6);
        assert_abs_diff_eq!(bernoulli().rate(&[0.75]).unwrap(), oracle, epsilon = 1e-8);
        let oracle = grid_rate(&coin(), 0.5);
        assert_abs_diff_eq!(coin().rate(&[0.5]).unwrap(), oracle, epsilon = 1e-8);
        assert_abs_diff_eq!(coin().rate(&[0.5]).unwrap(), 0.130812, epsilon = 1e-6);
    }

    #[test]
    fn rate_gaussian_3d() {
        let n = IidModel::standard_normal(3);
        assert_abs_diff_eq!(n.rate(&[1.0, 0.0, 0.0]).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(n.rate(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn boundary_mean_is_rejected() {
        assert!(matches!(
            bernoulli().tilt_for_mean(&[1.0], 1e-10),
            Err(Error::NonConvergence { .. })
        ));
        let square = IidModel::lattice(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![0.25; 4],
        )
        .unwrap();
        assert!(square.tilt_for_mean(&[1.0, 0.5], 1e-10).is_err());
        assert!(square.tilt_for_mean(&[1.2, 0.5], 1e-10).is_err());
    }

    #[test]
    fn bisection_fallback_agrees_with_newton() {
        let m = IidModel::lattice(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 2.0]],
            vec![0.1, 0.4, 0.3, 0.2],
        )
        .unwrap();
        let mu = [0.3, 0.7];
        let newton = m.tilt_for_mean(&mu, 1e-10).unwrap().theta;
        let bisect = m.coordinate_bisection(&mu, vec![0.0, 0.0], 1e-10).unwrap();
        assert_abs_diff_eq!(newton[0], bisect[0], epsilon = 1e-7);
        assert_abs_diff_eq!(newton[1], bisect[1], epsilon = 1e-7);
    }

    #[test]
    fn two_dim_lattice_round_trip() {
        let m = IidModel::lattice(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 2.0]],
            vec![0.1, 0.4, 0.3, 0.2],
        )
        .unwrap();
        let mu = [0.55, 0.9];
        let tp = m.tilt_for_mean(&mu, 1e-10).unwrap();
        let g = m.cgf_gradient(&tp.theta).unwrap();
        assert!((g[0] - mu[0]).abs() <= 1e-10 && (g[1] - mu[1]).abs() <= 1e-10);
        assert!(tp.phi > 0.0);
    }

    #[test]
    fn tilted_sampling_means() {
        let mut rng = chunk_rng(11, 0);
        let n = 100_000;
        let m = IidModel::standard_normal(2);
        let s = m.sampler(&[2.0, 0.0]).unwrap();
        let mut acc = [0.0; 2];
        let mut buf = [0.0; 2];
        for _ in 0..n {
            s.sample_into(&mut rng, &mut buf);
            acc[0] += buf[0];
            acc[1] += buf[1];
        }
        let se = 1.0 / (n as f64).sqrt();
        assert!((acc[0] / n as f64 - 2.0).abs() < 4.0 * se);
        assert!((acc[1] / n as f64).abs() < 4.0 * se);

        let p_plus = 1f64.exp() / (1f64.exp() + (-1f64).exp());
        assert_abs_diff_eq!(p_plus, 0.880797, epsilon = 1e-6);
        let s = coin().sampler(&[1.0]).unwrap();
        let mut plus = 0usize;
        let mut b = [0.0];
        for _ in 0..n {
            s.sample_into(&mut rng, &mut b);
            plus += (b[0] > 0.0) as usize;
        }
        let se = (p_plus * (1.0 - p_plus) / n as f64).sqrt();
        assert!((plus as f64 / n as f64 - p_plus).abs() < 4.0 * se);
    }

    #[test]
    fn untilted_sampling_has_untilted_mean() {
        let m = IidModel::scalar_lattice(&[-2.0, 0.0, 1.0], &[0.28, 0.12, 0.6]).unwrap();
        let mut rng = chunk_rng(3, 0);
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|_| m.sample_increment_tilted(&[0.0], &mut rng).unwrap()[0]).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - m.mean()[0]).abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn tilted_lattice_chi_square() {
        let m = IidModel::scalar_lattice(&[-2.0, 0.0, 1.0, 3.0], &[0.1, 0.4, 0.3, 0.2]).unwrap();
        let theta = [0.4];
        let pmf = m.tilted_pmf(&theta).unwrap();
        let s = m.sampler(&theta).unwrap();
        let mut rng = chunk_rng(5, 2);
        let n = 100_000;
        let mut counts = [0usize; 4];
        let mut b = [0.0];
        for _ in 0..n {
            s.sample_into(&mut rng, &mut b);
            let idx = [-2.0, 0.0, 1.0, 3.0].iter().position(|v| *v == b[0]).unwrap();
            counts[idx] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&pmf)
            .map(|(c, p)| (*c as f64 - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        // chi-square(3) upper 1e-3 quantile
        assert!(chi2 < 16.266, "chi2 = {chi2}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn model() -> IidModel {
            IidModel::scalar_lattice(&[-2.0, 0.0, 1.0, 3.0], &[0.1, 0.4, 0.3, 0.2]).unwrap()
        }

        proptest! {
            #[test]
            fn rate_is_nonnegative_and_round_trips(mu in -1.9f64..2.9) {
                let m = model();
                let tp = m.tilt_for_mean(&[mu], 1e-10).unwrap();
                prop_assert!(tp.phi >= 0.0);
                let g = m.cgf_gradient(&tp.theta).unwrap()[0];
                prop_assert!((g - mu).abs() <= 1e-10);
            }

            #[test]
            fn rate_is_convex(a in -1.9f64..2.9, b in -1.9f64..2.9, t in 0.01f64..0.99) {
                let m = model();
                let mid = t * a + (1.0 - t) * b;
                let lhs = m.rate(&[mid]).unwrap();
                let rhs = t * m.rate(&[a]).unwrap() + (1.0 - t) * m.rate(&[b]).unwrap();
                prop_assert!(lhs <= rhs + 1e-9);
            }

            #[test]
            fn gaussian_rate_is_half_squared_distance(x in -3.0f64..3.0, y in -3.0f64..3.0) {
                let m = IidModel::gaussian(vec![0.5, -1.0]).unwrap();
                let r = m.rate(&[x, y]).unwrap();
                let expect = 0.5 * ((x - 0.5).powi(2) + (y + 1.0).powi(2));
                prop_assert!((r - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rate_vanishes_at_mean() {
        let m = IidModel::scalar_lattice(&[-2.0, 0.0, 1.0, 3.0], &[0.1, 0.4, 0.3, 0.2]).unwrap();
        assert!(m.rate(&m.mean()).unwrap() < 1e-10);
    }
}
