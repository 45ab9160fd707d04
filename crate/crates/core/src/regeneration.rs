//! Regeneration at an atom for finite chains.
//!
//! Returns of the chain to a fixed state split a path into independent
//! excursions. They give a Monte Carlo representation of the Perron
//! eigenfunction,
//!
//! ```text
//! r(x; theta) / r(atom; theta) = E_x exp(theta' S_tau - tau psi(theta)),
//! ```
//!
//! with `tau` the first visit to the atom at a time `n >= 1`, and a modified
//! likelihood-ratio martingale that drops the eigenfunction after the first
//! regeneration `U` following a stopping time `T`:
//!
//! ```text
//! Z_n = exp(theta' S_n - n psi) r(X_n) / r(atom)     n < U
//! Z_n = exp(theta' S_U - U psi)                       n >= U
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{run_chunks, EngineOptions, RunOutcome};
use crate::events::at_least;
use crate::exp_family::dot;
use crate::markov_additive::{MarkovAdditiveModel, PerronSolution, DEFAULT_PERRON_TOL};
use crate::model::Model;
use crate::rng::chunk_rng;

pub const DEFAULT_EXCURSION_CAP: usize = 1_000_000;
pub const DEFAULT_MARTINGALE_HORIZON: usize = 8;

/// The state with the largest stationary probability, lowest index on ties.
pub fn default_atom(model: &Model) -> usize {
    match model {
        Model::Iid(_) => 0,
        Model::Markov(m) => m
            .stationary()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv + 1e-12 { (i, *v) } else { (bi, bv) })
            .0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegenerationSchedule {
    pub atom: usize,
    /// Times `n >= 1` with `X_n = atom`, increasing.
    pub times: Vec<usize>,
    /// First regeneration strictly after the supplied stopping time, if the
    /// path is long enough to contain it.
    pub post_stop: Option<usize>,
}

/// Scans `states = (X_0, ..., X_N)` for visits to `atom`.
pub fn regeneration_times(states: &[usize], atom: usize, stop: Option<usize>) -> RegenerationSchedule {
    let times: Vec<usize> = states
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, x)| **x == atom)
        .map(|(n, _)| n)
        .collect();
    let post_stop = stop.and_then(|t| times.iter().copied().find(|u| *u > t));
    RegenerationSchedule { atom, times, post_stop }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenfunctionEstimate {
    /// Estimate of `r(start; theta)` under the normalisation of the Perron vector.
    pub estimate: f64,
    pub std_error: f64,
    /// Mean of `exp(theta' S_tau - tau psi)`, an estimate of `r(start) / r(atom)`.
    pub raw: f64,
    pub raw_std_error: f64,
    pub runs: u64,
}

/// Monte Carlo over `m` excursions from `start` to the atom under the
/// untilted chain, rescaled by `r(atom)` so that it estimates the Perron
/// vector with `sum_x pi(x) r(x) = 1`.
pub fn empirical_eigenfunction(
    model: &MarkovAdditiveModel,
    theta: &[f64],
    start: usize,
    atom: usize,
    m: u64,
    seed: u64,
    opts: EngineOptions,
) -> Result<EigenfunctionEstimate> {
    if start >= model.states() || atom >= model.states() {
        return Err(Error::Config("start or atom state out of range".into()));
    }
    let tilted = model.perron(theta, DEFAULT_PERRON_TOL)?;
    let sampler = model.sampler(&model.perron(&vec![0.0; model.dim()], DEFAULT_PERRON_TOL)?);
    let psi = tilted.psi;
    let stats = run_chunks(m, seed, opts, |rng, _| {
        let mut x = start;
        let mut s = vec![0.0; model.dim()];
        let mut xi = vec![0.0; model.dim()];
        for n in 1..=DEFAULT_EXCURSION_CAP {
            x = sampler.step(x, rng, &mut xi);
            s.iter_mut().zip(&xi).for_each(|(a, b)| *a += b);
            if x == atom {
                return Ok(RunOutcome {
                    contribution: (dot(theta, &s) - n as f64 * psi).exp(),
                    hit: true,
                    truncated: false,
                });
            }
        }
        Err(Error::IterationCap {
            what: "excursion to the atom",
            iterations: DEFAULT_EXCURSION_CAP,
            residual: f64::NAN,
        })
    })?;
    let scale = tilted.r[atom];
    Ok(EigenfunctionEstimate {
        estimate: stats.mean() * scale,
        std_error: stats.std_error() * scale,
        raw: stats.mean(),
        raw_std_error: stats.std_error(),
        runs: stats.count,
    })
}

/// Spectral radius of `E[exp(2 theta' xi - 2 psi) 1{X_1 = y} | X_0 = x]`
/// restricted to the states other than `atom`. Below one exactly when the
/// excursion weight `exp(theta' S_tau - tau psi)` has a finite second moment
/// from every start, which is what the standard error of
/// [`empirical_eigenfunction`] relies on.
pub fn excursion_second_moment_radius(model: &MarkovAdditiveModel, theta: &[f64], atom: usize) -> Result<f64> {
    let psi = model.perron(theta, DEFAULT_PERRON_TOL)?.psi;
    let doubled: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
    let kernel = model.tilted_kernel(&doubled);
    let keep: Vec<usize> = (0..model.states()).filter(|x| *x != atom).collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    let scale = (-2.0 * psi).exp();
    let m = nalgebra::DMatrix::from_fn(keep.len(), keep.len(), |i, j| kernel[keep[i]][keep[j]] * scale);
    Ok(m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Stopping rules for martingale checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopRule {
    /// `T = k`.
    Fixed { k: usize },
    /// First `n >= 1` with the first coordinate of `S_n` at least `level`.
    FirstSumAtLeast { level: f64 },
}

impl StopRule {
    fn stops(&self, n: usize, s: &[f64]) -> bool {
        match self {
            StopRule::Fixed { k } => n == *k,
            StopRule::FirstSumAtLeast { level } => n >= 1 && at_least(s[0], *level),
        }
    }

    /// The stopping time along `sums = (S_0, ..., S_N)`, if reached.
    pub fn time(&self, sums: &[Vec<f64>]) -> Option<usize> {
        sums.iter().enumerate().find(|(n, s)| self.stops(*n, s)).map(|(n, _)| n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePath {
    /// `Z_0, ..., Z_N`.
    pub values: Vec<f64>,
    pub post_stop: Option<usize>,
}

/// `Z_n` along a recorded path with `states = (X_0..X_N)` and
/// `sums = (S_0..S_N)`, `S_0 = 0`.
pub fn martingale_path(
    states: &[usize],
    sums: &[Vec<f64>],
    schedule: &RegenerationSchedule,
    perron: &PerronSolution,
) -> MartingalePath {
    let theta = &perron.theta;
    let r_atom = perron.r[schedule.atom];
    let frozen = schedule
        .post_stop
        .map(|u| (dot(theta, &sums[u]) - u as f64 * perron.psi).exp());
    let values = (0..states.len())
        .map(|n| match (schedule.post_stop, frozen) {
            (Some(u), Some(z)) if n >= u => z,
            _ => (dot(theta, &sums[n]) - n as f64 * perron.psi).exp() * perron.r[states[n]] / r_atom,
        })
        .collect();
    MartingalePath {
        values,
        post_stop: schedule.post_stop,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDefect {
    /// `max |E[Z_{n+1} | history] - Z_n|` over all histories.
    pub modified: f64,
    /// The same for the stopped likelihood ratio `W_{n ^ U}`.
    pub stopped: f64,
    pub histories: u64,
}

#[derive(Clone)]
struct Node {
    x: usize,
    n: usize,
    s: Vec<f64>,
    stop: Option<usize>,
    regen: Option<(usize, Vec<f64>, usize)>,
}

struct Checker<'a> {
    moves: Vec<Vec<(usize, f64, Vec<f64>)>>,
    rule: StopRule,
    atom: usize,
    perron: &'a PerronSolution,
    horizon: usize,
    defect: MartingaleDefect,
}

impl Checker<'_> {
    fn z(&self, node: &Node) -> f64 {
        let p = self.perron;
        match &node.regen {
            Some((u, su, _)) => (dot(&p.theta, su) - *u as f64 * p.psi).exp(),
            None => (dot(&p.theta, &node.s) - node.n as f64 * p.psi).exp() * p.r[node.x] / p.r[self.atom],
        }
    }

    fn w(&self, node: &Node) -> f64 {
        let p = self.perron;
        match &node.regen {
            Some((u, su, xu)) => (dot(&p.theta, su) - *u as f64 * p.psi).exp() * p.r[*xu],
            None => (dot(&p.theta, &node.s) - node.n as f64 * p.psi).exp() * p.r[node.x],
        }
    }

    fn child(&self, node: &Node, y: usize, xi: &[f64]) -> Node {
        let n = node.n + 1;
        let s: Vec<f64> = node.s.iter().zip(xi).map(|(a, b)| a + b).collect();
        let stop = node.stop.or_else(|| self.rule.stops(n, &s).then_some(n));
        let regen = node.regen.clone().or_else(|| match stop {
            Some(t) if n > t && y == self.atom => Some((n, s.clone(), y)),
            _ => None,
        });
        Node { x: y, n, s, stop, regen }
    }

    fn visit(&mut self, node: Node) {
        if node.n == self.horizon {
            return;
        }
        self.defect.histories += 1;
        let mut ez = 0.0;
        let mut ew = 0.0;
        let moves = self.moves[node.x].clone();
        let children: Vec<(f64, Node)> = moves.iter().map(|(y, p, xi)| (*p, self.child(&node, *y, xi))).collect();
        for (p, c) in &children {
            ez += p * self.z(c);
            ew += p * self.w(c);
        }
        let dz = (ez - self.z(&node)).abs();
        let dw = (ew - self.w(&node)).abs();
        self.defect.modified = self.defect.modified.max(dz);
        self.defect.stopped = self.defect.stopped.max(dw);
        for (_, c) in children {
            self.visit(c);
        }
    }
}

/// Checks `E[Z_{n+1} | F_n] = Z_n` on every history up to `horizon` by
/// enumeration. Here the regeneration times are functions of the states, so
/// the filtration of the chain is the right one.
pub fn verify_martingale_exact(
    model: &Model,
    theta: &[f64],
    rule: StopRule,
    atom: usize,
    horizon: usize,
    cap: usize,
) -> Result<MartingaleDefect> {
    if horizon > cap {
        return Err(Error::Refused(format!("horizon {horizon} exceeds the cap {cap}")));
    }
    let perron = match model {
        Model::Markov(m) => m.perron(theta, DEFAULT_PERRON_TOL)?,
        Model::Iid(m) => {
            let psi = m.cgf(theta)?;
            PerronSolution {
                theta: theta.to_vec(),
                psi,
                r: vec![1.0],
                tilted_transition: vec![vec![1.0]],
                tilted_stationary: vec![1.0],
                drift: m.cgf_gradient(theta)?,
            }
        }
    };
    let moves = (0..model.states()).map(|x| model.transitions(x)).collect::<Result<Vec<_>>>()?;
    let mut checker = Checker {
        moves,
        rule,
        atom,
        perron: &perron,
        horizon,
        defect: MartingaleDefect {
            modified: 0.0,
            stopped: 0.0,
            histories: 0,
        },
    };
    for x0 in 0..model.states() {
        let s = vec![0.0; model.dim()];
        let stop = rule.stops(0, &s).then_some(0);
        checker.visit(Node {
            x: x0,
            n: 0,
            s,
            stop,
            regen: None,
        });
    }
    Ok(checker.defect)
}

/// Statistical martingale check for chains whose emissions cannot be
/// enumerated: simulates `m` paths under the untilted chain and tests that
/// the mean of `Z_{n+1} - Z_n` vanishes within every bin
/// `(n, X_n, n >= U)` holding at least `min_bin` samples. Returns the
/// largest absolute t-statistic.
pub fn martingale_increment_test(
    model: &MarkovAdditiveModel,
    theta: &[f64],
    rule: StopRule,
    atom: usize,
    horizon: usize,
    m: u64,
    seed: u64,
) -> Result<f64> {
    const MIN_BIN: u64 = 50;
    let perron = model.perron(theta, DEFAULT_PERRON_TOL)?;
    let sampler = model.sampler(&model.perron(&vec![0.0; model.dim()], DEFAULT_PERRON_TOL)?);
    let k = model.states();
    let bins = horizon * k * 2;
    let mut count = vec![0u64; bins];
    let mut sum = vec![0.0f64; bins];
    let mut sum_sq = vec![0.0f64; bins];
    let initial = crate::exp_family::cumulative(&model.initial_distribution());
    let mut rng = chunk_rng(seed, 0);
    let mut xi = vec![0.0; model.dim()];
    for _ in 0..m {
        let x0 = crate::exp_family::draw_index(&initial, &mut rng);
        let mut states = vec![x0];
        let mut sums = vec![vec![0.0; model.dim()]];
        for _ in 0..horizon {
            let x = sampler.step(*states.last().expect("nonempty"), &mut rng, &mut xi);
            let s: Vec<f64> = sums.last().expect("nonempty").iter().zip(&xi).map(|(a, b)| a + b).collect();
            states.push(x);
            sums.push(s);
        }
        let schedule = regeneration_times(&states, atom, rule.time(&sums));
        let z = martingale_path(&states, &sums, &schedule, &perron).values;
        for n in 0..horizon {
            let after = schedule.post_stop.is_some_and(|u| n >= u) as usize;
            let b = (n * k + states[n]) * 2 + after;
            let d = z[n + 1] - z[n];
            count[b] += 1;
            sum[b] += d;
            sum_sq[b] += d * d;
        }
    }
    let mut worst = 0.0f64;
    for b in 0..bins {
        let c = count[b];
        if c < MIN_BIN {
            continue;
        }
        let mean = sum[b] / c as f64;
        let var = (sum_sq[b] / c as f64 - mean * mean).max(0.0) * c as f64 / (c - 1) as f64;
        if var == 0.0 {
            // a frozen bin has zero increments
            worst = worst.max(if mean == 0.0 { 0.0 } else { f64::INFINITY });
            continue;
        }
        worst = worst.max(mean.abs() / (var / c as f64).sqrt());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov_additive::InitialLaw;
    use crate::model::presets;
    use approx::assert_abs_diff_eq;

    #[test]
    fn schedule_examples() {
        // states listed as X_1..X_5 = (2, 1, 3, 1, 1), labels shifted to 0-based
        let s = regeneration_times(&[2, 1, 0, 2, 0, 0], 0, None);
        assert_eq!(s.times, vec![2, 4, 5]);
        let s = regeneration_times(&[2, 1, 0, 2, 0, 0], 0, Some(2));
        assert_eq!(s.post_stop, Some(4));
        let single = regeneration_times(&[0; 7], 0, Some(3));
        assert_eq!(single.times, (1..7).collect::<Vec<_>>());
        assert_eq!(single.post_stop, Some(4));
        assert_eq!(regeneration_times(&[0, 1, 1], 0, Some(1)).post_stop, None);
    }

    #[test]
    fn default_atom_breaks_ties_low() {
        assert_eq!(default_atom(&Model::Markov(presets::three_state_walk())), 0);
        let skew = MarkovAdditiveModel::with_destination_increments(
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![vec![0.0], vec![1.0]],
            InitialLaw::Stationary,
        )
        .unwrap();
        assert_eq!(default_atom(&Model::Markov(skew)), 1);
    }

    // Expected hitting times of the atom solve (I - P_restricted) h = 1.
    #[test]
    fn first_return_time_matches_linear_system() {
        let model = presets::three_state_walk();
        let p = model.transition();
        let atom = 0;
        // restrict to states 1, 2
        let a = nalgebra::Matrix2::new(1.0 - p[1][1], -p[1][2], -p[2][1], 1.0 - p[2][2]);
        let h = a.lu().solve(&nalgebra::Vector2::new(1.0, 1.0)).unwrap();
        let expected_from_2 = h[1];
        let sampler = model.sampler(&model.perron(&[0.0], DEFAULT_PERRON_TOL).unwrap());
        let mut rng = chunk_rng(17, 0);
        let m = 100_000;
        let mut buf = [0.0];
        let taus: Vec<f64> = (0..m)
            .map(|_| {
                let mut x = 2;
                let mut n = 0;
                loop {
                    x = sampler.step(x, &mut rng, &mut buf);
                    n += 1;
                    if x == atom {
                        return n as f64;
                    }
                }
            })
            .collect();
        let mean = taus.iter().sum::<f64>() / m as f64;
        let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((mean - expected_from_2).abs() < 4.0 * (var / m as f64).sqrt());
    }

    #[test]
    fn eigenfunction_at_zero_is_one() {
        let model = presets::three_state_walk();
        for start in 0..3 {
            let e = empirical_eigenfunction(&model, &[0.0], start, 0, 1000, 3, EngineOptions::sequential()).unwrap();
            assert_eq!(e.estimate, 1.0);
            assert_eq!(e.std_error, 0.0);
        }
    }

    #[test]
    fn second_moment_radius_reference_values() {
        let model = presets::three_state_walk();
        let r = |t: f64| excursion_second_moment_radius(&model, &[t], 0).unwrap();
        assert_abs_diff_eq!(r(-0.507), 0.4275, epsilon = 1e-3);
        assert_abs_diff_eq!(r(0.2), 0.9064, epsilon = 1e-3);
        assert!(r(0.815) > 1.4);
        assert_abs_diff_eq!(r(0.0), 0.5 + 0.06f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn eigenfunction_matches_perron() {
        // Positive theta is kept small: above about 0.3 the excursion weight
        // has infinite variance and a sigma-based check is meaningless.
        let model = presets::three_state_walk();
        for theta in [-0.507, 0.2] {
            let perron = model.perron(&[theta], DEFAULT_PERRON_TOL).unwrap();
            for start in 0..3 {
                let e = empirical_eigenfunction(&model, &[theta], start, 0, 20_000, 11 + start as u64, EngineOptions::default())
                    .unwrap();
                assert!(
                    (e.estimate - perron.r[start]).abs() < 4.0 * e.std_error,
                    "theta {theta} start {start}: {} vs {}",
                    e.estimate,
                    perron.r[start]
                );
            }
        }
    }

    #[test]
    fn martingale_path_properties() {
        let model = presets::three_state_walk();
        let states = vec![1, 2, 0, 2, 0, 1];
        // S_0 = 0 and each step adds the new label plus one
        let sums: Vec<Vec<f64>> = (0..states.len())
            .map(|n| vec![states[1..=n].iter().map(|x| *x as f64 + 1.0).sum()])
            .collect();
        let zero = model.perron(&[0.0], DEFAULT_PERRON_TOL).unwrap();
        let sched = regeneration_times(&states, 0, Some(1));
        assert_eq!(sched.post_stop, Some(2));
        let z = martingale_path(&states, &sums, &sched, &zero);
        assert!(z.values.iter().all(|v| *v == 1.0));
        let tilt = model.perron(&[0.815], DEFAULT_PERRON_TOL).unwrap();
        let z = martingale_path(&states, &sums, &sched, &tilt);
        assert!(z.values[2..].iter().all(|v| *v == z.values[2]));
        assert!(z.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn iid_martingale_is_exponential() {
        let states = vec![0; 5];
        let incs = [0.3, -1.2, 0.8, 2.0];
        let mut sums = vec![vec![0.0]];
        for x in incs {
            let last = sums.last().unwrap()[0];
            sums.push(vec![last + x]);
        }
        let perron = PerronSolution {
            theta: vec![1.0],
            psi: 0.5,
            r: vec![1.0],
            tilted_transition: vec![vec![1.0]],
            tilted_stationary: vec![1.0],
            drift: vec![1.0],
        };
        let sched = regeneration_times(&states, 0, Some(10));
        let z = martingale_path(&states, &sums, &sched, &perron);
        for n in 0..5 {
            assert_abs_diff_eq!(z.values[n], (sums[n][0] - 0.5 * n as f64).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn exact_defects_vanish() {
        let model = Model::Markov(presets::three_state_walk());
        let d = verify_martingale_exact(&model, &[-0.507], StopRule::FirstSumAtLeast { level: 5.0 }, 0, 6, 8).unwrap();
        assert!(d.modified <= 1e-10 && d.stopped <= 1e-10, "{d:?}");
        let d = verify_martingale_exact(&model, &[0.0], StopRule::Fixed { k: 2 }, 0, 6, 8).unwrap();
        assert_eq!(d.modified, 0.0);
        let two = Model::Markov(
            MarkovAdditiveModel::with_destination_increments(
                vec![vec![0.35, 0.65], vec![0.8, 0.2]],
                vec![vec![-1.0], vec![1.5]],
                InitialLaw::State(0),
            )
            .unwrap(),
        );
        let d = verify_martingale_exact(&two, &[0.6], StopRule::Fixed { k: 2 }, 1, 5, 8).unwrap();
        assert!(d.modified <= 1e-10, "{d:?}");
        assert!(verify_martingale_exact(&two, &[0.6], StopRule::Fixed { k: 2 }, 1, 9, 8).is_err());
    }

    #[test]
    fn defect_vanishes_when_atom_value_is_far_from_one() {
        let model = presets::three_state_walk();
        let perron = model.perron(&[0.815], DEFAULT_PERRON_TOL).unwrap();
        assert!((perron.r[0] - 1.0).abs() > 0.1);
        let d = verify_martingale_exact(&Model::Markov(model), &[0.815], StopRule::Fixed { k: 1 }, 0, 4, 8).unwrap();
        assert!(d.modified <= 1e-10);
    }

    #[test]
    fn gaussian_martingale_statistical() {
        let model = presets::regime_switching_gaussian();
        let t = martingale_increment_test(
            &model,
            &[0.4, 0.1, -0.2],
            StopRule::FirstSumAtLeast { level: 1.0 },
            0,
            6,
            40_000,
            23,
        )
        .unwrap();
        assert!(t < 4.0, "max |t| = {t}");
    }
}
