//! Browser demo. Three operations on the built-in models: the tilt and rate
//! of the three-state chain, a direct/single-tilt/mixture comparison for the
//! two-sided chain tail, and the single-tilt blowup ladder.
//!
//! The `demo_*` functions are plain Rust so they can be tested natively; the
//! exported wrappers return JSON strings.

use exceedmc_core::estimators::{direct_mixture, estimate_event, EngineOptions, EstimateReport, EventSpec};
use exceedmc_core::events::{GFunction, TailEvent};
use exceedmc_core::exp_family::DEFAULT_TILT_TOL;
use exceedmc_core::mixing::WeightRule;
use exceedmc_core::model::{presets, Model};
use exceedmc_core::MixtureSpec;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Runs above this are refused; the page runs on the main thread.
pub const MAX_RUNS: u64 = 200_000;

const CHAIN_MEANS: [f64; 2] = [1.5, 2.7];
const SKEWED_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct TiltView {
    pub mu: f64,
    pub theta: f64,
    pub psi: f64,
    pub phi: f64,
    /// Right eigenvector, normalized so that `sum pi r = 1`.
    pub r: Vec<f64>,
    /// Stationary law of the tilted chain.
    pub tilted_pi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub method: String,
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    /// Second moment over the squared reference estimate.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Ladder {
    pub theta_pos: f64,
    pub theta_neg: f64,
    pub phi_pos: f64,
    pub phi_neg: f64,
    pub rows: Vec<Row>,
}

fn chain() -> Model {
    Model::Markov(presets::three_state_walk())
}

fn check_runs(runs: u64) -> Result<(), String> {
    if runs == 0 || runs > MAX_RUNS {
        return Err(format!("runs must be in 1..={MAX_RUNS}"));
    }
    Ok(())
}

fn row(method: &str, n: usize, r: &EstimateReport, reference: f64) -> Row {
    Row {
        method: method.into(),
        n,
        estimate: r.estimate,
        std_error: r.std_error,
        ratio: if reference > 0.0 { r.second_moment / (reference * reference) } else { f64::NAN },
    }
}

pub fn demo_tilt(mu: f64) -> Result<TiltView, String> {
    let model = chain();
    let tilt = model.tilt_for_mean(&[mu], DEFAULT_TILT_TOL).map_err(|e| e.to_string())?;
    let perron = tilt.perron.as_ref().ok_or("the chain tilt has no eigen-solution")?;
    Ok(TiltView {
        mu,
        theta: tilt.theta()[0],
        psi: tilt.psi(),
        phi: tilt.point.phi,
        r: perron.r.clone(),
        tilted_pi: perron.tilted_stationary.clone(),
    })
}

/// `phi(mu)` on an even grid over `[lo, hi]`; NaN where the mean is not attainable.
pub fn demo_rate_curve(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let model = chain();
    let points = points.max(2);
    (0..points)
        .map(|i| {
            let mu = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            model.tilt_for_mean(&[mu], DEFAULT_TILT_TOL).map(|t| t.point.phi).unwrap_or(f64::NAN)
        })
        .collect()
}

/// `P{ (S_n/n - 2.1)^2 >= 0.36 }` on the chain by three methods.
pub fn demo_compare(n: usize, runs: u64, seed: u64) -> Result<Vec<Row>, String> {
    check_runs(runs)?;
    if n == 0 {
        return Err("n must be positive".into());
    }
    let model = chain();
    let event = EventSpec::Tail(TailEvent::new(GFunction::SquaredDistance { center: vec![2.1] }, 0.36, n));
    let opts = EngineOptions::sequential();
    let go = |mix: exceedmc_core::Result<MixtureSpec>, s: u64| -> Result<EstimateReport, String> {
        let mix = mix.map_err(|e| e.to_string())?;
        estimate_event(&model, &mix, &event, runs, s, opts).map_err(|e| e.to_string())
    };
    let direct = go(direct_mixture(&model), seed)?;
    let single = go(MixtureSpec::single_tilt(&model, &[CHAIN_MEANS[0]]), seed.wrapping_add(1))?;
    let means = [vec![CHAIN_MEANS[0]], vec![CHAIN_MEANS[1]]];
    let rule = WeightRule::Exponential { n: n as f64, phi: None };
    let mix = go(MixtureSpec::finite(&model, &means, &rule), seed.wrapping_add(2))?;
    let p = mix.estimate;
    Ok(vec![row("direct", n, &direct, p), row("single-tilt", n, &single, p), row("finite-mixture", n, &mix, p)])
}

/// `P{ |S_n| >= 0.5 n }` for the skewed three-point walk: single tilt at the
/// lower-rate side against the two-point mixture, for each `n`.
pub fn demo_ladder(ns: &[u32], runs: u64, seed: u64) -> Result<Ladder, String> {
    check_runs(runs)?;
    let model = Model::Iid(presets::skewed_three_point());
    let a = SKEWED_LEVEL;
    let pos = model.tilt_for_mean(&[a], DEFAULT_TILT_TOL).map_err(|e| e.to_string())?;
    let neg = model.tilt_for_mean(&[-a], DEFAULT_TILT_TOL).map_err(|e| e.to_string())?;
    let opts = EngineOptions::sequential();
    let mut rows = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        let n = n as usize;
        if n == 0 {
            return Err("n must be positive".into());
        }
        let event = EventSpec::Tail(TailEvent::new(GFunction::Norm, a, n));
        let s = seed.wrapping_add(2 * k as u64);
        let single = MixtureSpec::single_tilt(&model, &[a]).map_err(|e| e.to_string())?;
        let rule = WeightRule::Exponential { n: n as f64, phi: None };
        let mix = MixtureSpec::finite(&model, &[vec![a], vec![-a]], &rule).map_err(|e| e.to_string())?;
        let single = estimate_event(&model, &single, &event, runs, s, opts).map_err(|e| e.to_string())?;
        let mix = estimate_event(&model, &mix, &event, runs, s + 1, opts).map_err(|e| e.to_string())?;
        rows.push(row("single-tilt", n, &single, mix.estimate));
        rows.push(row("finite-mixture", n, &mix, mix.estimate));
    }
    Ok(Ladder {
        theta_pos: pos.theta()[0],
        theta_neg: neg.theta()[0],
        phi_pos: pos.point.phi,
        phi_neg: neg.point.phi,
        rows,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tilt(mu: f64) -> Result<String, JsValue> {
    to_js(demo_tilt(mu))
}

#[wasm_bindgen]
pub fn rate_curve(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    demo_rate_curve(lo, hi, points)
}

#[wasm_bindgen]
pub fn compare(n: usize, runs: u32, seed: u32) -> Result<String, JsValue> {
    to_js(demo_compare(n, runs as u64, seed as u64))
}

#[wasm_bindgen]
pub fn ladder(ns: Vec<u32>, runs: u32, seed: u32) -> Result<String, JsValue> {
    to_js(demo_ladder(&ns, runs as u64, seed as u64))
}
