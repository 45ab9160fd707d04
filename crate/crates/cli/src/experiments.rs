//! Experiment orchestration. Rows run one after another; each row gets its
//! own seed derived from the master seed and its position, so any row can be
//! rerun alone.

use std::io::Write;

use anyhow::{anyhow, Result};
use exceedmc_core::estimators::{
    default_max_steps, direct_mixture, estimate_event, estimate_first_passage, exact_probability_oracle,
    first_passage_mixture, trace_runs, EngineOptions, EventSpec,
};
use exceedmc_core::events::{BoundaryEvent, GFunction, TailEvent};
use exceedmc_core::exp_family::IidModel;
use exceedmc_core::mixing::{BoundaryGridParams, WeightRule};
use exceedmc_core::model::Model;
use exceedmc_core::regeneration::{
    default_atom, empirical_eigenfunction, excursion_second_moment_radius, verify_martingale_exact, StopRule,
};
use exceedmc_core::{EstimateReport, MixtureSpec};
use serde::Serialize;

use crate::config::{EventConfig, Experiment, ExperimentConfig, GridFlavor, MethodConfig};
use crate::report::ResultRow;

/// Runs recorded per row when tracing.
pub const TRACE_RUNS: u64 = 100;
/// Tolerance of the exact checks in `verify`.
pub const EXACT_TOLERANCE: f64 = 1e-10;
/// Standard errors allowed by the statistical checks in `verify`.
pub const SIGMA_TOLERANCE: f64 = 4.0;

/// Optional side outputs.
#[derive(Default)]
pub struct Sinks<'a> {
    /// Newline-delimited trajectory records.
    pub trace: Option<&'a mut dyn Write>,
    /// Mixture components as CSV.
    pub mixtures: Option<&'a mut dyn Write>,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    /// Human-readable diagnostics, not part of the report.
    pub notes: Vec<String>,
}

pub fn row_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Runner<'s, 'a> {
    id: &'static str,
    model: Model,
    m: u64,
    master: u64,
    opts: EngineOptions,
    next: u64,
    sinks: &'s mut Sinks<'a>,
    mixture_header: bool,
}

#[derive(Serialize)]
struct TraceLine<'r> {
    experiment_id: &'r str,
    method: &'r str,
    n_or_c: f64,
    #[serde(flatten)]
    record: &'r exceedmc_core::TrajectoryRecord,
}

impl<'s, 'a> Runner<'s, 'a> {
    fn new(id: &'static str, model: Model, cfg: &ExperimentConfig, sinks: &'s mut Sinks<'a>) -> Self {
        Self {
            id,
            model,
            m: cfg.runs,
            master: cfg.seed,
            opts: cfg.engine_options(),
            next: 0,
            sinks,
            mixture_header: false,
        }
    }

    fn seed(&mut self) -> u64 {
        let s = row_seed(self.master, self.next);
        self.next += 1;
        s
    }

    /// Builds the proposal, estimates, and feeds the side outputs.
    fn run(
        &mut self,
        label: &str,
        n_or_c: f64,
        event: &EventSpec,
        mixture: impl FnOnce(&Model) -> exceedmc_core::Result<MixtureSpec>,
    ) -> std::result::Result<EstimateReport, (u64, anyhow::Error)> {
        let seed = self.seed();
        let go = || -> Result<EstimateReport> {
            let mix = mixture(&self.model)?;
            let report = match event {
                EventSpec::FirstPassage { boundary, c, max_steps } if label != "direct" => {
                    estimate_first_passage(&self.model, &mix, boundary, *c, Some(*max_steps), self.m, seed, self.opts)?
                }
                _ => {
                    let mut r = estimate_event(&self.model, &mix, event, self.m, seed, self.opts)?;
                    if label == "direct" {
                        r.method = "direct".into();
                    }
                    r
                }
            };
            if let Some(w) = self.sinks.mixtures.as_deref_mut() {
                dump_mixture(w, &mut self.mixture_header, self.id, &report.method, n_or_c, &mix)?;
            }
            if let Some(w) = self.sinks.trace.as_deref_mut() {
                for record in trace_runs(&self.model, &mix, event, self.m.min(TRACE_RUNS), seed)? {
                    let line = TraceLine {
                        experiment_id: self.id,
                        method: &report.method,
                        n_or_c,
                        record: &record,
                    };
                    serde_json::to_writer(&mut *w, &line)?;
                    writeln!(w)?;
                }
            }
            Ok(report)
        };
        go().map_err(|e| (seed, e))
    }
}

fn dump_mixture(w: &mut dyn Write, header: &mut bool, id: &str, method: &str, n_or_c: f64, mix: &MixtureSpec) -> Result<()> {
    if !*header {
        writeln!(w, "experiment_id,method,n_or_c,component,weight,mu,theta,psi,phi")?;
        *header = true;
    }
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    for (k, c) in mix.components().iter().enumerate() {
        let p = c.point();
        writeln!(
            w,
            "{id},{method},{n_or_c},{k},{},{},{},{},{}",
            c.weight,
            join(&p.mu),
            join(&p.theta),
            p.psi,
            p.phi
        )?;
    }
    Ok(())
}

/// Turns a group of estimates sharing one `n` or `c` into rows. The second
/// moment ratio of every row uses the estimate at `reference` as `p`.
fn group_rows(
    id: &str,
    n_or_c: f64,
    results: Vec<(&str, std::result::Result<EstimateReport, (u64, anyhow::Error)>)>,
    reference: usize,
) -> Vec<ResultRow> {
    let p = match &results[reference].1 {
        Ok(r) => r.estimate,
        Err(_) => f64::NAN,
    };
    results
        .into_iter()
        .map(|(label, r)| match r {
            Ok(rep) => ResultRow::from_report(id, n_or_c, &rep, p),
            Err((seed, e)) => ResultRow::failed(id, label, n_or_c, seed, &format!("{e:#}")),
        })
        .collect()
}

pub fn example_one_event(n: usize) -> TailEvent {
    TailEvent::new(GFunction::SquaredDistance { center: vec![2.1] }, 0.36, n)
}

pub fn example_two_event(c: f64, n0: usize, n1: usize) -> BoundaryEvent {
    BoundaryEvent::new(GFunction::NormSquared, c, n0, n1)
}

/// Runs the configured experiment. The config must already be validated and
/// resolved.
pub fn run_experiment(cfg: &ExperimentConfig, sinks: &mut Sinks) -> Result<Outcome> {
    let spec = cfg.model.as_ref().ok_or_else(|| anyhow!("config has no model block"))?;
    let model = spec.build()?;
    match &cfg.experiment {
        Experiment::Table1 { ns, means, phi } => {
            let mut runner = Runner::new("table1", model, cfg, sinks);
            let mut out = Outcome::default();
            for &n in ns {
                let event = EventSpec::Tail(example_one_event(n));
                let direct = runner.run("direct", n as f64, &event, direct_mixture);
                let single = runner.run("single-tilt", n as f64, &event, |m| MixtureSpec::single_tilt(m, &[means[0]]));
                let mix = runner.run("finite-mixture", n as f64, &event, |m| {
                    MixtureSpec::finite(
                        m,
                        &[vec![means[0]], vec![means[1]]],
                        &WeightRule::Exponential {
                            n: n as f64,
                            phi: Some(phi.clone()),
                        },
                    )
                });
                out.rows.extend(group_rows(
                    "table1",
                    n as f64,
                    vec![("direct", direct), ("single-tilt", single), ("finite-mixture", mix)],
                    2,
                ));
            }
            Ok(out)
        }
        Experiment::Table2 { rows, b, spacing, direct } => {
            let mut runner = Runner::new("table2", model, cfg, sinks);
            let mut out = Outcome::default();
            for r in rows {
                let event = EventSpec::Boundary(example_two_event(r.c, r.n0, r.n1));
                let mut group = Vec::new();
                if *direct {
                    group.push(("direct", runner.run("direct", r.c, &event, direct_mixture)));
                }
                let is = runner.run("regime-grid", r.c, &event, |m| MixtureSpec::regime_grid(m, r.c, r.n0, r.n1, *b, *spacing));
                group.push(("regime-grid", is));
                let reference = group.len() - 1;
                let rows = group_rows("table2", r.c, group, reference);
                out.rows.extend(rows);
            }
            Ok(out)
        }
        Experiment::Counterexample { level, ladder } => counterexample(cfg, model, *level, ladder, sinks),
        Experiment::Estimate { event, method } => {
            let mut runner = Runner::new("estimate", model, cfg, sinks);
            let (spec, label) = estimate_event_spec(&runner.model, event, method)?;
            let n_or_c = event.n_or_c();
            let method = method.clone();
            let g_event = event.clone();
            let result = runner.run(label, n_or_c, &spec, move |m| build_method(m, &g_event, &method));
            Ok(Outcome {
                rows: group_rows("estimate", n_or_c, vec![(label, result)], 0),
                notes: Vec::new(),
            })
        }
        Experiment::Verify {
            thetas,
            horizon,
            identity_horizon,
        } => verify(cfg, &model, thetas, *horizon, *identity_horizon),
    }
}

fn estimate_event_spec(model: &Model, event: &EventConfig, method: &MethodConfig) -> Result<(EventSpec, &'static str)> {
    let label = match method {
        MethodConfig::Direct => "direct",
        MethodConfig::SingleTilt { .. } => "single-tilt",
        MethodConfig::FiniteMixture { .. } => "finite-mixture",
        MethodConfig::GridMixture { flavor, .. } => match flavor {
            GridFlavor::TailGrid => "tail-grid",
            GridFlavor::BoundaryGrid => "boundary-grid",
            GridFlavor::RegimeGrid => "regime-grid",
        },
        MethodConfig::ZeroCgf { .. } => "zero-cgf",
    };
    let spec = match event {
        EventConfig::Tail { .. } => EventSpec::Tail(event.tail().unwrap()),
        EventConfig::Boundary { .. } => EventSpec::Boundary(event.boundary().unwrap()),
        EventConfig::FirstPassage { boundary, c, max_steps } => {
            let steps = match max_steps {
                Some(s) => *s,
                None => {
                    let mix = match method {
                        MethodConfig::Direct => direct_mixture(model)?,
                        _ => build_method(model, event, method)?,
                    };
                    default_max_steps(&mix, boundary, *c)
                }
            };
            EventSpec::FirstPassage {
                boundary: boundary.clone(),
                c: *c,
                max_steps: steps,
            }
        }
    };
    Ok((spec, label))
}

fn build_method(model: &Model, event: &EventConfig, method: &MethodConfig) -> exceedmc_core::Result<MixtureSpec> {
    use exceedmc_core::Error;
    match method {
        MethodConfig::Direct => direct_mixture(model),
        MethodConfig::SingleTilt { mu } => MixtureSpec::single_tilt(model, mu),
        MethodConfig::FiniteMixture { means, weights } => MixtureSpec::finite(model, means, weights),
        MethodConfig::ZeroCgf { weights } => match event {
            EventConfig::FirstPassage { boundary, .. } => first_passage_mixture(model, boundary, weights.as_deref()),
            _ => Err(Error::Config("zero-cgf needs a first-passage event".into())),
        },
        MethodConfig::GridMixture {
            flavor,
            spacing,
            lower,
            upper,
            b,
            delta,
            a,
            r,
            eps0,
            eps1,
            eps1_tail,
        } => match (flavor, event) {
            (GridFlavor::TailGrid, EventConfig::Tail { g, b, n }) => {
                let bounds = match (lower, upper) {
                    (Some(l), Some(u)) => Some((l.clone(), u.clone())),
                    (None, None) => None,
                    _ => return Err(Error::Config("give both lower and upper or neither".into())),
                };
                MixtureSpec::tail_grid(model, *n, *b, g, *spacing, bounds)
            }
            (GridFlavor::RegimeGrid, EventConfig::Boundary { g, c, n0, n1 }) => {
                if !matches!(g, GFunction::NormSquared) {
                    return Err(Error::Config("the regime grid is built for g = norm-squared".into()));
                }
                let b = b.ok_or_else(|| Error::Config("regime-grid needs b".into()))?;
                MixtureSpec::regime_grid(model, *c, *n0, *n1, b, *spacing)
            }
            (GridFlavor::BoundaryGrid, EventConfig::Boundary { g, c, n0, n1 }) => {
                let need = |v: &Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("boundary-grid needs {name}")));
                let (lower, upper) = match (lower, upper) {
                    (Some(l), Some(u)) => (l.clone(), u.clone()),
                    _ => model
                        .mean_box()
                        .ok_or_else(|| Error::Config("boundary-grid needs lower and upper for this model".into()))?,
                };
                let params = BoundaryGridParams {
                    g: g.clone(),
                    c: *c,
                    n0: *n0,
                    n1: *n1,
                    delta: need(delta, "delta")?,
                    a: need(a, "a")?,
                    r: need(r, "r")?,
                    eps0: need(eps0, "eps0")?,
                    eps1: need(eps1, "eps1")?,
                    eps1_tail: *eps1_tail,
                    spacing: *spacing,
                    lower,
                    upper,
                };
                MixtureSpec::boundary_grid(model, &params)
            }
            _ => Err(Error::Config("grid flavor does not match the event".into())),
        },
    }
}

/// Whether single tilting towards `a` is expected to blow up for
/// `|S_n| >= a n`: `theta_a + theta_{-a} > 0` with `phi(a) < phi(-a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupCheck {
    pub theta_pos: f64,
    pub theta_neg: f64,
    pub phi_pos: f64,
    pub phi_neg: f64,
    pub holds: bool,
}

pub fn blowup_check(model: &Model, a: f64) -> exceedmc_core::Result<BlowupCheck> {
    let pos = model.tilt_for_mean(&[a], exceedmc_core::exp_family::DEFAULT_TILT_TOL)?;
    let neg = model.tilt_for_mean(&[-a], exceedmc_core::exp_family::DEFAULT_TILT_TOL)?;
    let (tp, tn) = (pos.theta()[0], neg.theta()[0]);
    let (pp, pn) = (pos.point.phi, neg.point.phi);
    Ok(BlowupCheck {
        theta_pos: tp,
        theta_neg: tn,
        phi_pos: pp,
        phi_neg: pn,
        holds: tp + tn > 0.0 && pp < pn,
    })
}

fn counterexample(cfg: &ExperimentConfig, model: Model, a: f64, ladder: &[usize], sinks: &mut Sinks) -> Result<Outcome> {
    let check = blowup_check(&model, a)?;
    let flag = if check.holds {
        "blowup condition met"
    } else {
        "blowup condition unmet"
    };
    let mut out = Outcome::default();
    out.notes.push(format!(
        "theta(a) = {:.6}, theta(-a) = {:.6}, sum = {:.6}; phi(a) = {:.6}, phi(-a) = {:.6}; {flag}",
        check.theta_pos,
        check.theta_neg,
        check.theta_pos + check.theta_neg,
        check.phi_pos,
        check.phi_neg
    ));
    let mut runner = Runner::new("counterexample", model, cfg, sinks);
    for &n in ladder {
        let event = EventSpec::Tail(TailEvent::new(GFunction::Norm, a, n));
        let single = runner.run("single-tilt", n as f64, &event, |m| MixtureSpec::single_tilt(m, &[a]));
        let mix = runner.run("finite-mixture", n as f64, &event, |m| {
            MixtureSpec::finite(m, &[vec![a], vec![-a]], &WeightRule::Exponential { n: n as f64, phi: None })
        });
        for mut row in group_rows("counterexample", n as f64, vec![("single-tilt", single), ("finite-mixture", mix)], 1) {
            row.display = format!("{} [{flag}]", row.display);
            out.rows.push(row);
        }
    }
    Ok(out)
}

fn check_row(method: String, n_or_c: f64, value: f64, runs: u64, seconds: f64, seed: u64, pass: bool) -> ResultRow {
    ResultRow {
        experiment_id: "verify".into(),
        method,
        n_or_c,
        estimate: value,
        std_error: 0.0,
        runs,
        seconds,
        second_moment_ratio: f64::NAN,
        truncations: 0,
        seed,
        display: if pass { "pass".into() } else { "FAIL".into() },
    }
}

/// Two-point lattice walk used alongside the chain in the exact checks.
pub fn two_point_walk() -> Model {
    Model::Iid(IidModel::scalar_lattice(&[-1.0, 1.0], &[0.3, 0.7]).expect("valid lattice"))
}

/// Exact unbiasedness identity `sum Q L 1_A = P(A)` for every flavor and both
/// event kinds, on the chain and the two-point walk. Returns rows of
/// `|sum Q L 1_A - P(A)|`.
pub fn identity_rows(horizon: usize) -> Result<Vec<ResultRow>> {
    let chain = Model::Markov(exceedmc_core::model::presets::three_state_walk());
    let cases: Vec<(&str, Model, GFunction, f64, f64, [f64; 2])> = vec![
        ("chain", chain, GFunction::SquaredDistance { center: vec![2.1] }, 0.36, 1.5, [1.5, 2.7]),
        ("two-point", two_point_walk(), GFunction::SquaredDistance { center: vec![0.4] }, 0.25, 1.0, [-0.1, 0.9]),
    ];
    let mut rows = Vec::new();
    for (name, model, g, b, c, means) in cases {
        // at very short horizons the tail grid can have no attainable point
        let grid = match MixtureSpec::tail_grid(&model, horizon, b, &g, None, None) {
            Ok(m) => Some(m),
            Err(exceedmc_core::Error::EmptyMixture(why)) => {
                let mut row = check_row(format!("identity/{name}/tail-grid"), horizon as f64, f64::NAN, 0, 0.0, 0, true);
                row.display = format!("skipped: {why}");
                rows.push(row);
                None
            }
            Err(e) => return Err(e.into()),
        };
        let mut flavors: Vec<(&str, MixtureSpec)> = vec![
            (
                "finite-mixture",
                MixtureSpec::finite(
                    &model,
                    &[vec![means[0]], vec![means[1]]],
                    &WeightRule::Exponential {
                        n: horizon as f64,
                        phi: None,
                    },
                )?,
            ),
            ("single-tilt", MixtureSpec::single_tilt(&model, &[means[0]])?),
        ];
        if let Some(m) = grid {
            flavors.insert(0, ("tail-grid", m));
        }
        let events = [
            ("tail", EventSpec::Tail(TailEvent::new(g.clone(), b, horizon))),
            ("boundary", EventSpec::Boundary(BoundaryEvent::new(g.clone(), c, 2, horizon))),
        ];
        for (ename, event) in &events {
            for (fname, mix) in &flavors {
                let clock = std::time::Instant::now();
                let r = exact_probability_oracle(&model, event, Some(mix), horizon)?;
                let defect = (r.importance_identity.unwrap_or(f64::NAN) - r.probability).abs();
                rows.push(check_row(
                    format!("identity/{name}/{ename}/{fname}"),
                    horizon as f64,
                    defect,
                    r.paths,
                    clock.elapsed().as_secs_f64(),
                    0,
                    defect <= 1e-12,
                ));
            }
        }
    }
    Ok(rows)
}

/// Largest conditional-expectation defects of the modified and the stopped
/// likelihood-ratio martingales over every history of the chain.
pub fn martingale_rows(model: &Model, thetas: &[f64], horizon: usize) -> Result<Vec<ResultRow>> {
    let atom = default_atom(model);
    let rules = [
        ("fixed", StopRule::Fixed { k: (horizon / 2).max(1) }),
        ("first-sum", StopRule::FirstSumAtLeast { level: 2.0 * (horizon as f64 / 2.0).max(1.0) }),
    ];
    let mut rows = Vec::new();
    for &theta in thetas {
        for (rname, rule) in rules {
            let clock = std::time::Instant::now();
            let d = verify_martingale_exact(model, &[theta], rule, atom, horizon, horizon)?;
            let secs = clock.elapsed().as_secs_f64();
            for (kind, v) in [("modified", d.modified), ("stopped", d.stopped)] {
                rows.push(check_row(
                    format!("martingale/{kind}/{rname}/theta={theta}"),
                    horizon as f64,
                    v,
                    d.histories,
                    secs,
                    0,
                    v <= EXACT_TOLERANCE,
                ));
            }
        }
    }
    Ok(rows)
}

/// Excursion estimates of `r(x; theta)` against the Perron eigenvector. These
/// are statistical: a miss is reported as `outside`, and when the excursion
/// weight has infinite variance the standard error means little and the row
/// says so.
pub fn eigenfunction_rows(model: &Model, thetas: &[f64], m: u64, master: u64, opts: EngineOptions) -> Result<Vec<ResultRow>> {
    let Model::Markov(chain) = model else {
        return Ok(Vec::new());
    };
    let atom = default_atom(model);
    let mut rows = Vec::new();
    let mut k = 0;
    for &theta in thetas.iter().filter(|t| **t != 0.0) {
        let perron = chain.perron(&[theta], exceedmc_core::markov_additive::DEFAULT_PERRON_TOL)?;
        let radius = excursion_second_moment_radius(chain, &[theta], atom)?;
        for x in 0..chain.states() {
            let seed = row_seed(master, k);
            k += 1;
            let clock = std::time::Instant::now();
            let e = empirical_eigenfunction(chain, &[theta], x, atom, m, seed, opts)?;
            let within = (e.estimate - perron.r[x]).abs() <= SIGMA_TOLERANCE * e.std_error;
            let mut row = check_row(
                format!("eigenfunction/theta={theta}/x={x}"),
                theta,
                e.estimate,
                e.runs,
                clock.elapsed().as_secs_f64(),
                seed,
                true,
            );
            row.std_error = e.std_error;
            let verdict = if within { "within 4 s.e." } else { "outside 4 s.e." };
            let caveat = if radius >= 1.0 {
                format!("; infinite variance, radius {radius:.3}")
            } else {
                String::new()
            };
            row.display = format!(
                "{} (perron {:.4}, {verdict}{caveat})",
                crate::report::display(e.estimate, e.std_error),
                perron.r[x]
            );
            rows.push(row);
        }
    }
    Ok(rows)
}

fn verify(cfg: &ExperimentConfig, model: &Model, thetas: &[f64], horizon: usize, identity_horizon: usize) -> Result<Outcome> {
    let mut out = Outcome::default();
    out.rows.extend(martingale_rows(model, thetas, horizon)?);
    out.rows.extend(identity_rows(identity_horizon)?);
    out.rows.extend(eigenfunction_rows(model, thetas, cfg.runs, cfg.seed, cfg.engine_options())?);
    let exact = out.rows.iter().filter(|r| !r.method.starts_with("eigenfunction")).count();
    let failed = out.rows.iter().filter(|r| r.display == "FAIL").count();
    out.notes.push(format!("{exact} exact checks, {failed} failed"));
    Ok(out)
}
