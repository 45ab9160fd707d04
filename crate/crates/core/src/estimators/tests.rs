use super::*;
use crate::events::GFunction;
use crate::exp_family::IidModel;
use crate::markov_additive::{InitialLaw, MarkovAdditiveModel};
use crate::mixing::WeightRule;
use crate::model::presets;
use approx::assert_abs_diff_eq;

fn three_state() -> Model {
    Model::Markov(presets::three_state_walk())
}

fn coin() -> Model {
    Model::Iid(IidModel::scalar_lattice(&[-1.0, 1.0], &[0.5, 0.5]).unwrap())
}

fn two_sided(n: usize) -> TailEvent {
    TailEvent::new(GFunction::SquaredDistance { center: vec![2.1] }, 0.36, n)
}

fn chain_mixture(model: &Model, n: usize) -> MixtureSpec {
    MixtureSpec::finite(
        model,
        &[vec![1.5], vec![2.7]],
        &WeightRule::Exponential {
            n: n as f64,
            phi: Some(vec![0.120, 0.251]),
        },
    )
    .unwrap()
}

fn within(a: f64, sa: f64, b: f64, sb: f64, k: f64) -> bool {
    (a - b).abs() <= k * (sa * sa + sb * sb).sqrt()
}

#[test]
fn sure_event_is_exactly_one() {
    let model = three_state();
    let direct = estimate_direct(&model, &EventSpec::Tail(TailEvent::sure(5)), 1000, 1, EngineOptions::default()).unwrap();
    assert_eq!(direct.estimate, 1.0);
    assert_eq!(direct.std_error, 0.0);
    let single = MixtureSpec::single_tilt(&model, &[2.7]).unwrap();
    let exact = exact_probability_oracle(&model, &EventSpec::Tail(TailEvent::sure(5)), Some(&single), 12).unwrap();
    assert_abs_diff_eq!(exact.probability, 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(exact.importance_identity.unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn oracle_coin_example() {
    let e = EventSpec::Tail(TailEvent::new(GFunction::Identity, 1.0, 4));
    let r = exact_probability_oracle(&coin(), &e, None, 12).unwrap();
    assert_eq!(r.probability, 0.0625);
    assert_eq!(r.paths, 16);
    let far = EventSpec::Tail(TailEvent::new(GFunction::Identity, 1.0, 13));
    assert!(matches!(exact_probability_oracle(&coin(), &far, None, 12), Err(crate::Error::Refused(_))));
}

#[test]
fn oracle_and_importance_estimate_agree() {
    let model = three_state();
    let event = TailEvent::new(GFunction::Identity, 2.7, 4);
    let mix = chain_mixture(&model, 4);
    let exact = exact_probability_oracle(&model, &EventSpec::Tail(event.clone()), Some(&mix), 12).unwrap();
    assert_abs_diff_eq!(exact.importance_identity.unwrap(), exact.probability, epsilon = 1e-12);
    let est = estimate_tail(&model, &mix, &event, 10_000, 9, EngineOptions::default()).unwrap();
    assert!((est.estimate - exact.probability).abs() < 3.0 * est.std_error, "{est:?} vs {}", exact.probability);
}

#[test]
fn identity_for_both_event_kinds() {
    let model = three_state();
    let mixtures = vec![
        MixtureSpec::single_tilt(&model, &[1.5]).unwrap(),
        chain_mixture(&model, 6),
        MixtureSpec::tail_grid(&model, 6, 0.36, &GFunction::SquaredDistance { center: vec![2.1] }, None, None).unwrap(),
    ];
    let events = [
        EventSpec::Tail(two_sided(6)),
        EventSpec::Boundary(BoundaryEvent::new(GFunction::SquaredDistance { center: vec![2.1] }, 1.0, 2, 6)),
    ];
    for e in &events {
        for mix in &mixtures {
            let r = exact_probability_oracle(&model, e, Some(mix), 12).unwrap();
            assert!(r.probability > 0.0);
            assert_abs_diff_eq!(r.importance_identity.unwrap(), r.probability, epsilon = 1e-12);
        }
    }
}

#[test]
fn small_level_boundary_is_nearly_sure() {
    let lattice = Model::Iid(IidModel::scalar_lattice(&[1.0, 2.0], &[0.5, 0.5]).unwrap());
    let event = BoundaryEvent::new(GFunction::Identity, 1.5, 1, 3);
    let exact = exact_probability_oracle(&lattice, &EventSpec::Boundary(event.clone()), None, 12).unwrap();
    assert_abs_diff_eq!(exact.probability, 1.0, epsilon = 1e-15);
    let mix = MixtureSpec::single_tilt(&lattice, &[1.6]).unwrap();
    let est = estimate_boundary(&lattice, &mix, &event, 4000, 2, EngineOptions::default()).unwrap();
    assert!((est.estimate - 1.0).abs() < 4.0 * est.std_error.max(1e-12));
}

#[test]
fn example_chain_n10_matches_table_value() {
    let model = three_state();
    let est = estimate_tail(&model, &chain_mixture(&model, 10), &two_sided(10), 10_000, 2024, EngineOptions::default())
        .unwrap();
    assert!(within(est.estimate, est.std_error, 1.04e-1, 0.01e-1, 4.0), "{est:?}");
    let direct = estimate_direct(&model, &EventSpec::Tail(two_sided(10)), 10_000, 2025, EngineOptions::default()).unwrap();
    assert!(within(est.estimate, est.std_error, direct.estimate, direct.std_error, 4.0));
    assert!(est.second_moment >= est.estimate * est.estimate);
}

#[test]
fn determinism_across_workers() {
    let model = three_state();
    let mix = chain_mixture(&model, 20);
    let a = estimate_tail(&model, &mix, &two_sided(20), 5000, 77, EngineOptions::sequential()).unwrap();
    let b = estimate_tail(&model, &mix, &two_sided(20), 5000, 77, EngineOptions { workers: Some(4) }).unwrap();
    let c = estimate_tail(&model, &mix, &two_sided(20), 5000, 78, EngineOptions { workers: Some(3) }).unwrap();
    assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    assert_eq!(a.second_moment.to_bits(), b.second_moment.to_bits());
    assert_ne!(a.estimate, c.estimate);
}

#[test]
fn relative_second_moment_examples() {
    let perfect = EstimateReport {
        method: "x".into(),
        estimate: 0.25,
        std_error: 0.0,
        runs: 10,
        second_moment: 0.0625,
        hits: 10,
        truncations: 0,
        seconds: 0.0,
        seed: 0,
    };
    assert_eq!(relative_second_moment(&perfect, 0.25), 1.0);
    let e = EventSpec::Tail(TailEvent::new(GFunction::Identity, 0.5, 4));
    let p = exact_probability_oracle(&coin(), &e, None, 12).unwrap().probability;
    let direct = estimate_direct(&coin(), &e, 20_000, 5, EngineOptions::default()).unwrap();
    assert_abs_diff_eq!(relative_second_moment(&direct, p), direct.estimate / (p * p), epsilon = 1e-12);
    assert!((relative_second_moment(&direct, p) * p - 1.0).abs() < 0.05);
}

#[test]
fn traces_reproduce_estimator_runs() {
    let model = Model::Markov(presets::regime_switching_gaussian());
    let event = BoundaryEvent::new(GFunction::NormSquared, 6.0, 3, 20);
    let mix = MixtureSpec::regime_grid(&model, 6.0, 3, 20, 3.0, None).unwrap();
    let spec = EventSpec::Boundary(event.clone());
    let traces = trace_runs(&model, &mix, &spec, 700, 31).unwrap();
    let est = estimate_boundary(&model, &mix, &event, 700, 31, EngineOptions::default()).unwrap();
    let mean = traces.iter().map(|t| t.contribution).sum::<f64>() / 700.0;
    approx::assert_relative_eq!(mean, est.estimate, max_relative = 1e-12);
    for t in &traces {
        // prefix sums
        let mut s = [0.0; 3];
        for (xi, sum) in t.increments.iter().zip(&t.sums) {
            for j in 0..3 {
                s[j] += xi[j];
            }
            for j in 0..3 {
                assert_abs_diff_eq!(s[j], sum[j], epsilon = 1e-12);
            }
        }
        assert_eq!(t.states.len(), t.stop);
        // stopping rule
        let g = |n: usize| event.g.scaled(&t.sums[n - 1], n);
        if t.hit {
            assert!(t.stop >= 3 && g(t.stop) >= 6.0 - 1e-9);
        } else {
            assert_eq!(t.stop, 20);
        }
        for n in 3..t.stop {
            assert!(g(n) < 6.0);
        }
        for r in &t.regenerations {
            assert_eq!(t.states[r - 1], 0);
        }
    }
}

#[test]
fn zero_cgf_roots() {
    for mu0 in [0.5, 0.3, 1.2] {
        let m = Model::Iid(IidModel::gaussian(vec![-mu0]).unwrap());
        let t = solve_zero_cgf(&m, &[1.0]).unwrap();
        assert_abs_diff_eq!(t.theta()[0], 2.0 * mu0, epsilon = 1e-10);
        assert!(t.psi().abs() <= 1e-10);
    }
    let up = Model::Iid(IidModel::gaussian(vec![0.5]).unwrap());
    assert!(matches!(solve_zero_cgf(&up, &[1.0]), Err(crate::Error::NoPositiveRoot { .. })));
}

// The Perron root of a 2x2 positive matrix in closed form, scanned on a grid.
#[test]
fn zero_cgf_root_on_two_state_chain() {
    let (p, q) = (0.7, 0.4);
    let chain = MarkovAdditiveModel::with_destination_increments(
        vec![vec![p, 1.0 - p], vec![1.0 - q, q]],
        vec![vec![-1.0], vec![1.0]],
        InitialLaw::Stationary,
    )
    .unwrap();
    let psi = |t: f64| {
        let (a, b, c, d) = (p * (-t).exp(), (1.0 - p) * t.exp(), (1.0 - q) * (-t).exp(), q * t.exp());
        let tr = a + d;
        let det = a * d - b * c;
        ((tr + (tr * tr - 4.0 * det).sqrt()) / 2.0).ln()
    };
    let h = 1e-5;
    let mut t = h;
    while psi(t) < 0.0 {
        t += h;
    }
    let (lo, hi) = (t - h, t);
    let scan = lo + h * (-psi(lo)) / (psi(hi) - psi(lo));
    let root = solve_zero_cgf(&Model::Markov(chain), &[1.0]).unwrap();
    assert_abs_diff_eq!(root.theta()[0], scan, epsilon = 1e-8);
}

#[test]
fn first_passage_matches_direct() {
    let m = Model::Iid(IidModel::gaussian(vec![-0.5]).unwrap());
    let fp = FirstPassageBoundary::OneSided;
    let mix = first_passage_mixture(&m, &fp, None).unwrap();
    assert_abs_diff_eq!(mix.tilt(0).theta()[0], 1.0, epsilon = 1e-10);
    let is = estimate_first_passage(&m, &mix, &fp, 5.0, None, 10_000, 3, EngineOptions::default()).unwrap();
    assert_eq!(is.truncations, 0);
    let direct = estimate_direct(
        &m,
        &EventSpec::FirstPassage {
            boundary: fp.clone(),
            c: 5.0,
            max_steps: 400,
        },
        200_000,
        4,
        EngineOptions::default(),
    )
    .unwrap();
    assert!(within(is.estimate, is.std_error, direct.estimate, direct.std_error, 4.0), "{is:?} {direct:?}");

    let is0 = estimate_first_passage(&m, &mix, &fp, 0.0, None, 10_000, 5, EngineOptions::default()).unwrap();
    let direct0 = estimate_direct(
        &m,
        &EventSpec::FirstPassage {
            boundary: fp,
            c: 0.0,
            max_steps: 400,
        },
        20_000,
        6,
        EngineOptions::default(),
    )
    .unwrap();
    assert!(is0.estimate < 1.0);
    assert!(within(is0.estimate, is0.std_error, direct0.estimate, direct0.std_error, 4.0));
}

#[test]
fn max_coordinate_symmetry() {
    let fp = FirstPassageBoundary::MaxCoordinate;
    let run = |mean: Vec<f64>, seed| {
        let m = Model::Iid(IidModel::gaussian(mean).unwrap());
        let mix = first_passage_mixture(&m, &fp, Some(&[0.5, 0.5])).unwrap();
        assert_eq!(mix.len(), 2);
        estimate_first_passage(&m, &mix, &fp, 4.0, None, 10_000, seed, EngineOptions::default()).unwrap()
    };
    let a = run(vec![-0.5, -0.7], 1);
    let b = run(vec![-0.7, -0.5], 2);
    assert!(within(a.estimate, a.std_error, b.estimate, b.std_error, 4.0));
    let half = FirstPassageBoundary::HalfSpace { normal: vec![1.0, 1.0] };
    let m = Model::Iid(IidModel::gaussian(vec![-0.5, -0.7]).unwrap());
    let mix = first_passage_mixture(&m, &half, None).unwrap();
    assert_abs_diff_eq!(mix.tilt(0).psi(), 0.0, epsilon = 1e-10);
}
