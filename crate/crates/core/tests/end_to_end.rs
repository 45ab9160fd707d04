use exceedmc_core::estimators::{
    estimate_direct, estimate_event, estimate_first_passage, exact_probability_oracle, first_passage_mixture, EngineOptions,
    EventSpec,
};
use exceedmc_core::events::{BoundaryEvent, FirstPassageBoundary, GFunction, TailEvent};
use exceedmc_core::exp_family::IidModel;
use exceedmc_core::mixing::WeightRule;
use exceedmc_core::model::{presets, Model, ModelSpec};
use exceedmc_core::MixtureSpec;

fn close(est: f64, se: f64, truth: f64) -> bool {
    (est - truth).abs() <= 4.0 * se
}

#[test]
fn gaussian_tail_against_closed_form() {
    // P{ S_40 / 40 >= 0.5 } = 1 - Phi(sqrt(10))
    let truth = 7.827_011_290_012_74e-4;
    let model = Model::Iid(IidModel::standard_normal(1));
    let g = GFunction::Identity;
    let mix = MixtureSpec::tail_grid(&model, 40, 0.5, &g, None, Some((vec![-3.0], vec![3.0]))).unwrap();
    let ev = EventSpec::Tail(TailEvent::new(g, 0.5, 40));
    let r = estimate_event(&model, &mix, &ev, 20_000, 5, EngineOptions::default()).unwrap();
    assert!(close(r.estimate, r.std_error, truth), "{} ({}) vs {truth}", r.estimate, r.std_error);
    assert!(r.std_error / r.estimate < 0.02);
}

#[test]
fn bivariate_norm_tail_against_chi_square() {
    // ||S_n||^2 / n is chi-square with 2 degrees of freedom
    let (n, b) = (20, 0.8);
    let truth = (-(n as f64) * b * b / 2.0).exp();
    let model = Model::Iid(IidModel::standard_normal(2));
    let mix = MixtureSpec::tail_grid(&model, n, b, &GFunction::Norm, None, Some((vec![-3.0; 2], vec![3.0; 2]))).unwrap();
    let ev = EventSpec::Tail(TailEvent::new(GFunction::Norm, b, n));
    let r = estimate_event(&model, &mix, &ev, 20_000, 6, EngineOptions::default()).unwrap();
    assert!(close(r.estimate, r.std_error, truth), "{} ({}) vs {truth}", r.estimate, r.std_error);
}

#[test]
fn chain_mixture_against_enumeration() {
    let model = Model::Markov(presets::three_state_walk());
    let ev = EventSpec::Tail(TailEvent::new(GFunction::SquaredDistance { center: vec![2.1] }, 0.36, 10));
    let exact = exact_probability_oracle(&model, &ev, None, 10).unwrap().probability;
    let mix = MixtureSpec::finite(
        &model,
        &[vec![1.5], vec![2.7]],
        &WeightRule::Exponential { n: 10.0, phi: None },
    )
    .unwrap();
    let r = estimate_event(&model, &mix, &ev, 20_000, 7, EngineOptions::default()).unwrap();
    assert!(close(r.estimate, r.std_error, exact), "{} ({}) vs {exact}", r.estimate, r.std_error);
    let d = estimate_direct(&model, &ev, 20_000, 8, EngineOptions::default()).unwrap();
    assert!(r.std_error < d.std_error);
}

#[test]
fn lattice_first_passage_is_exact() {
    // P{ sup S_n >= c } = (p/q)^c for a +-1 walk; the zero-cgf tilt hits c
    // exactly, so every run carries the same weight.
    let (p, c) = (0.4, 12.0);
    let model = Model::Iid(IidModel::scalar_lattice(&[-1.0, 1.0], &[1.0 - p, p]).unwrap());
    let boundary = FirstPassageBoundary::OneSided;
    let mix = first_passage_mixture(&model, &boundary, None).unwrap();
    let r = estimate_first_passage(&model, &mix, &boundary, c, Some(2_000), 2_000, 9, EngineOptions::default()).unwrap();
    let truth = (p / (1.0 - p)).powf(c);
    assert_eq!(r.truncations, 0);
    assert!((r.estimate / truth - 1.0).abs() < 1e-9, "{} vs {truth}", r.estimate);
    assert!(r.std_error / r.estimate < 1e-9);
}

#[test]
fn boundary_crossing_agrees_with_direct() {
    let model = Model::Iid(IidModel::standard_normal(2));
    let ev = BoundaryEvent::new(GFunction::NormSquared, 12.0, 3, 30);
    let mix = MixtureSpec::regime_grid(&model, 12.0, 3, 30, 4.0, None).unwrap();
    let spec = EventSpec::Boundary(ev);
    let is = estimate_event(&model, &mix, &spec, 20_000, 10, EngineOptions::default()).unwrap();
    let direct = estimate_direct(&model, &spec, 200_000, 11, EngineOptions::default()).unwrap();
    let z = (is.estimate - direct.estimate).abs() / (is.std_error.powi(2) + direct.std_error.powi(2)).sqrt();
    assert!(z < 4.0, "IS {} ({}) direct {} ({})", is.estimate, is.std_error, direct.estimate, direct.std_error);
}

#[test]
fn json_model_spec_drives_an_estimate() {
    let spec: ModelSpec = serde_json::from_str(
        r#"{"type":"markov-additive",
            "transition":[[0.9,0.1],[0.2,0.8]],
            "emission":{"kind":"deterministic","increments":[[[1.0],[-1.0]],[[1.0],[-1.0]]]},
            "initial":{"state":0}}"#,
    )
    .unwrap();
    let model = spec.build().unwrap();
    let ev = EventSpec::Tail(TailEvent::new(GFunction::Identity, 0.9, 8));
    let exact = exact_probability_oracle(&model, &ev, None, 12).unwrap().probability;
    let mix = MixtureSpec::single_tilt(&model, &[0.9]).unwrap();
    let r = estimate_event(&model, &mix, &ev, 20_000, 12, EngineOptions::default()).unwrap();
    assert!(close(r.estimate, r.std_error, exact), "{} ({}) vs {exact}", r.estimate, r.std_error);
}
