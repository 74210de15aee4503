use mvdlmc::control::{Grid1D, KbeOptions};
use mvdlmc::dlmc::{dlmc_estimate, ControlSource, DlmcParams};
use mvdlmc::exec::{map_indexed, map_indexed_sequential, with_workers};
use mvdlmc::model::{ModelSpec, Observable, ScalarLaw};
use mvdlmc::rng::StreamKey;

fn kuramoto() -> ModelSpec {
    ModelSpec::kuramoto(
        0.4,
        ScalarLaw::Uniform { low: -0.2, high: 0.2 },
        ScalarLaw::Normal { mean: 0.0, std_dev: 0.2 },
        1.0,
    )
    .unwrap()
}

#[test]
fn importance_sampling_agrees_with_crude_estimate() {
    let model = kuramoto();
    let g = Observable::indicator(0.8);
    let params = DlmcParams { particles: 20, n1: 16, n2: 16, m1: 200, m2: 200 };
    let per_law = ControlSource::PerLaw {
        grid: Grid1D::new(4.0, 0.04, 0.25, 1.0).unwrap(),
        options: KbeOptions::default(),
    };
    let crude = dlmc_estimate(&model, &g, &ControlSource::Zero, params, StreamKey::new(1)).unwrap();
    let is = dlmc_estimate(&model, &g, &per_law, params, StreamKey::new(2)).unwrap();
    let se = (crude.standard_error.powi(2) + is.standard_error.powi(2)).sqrt();
    assert!((crude.estimate - is.estimate).abs() <= 4.0 * se, "{crude:?} vs {is:?}");
    assert!(is.v2 < crude.v2);
}

#[test]
fn worker_count_does_not_change_results() {
    let model = kuramoto();
    let g = Observable::indicator(1.0);
    let params = DlmcParams { particles: 10, n1: 8, n2: 8, m1: 40, m2: 20 };
    let run = |w| {
        with_workers(w, || dlmc_estimate(&model, &g, &ControlSource::Zero, params, StreamKey::new(9)))
            .unwrap()
    };
    let a = run(1);
    for w in [2, 8] {
        let b = run(w);
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.v1.to_bits(), b.v1.to_bits());
        assert_eq!(a.v2.to_bits(), b.v2.to_bits());
    }
}

#[test]
fn parallel_and_sequential_maps_agree() {
    let f = |i: usize| StreamKey::new(5).derive(i as u64).raw();
    assert_eq!(map_indexed(1000, f), map_indexed_sequential(1000, f));
}

#[test]
fn deterministic_model_is_estimated_exactly() {
    // x(T) = 0.3 for every path
    let model = ModelSpec::zero_kernel(0.0, ScalarLaw::constant(0.3), ScalarLaw::constant(0.0), 1.0)
        .unwrap();
    let params = DlmcParams { particles: 4, n1: 4, n2: 4, m1: 5, m2: 5 };
    let e = dlmc_estimate(&model, &Observable::Cosine, &ControlSource::Zero, params, StreamKey::new(0))
        .unwrap();
    assert_eq!(e.estimate, 0.3f64.cos());
    assert_eq!(e.v1, 0.0);
    assert_eq!(e.v2, 0.0);
}
