use sosp_core::network::{risk_and_gradient, validate_general_position, GeneralPositionMode};
use sosp_core::{Activation, Dataset, Dims, NetworkParams, SquaredLoss};
use sosp_harness::adam::{adam_train, AdamConfig};
use sosp_harness::construct::{construct_boundary_fosp, ConstructionSpec, SlopePlacement};
use sosp_harness::datagen::{generate_dataset, init_params};
use sosp_harness::stats::{boundary_statistics, run_experiment, RunConfig, Thresholds};

fn tiny() -> (NetworkParams, Dataset) {
    let data = generate_dataset(2, 1, 6, 11).unwrap();
    let params = init_params(Dims::new(2, 2, 1), Activation::relu(), 12).unwrap();
    (params, data)
}

/// Adam written out on plain `Vec<f64>`s.
fn reference_adam(start: &NetworkParams, data: &Dataset, cfg: &AdamConfig, steps: usize) -> Vec<f64> {
    let dims = start.dims();
    let mut x: Vec<f64> = start.to_flat().iter().copied().collect();
    let mut m1 = vec![0.0; x.len()];
    let mut m2 = vec![0.0; x.len()];
    for t in 1..=steps {
        let p = NetworkParams::from_flat(dims, start.activation, &x.clone().into()).unwrap();
        let (_, g) = risk_and_gradient(&p, data, &SquaredLoss).unwrap();
        let lr = cfg.learning_rate * cfg.decay_factor.powi(((t - 1) / cfg.decay_period) as i32);
        for j in 0..x.len() {
            m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * g[j];
            m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * g[j].powi(2);
            let mh = m1[j] / (1.0 - cfg.beta1.powi(t as i32));
            let vh = m2[j] / (1.0 - cfg.beta2.powi(t as i32));
            x[j] -= lr * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
    x
}

#[test]
fn five_steps_match_reference() {
    let (start, data) = tiny();
    let cfg = AdamConfig {
        iterations: 5,
        decay_period: 2,
        learning_rate: 1e-2,
        ..AdamConfig::default()
    };
    let trained = adam_train(&start, &data, &SquaredLoss, &cfg).unwrap();
    let expected = reference_adam(&start, &data, &cfg, 5);
    for (a, b) in trained.params.to_flat().iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert_eq!(trained.risk_trace.len(), 6);
}

#[test]
fn perfect_fit_does_not_move() {
    let (params, data) = tiny();
    let labels = data
        .inputs()
        .iter()
        .map(|x| sosp_core::network::forward(&params, x).unwrap().output)
        .collect();
    let exact = data.with_labels(labels).unwrap();
    let cfg = AdamConfig {
        iterations: 50,
        ..AdamConfig::default()
    };
    let trained = adam_train(&params, &exact, &SquaredLoss, &cfg).unwrap();
    assert!((trained.params.to_flat() - params.to_flat()).amax() < 1e-12);
}

#[test]
fn risk_decreases_over_trailing_window() {
    let data = generate_dataset(10, 1, 200, 4).unwrap();
    let start = init_params(Dims::new(10, 1, 1), Activation::relu(), 5).unwrap();
    let cfg = AdamConfig {
        iterations: 4000,
        decay_period: 400,
        ..AdamConfig::default()
    };
    let trace = adam_train(&start, &data, &SquaredLoss, &cfg).unwrap().risk_trace;
    let window = &trace[trace.len() - 500..];
    assert!(window.last().unwrap() <= window.first().unwrap());
    assert!(trace.last().unwrap() < &trace[0]);
}

#[test]
fn generated_inputs_are_in_general_position() {
    let data = generate_dataset(3, 1, 40, 9).unwrap();
    let report = validate_general_position(&data, GeneralPositionMode::Sampled { subsets: 500, seed: 1 }, 1e-10);
    assert!(report.passed);
}

#[test]
fn constructed_point_statistics() {
    let spec = ConstructionSpec::single(Dims::new(3, 2, 1), 12, SlopePlacement::Interior, 0.5);
    let c = construct_boundary_fosp(&spec, 3).unwrap();
    let report = boundary_statistics(&c.params, &c.data, &SquaredLoss, &Thresholds::default(), 1e-12).unwrap();
    assert!(report.m_hat >= 1);
    assert_eq!((report.l_hat, report.k_hat), (0, 0));
    assert!(report.units.iter().all(|u| u.qp_objective <= 1e-10));

    let spec = ConstructionSpec::single(Dims::new(3, 2, 1), 12, SlopePlacement::Upper, 0.5);
    let c = construct_boundary_fosp(&spec, 3).unwrap();
    let report = boundary_statistics(&c.params, &c.data, &SquaredLoss, &Thresholds::default(), 1e-12).unwrap();
    assert_eq!((report.m_hat, report.l_hat, report.k_hat), (1, 1, 0));
}

#[test]
fn experiments_are_deterministic_and_ordered() {
    let mut cfg = RunConfig {
        samples: 200,
        seed: 6,
        ..RunConfig::default()
    };
    cfg.adam.iterations = 1500;
    cfg.adam.decay_period = 300;
    let (_, _, mut a) = run_experiment(&cfg).unwrap();
    let (_, _, mut b) = run_experiment(&cfg).unwrap();
    for r in [&mut a, &mut b] {
        r.train_seconds = 0.0;
        r.stats_seconds = 0.0;
    }
    assert_eq!(a, b);
    assert!(a.k_hat <= a.l_hat && a.l_hat <= a.m_hat);
}
