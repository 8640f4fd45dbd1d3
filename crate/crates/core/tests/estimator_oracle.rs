mod common;

use common::{random_instance, ridge_closed_form};
use sdrn::estimator::adam_fit;
use sdrn::{FitConfig, LossSpec};

#[test]
fn adam_matches_ridge_solution() {
    for seed in [1u64, 2, 3] {
        let (phi, y) = random_instance(50, 20, seed);
        let config = FitConfig {
            loss: LossSpec::Quadratic,
            kappa: 1.0,
            epochs: 10_000,
            tolerance: 0.0,
            ..FitConfig::default()
        };
        let fit = adam_fit(phi.view(), y.view(), &config).unwrap();
        let exact = ridge_closed_form(&phi, &y, 1.0);
        let err = fit
            .gamma
            .iter()
            .zip(&exact)
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        println!("seed {seed}: sup error {err:.3e}");
        assert!(err <= 1e-4, "seed {seed}: sup error {err}");
    }
}

#[test]
fn light_ridge_also_matches() {
    let (phi, y) = random_instance(50, 20, 9);
    let config = FitConfig {
        kappa: 0.1,
        epochs: 10_000,
        tolerance: 0.0,
        ..FitConfig::default()
    };
    let fit = adam_fit(phi.view(), y.view(), &config).unwrap();
    let exact = ridge_closed_form(&phi, &y, 0.1);
    let err = fit
        .gamma
        .iter()
        .zip(&exact)
        .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
    assert!(err <= 1e-4, "sup error {err}");
}
