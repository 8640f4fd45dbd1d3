//! Quadratic versus median (quantile 0.5) fits on heavy-tailed data.
use sdrn::evalsuite::{generate, regression_metrics, NoiseKind, SimModel, SimModelSpec};
use sdrn::{FitConfig, LossSpec, SdrnModel};

fn main() -> sdrn::Result<()> {
    let sim = generate(&SimModelSpec {
        model: SimModel::One,
        n: 2000,
        noise: NoiseKind::Laplace,
        seed: 4,
    })?;
    for loss in [
        LossSpec::Quadratic,
        LossSpec::quantile(0.5)?,
        LossSpec::huber(1.0)?,
    ] {
        let config = FitConfig {
            loss,
            kappa: 1.0,
            c_offset: 0,
            ..FitConfig::default()
        };
        let model = SdrnModel::fit_unit_cube(sim.train.x.view(), sim.train.y.view(), &config)?;
        let pred = model.predict_batch(sim.design.view())?;
        let metrics = regression_metrics(&[pred], &sim.design_truth)?;
        println!(
            "{loss:<14} m={} R={} |basis|={} epochs={} design mse={:.4}",
            model.m(),
            model.accuracy_level(),
            model.gamma().len(),
            model.diagnostics().epochs_run,
            metrics.avg_mse
        );
    }
    Ok(())
}
