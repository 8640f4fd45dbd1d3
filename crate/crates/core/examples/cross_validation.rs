//! Picks (kappa, c) by k-fold cross-validation.
use sdrn::estimator::kfold_grid_search;
use sdrn::evalsuite::{generate, NoiseKind, SimModel, SimModelSpec};
use sdrn::FitConfig;

fn main() -> sdrn::Result<()> {
    let sim = generate(&SimModelSpec {
        model: SimModel::One,
        n: 400,
        noise: NoiseKind::Normal,
        seed: 3,
    })?;
    let base = FitConfig {
        epochs: 1000,
        ..FitConfig::default()
    };
    let (cells, best) = kfold_grid_search(
        sim.train.x.view(),
        sim.train.y.view(),
        &base,
        &[0.5, 2.0],
        &[-1, 0, 1],
        5,
    )?;
    for cell in &cells {
        println!(
            "kappa={:<4} c={:>2} cv loss={:.4}",
            cell.kappa, cell.c, cell.cv_loss
        );
    }
    println!("selected kappa={} c={}", cells[best].kappa, cells[best].c);
    Ok(())
}
