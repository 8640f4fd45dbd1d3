//! Fit on raw covariates, save the model as JSON, reload it and predict.
use ndarray::{Array1, Array2};
use sdrn::{FitConfig, SdrnModel};

fn main() -> sdrn::Result<()> {
    let n = 300;
    let x = Array2::from_shape_fn((n, 2), |(i, j)| {
        ((i * (j + 3) * 37) % 101) as f64 * 0.5 - 10.0
    });
    let y = Array1::from_shape_fn(n, |i| (x[[i, 0]] / 10.0).sin() + 0.05 * x[[i, 1]]);
    let model = SdrnModel::fit(x.view(), y.view(), &FitConfig::default())?
        .with_names(vec!["temp".into(), "load".into()], Some("power".into()))?;
    let path = std::env::temp_dir().join("sdrn_model_io.json");
    std::fs::write(&path, model.to_json()?)?;
    let back = SdrnModel::from_json(&std::fs::read_to_string(&path)?)?;
    let q = [3.0, -2.5];
    println!("saved to {}", path.display());
    println!(
        "prediction before {:.6}, after reload {:.6}",
        model.predict(&q)?,
        back.predict(&q)?
    );
    Ok(())
}
