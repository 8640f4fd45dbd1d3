//! Logistic-loss classification on the fourth simulation model.
use sdrn::estimator::classify;
use sdrn::evalsuite::{
    classification_metrics, draw_dataset, stream_rng, NoiseKind, SimModel, Stream,
};
use sdrn::{FitConfig, LossSpec, SdrnModel};

fn main() -> sdrn::Result<()> {
    let model4 = SimModel::Four;
    let train = draw_dataset(
        model4,
        2000,
        NoiseKind::Normal,
        &mut stream_rng(1, Stream::Data),
        &mut stream_rng(1, Stream::Noise),
    );
    let test = draw_dataset(
        model4,
        2000,
        NoiseKind::Normal,
        &mut stream_rng(2, Stream::Data),
        &mut stream_rng(2, Stream::Test),
    );
    let config = FitConfig {
        loss: LossSpec::Logistic,
        kappa: 2.0,
        c_offset: -2,
        ..FitConfig::default()
    };
    let model = SdrnModel::fit_unit_cube(train.x.view(), train.y.view(), &config)?;
    let scores = model.predict_batch(test.x.view())?;
    let y_hat: Vec<u8> = scores.iter().map(|&s| classify(s, 0.5)).collect();
    let y_true: Vec<u8> = test.y.iter().map(|&y| y as u8).collect();
    let bayes: Vec<u8> = test.truth.iter().map(|&p| u8::from(p >= 0.5)).collect();
    let m = classification_metrics(&y_hat, &y_true, &scores)?;
    let b = classification_metrics(&bayes, &y_true, &test.truth)?;
    println!(
        "|basis|={} epochs={}",
        model.gamma().len(),
        model.diagnostics().epochs_run
    );
    println!(
        "fitted  accuracy={:.4} auc={:.4}",
        m.accuracy,
        m.auc.unwrap_or(f64::NAN)
    );
    println!(
        "bayes   accuracy={:.4} auc={:.4}",
        b.accuracy,
        b.auc.unwrap_or(f64::NAN)
    );
    Ok(())
}
