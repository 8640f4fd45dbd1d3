use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sdrn::estimator::{adam_fit, objective, objective_gradient, FeatureMap};
use sdrn::evalsuite::{bernoulli_label, regression_metrics, stream_rng, SimModel, Stream};
use sdrn::loss::sigmoid;
use sdrn::relu::{
    approx_basis_eval, build_basis_network, build_pair_network, build_square_network, pair_product,
    square_approx,
};
use sdrn::{FitConfig, LossSpec, SdrnModel, SparseGridBasis};

const LOSSES: [LossSpec; 4] = [
    LossSpec::Quadratic,
    LossSpec::Huber { delta: 0.7 },
    LossSpec::Quantile { tau: 0.3 },
    LossSpec::Logistic,
];

#[test]
fn square_and_pair_graphs_match_recursion() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for r in 1..=10 {
        let sq = build_square_network(r).unwrap();
        let pr = build_pair_network(r).unwrap();
        for _ in 0..1000 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            assert!((sq.eval_scalar(&[x]).unwrap() - square_approx(r, x)).abs() <= 1e-12);
            assert!((pr.eval_scalar(&[x, y]).unwrap() - pair_product(r, x, y)).abs() <= 1e-12);
        }
    }
}

#[test]
fn basis_graphs_match_recursion() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for d in [1usize, 2, 3, 5, 7] {
        let basis = SparseGridBasis::new(d, 3).unwrap();
        for r in [1u32, 3, 5] {
            for k in (0..basis.len()).step_by(basis.len() / 5 + 1) {
                let id = &basis.ids()[k];
                let net = build_basis_network(r, id).unwrap();
                for _ in 0..200 {
                    let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
                    let a = net.eval_scalar(&x).unwrap();
                    let b = approx_basis_eval(r, id, &x).unwrap();
                    assert!((a - b).abs() <= 1e-12, "d={d} r={r} {a} vs {b}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn loss_subgradient_matches_finite_difference(f in -3.0f64..3.0, y01 in 0u8..2, yr in -3.0f64..3.0) {
        let h = 1e-6;
        for loss in LOSSES {
            let y = if loss.is_classification() { f64::from(y01) } else { yr };
            let r = y - f;
            let kink = match loss {
                LossSpec::Quantile { .. } => r.abs() < 1e-4,
                LossSpec::Huber { delta } => (r.abs() - delta).abs() < 1e-4,
                _ => false,
            };
            if kink {
                continue;
            }
            let fd = (loss.value(f + h, y) - loss.value(f - h, y)) / (2.0 * h);
            prop_assert!((fd - loss.subgradient(f, y)).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn losses_are_convex(a in -4.0f64..4.0, b in -4.0f64..4.0, t in 0.0f64..1.0, y01 in 0u8..2, yr in -2.0f64..2.0) {
        for loss in LOSSES {
            let y = if loss.is_classification() { f64::from(y01) } else { yr };
            let mid = loss.value(t * a + (1.0 - t) * b, y);
            let chord = t * loss.value(a, y) + (1.0 - t) * loss.value(b, y);
            prop_assert!(mid <= chord + 1e-12);
        }
    }

    #[test]
    fn losses_are_lipschitz(a in -4.0f64..4.0, b in -4.0f64..4.0, y01 in 0u8..2, yr in -2.0f64..2.0) {
        for loss in LOSSES {
            let y = if loss.is_classification() { f64::from(y01) } else { yr };
            let m = (a - y).abs().max((b - y).abs());
            let c = loss.lipschitz_constant(m);
            prop_assert!((loss.value(a, y) - loss.value(b, y)).abs() <= c * (a - b).abs() + 1e-12);
        }
    }
}

#[test]
fn quantile_kink_uses_one_minus_tau() {
    let loss = LossSpec::Quantile { tau: 0.3 };
    assert_eq!(loss.subgradient(1.5, 1.5), 0.7);
    assert_eq!(loss.value(1.5, 1.5), 0.0);
}

fn smooth_instance(
    n: usize,
    p: usize,
    seed: u64,
) -> (Array2<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let phi = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>());
    let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 2.0 - 1.0);
    let labels = Array1::from_shape_fn(n, |_| f64::from(rng.gen::<bool>()));
    let gamma = Array1::from_shape_fn(p, |_| rng.gen::<f64>() - 0.5);
    (phi, y, labels, gamma)
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let (phi, y, labels, gamma) = smooth_instance(40, 12, 5);
    for (loss, target) in [
        (LossSpec::Quadratic, &y),
        (LossSpec::Huber { delta: 0.4 }, &y),
        (LossSpec::Logistic, &labels),
    ] {
        for lambda in [0.0, 0.5, 3.0] {
            let g =
                objective_gradient(gamma.view(), phi.view(), target.view(), &loss, lambda).unwrap();
            for k in 0..gamma.len() {
                let h = 1e-6;
                let mut up = gamma.clone();
                let mut dn = gamma.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (objective(up.view(), phi.view(), target.view(), &loss, lambda).unwrap()
                    - objective(dn.view(), phi.view(), target.view(), &loss, lambda).unwrap())
                    / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1.0);
                assert!(rel <= 1e-5, "{loss} λ={lambda} k={k}: fd {fd} vs {}", g[k]);
            }
        }
    }
}

#[test]
fn zero_kappa_objective_is_the_plain_risk() {
    let (phi, y, _, gamma) = smooth_instance(30, 8, 6);
    let plain: f64 = phi
        .dot(&gamma)
        .iter()
        .zip(y.iter())
        .map(|(f, yi)| (yi - f) * (yi - f))
        .sum();
    let obj = objective(
        gamma.view(),
        phi.view(),
        y.view(),
        &LossSpec::Quadratic,
        0.0,
    )
    .unwrap();
    assert!((plain - obj).abs() <= 1e-12 * plain.max(1.0));
}

#[test]
fn objective_trace_decreases_over_windows() {
    let (phi, y, labels, _) = smooth_instance(60, 15, 7);
    for (loss, target) in [
        (LossSpec::Quadratic, &y),
        (LossSpec::Logistic, &labels),
        (LossSpec::Huber { delta: 0.3 }, &y),
    ] {
        let cfg = FitConfig {
            loss,
            kappa: 0.5,
            epochs: 2000,
            ..FitConfig::default()
        };
        let fit = adam_fit(phi.view(), target.view(), &cfg).unwrap();
        let window = 200;
        let means: Vec<f64> = fit
            .trace
            .chunks(window)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        for pair in means.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0),
                "{loss}: {means:?}"
            );
        }
        assert!(fit.final_objective < fit.trace[0]);
    }
}

#[test]
fn quantile_fit_reduces_the_objective() {
    let (phi, y, _, _) = smooth_instance(60, 15, 7);
    let cfg = FitConfig {
        loss: LossSpec::Quantile { tau: 0.5 },
        kappa: 0.5,
        epochs: 2000,
        ..FitConfig::default()
    };
    let fit = adam_fit(phi.view(), y.view(), &cfg).unwrap();
    let tail = fit.trace[fit.trace.len() - 200..]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    assert!(tail < 0.99 * fit.trace[0]);
}

#[test]
fn fits_are_deterministic() {
    let (phi, y, _, _) = smooth_instance(80, 20, 8);
    for batch in [None, Some(16)] {
        let cfg = FitConfig {
            epochs: 300,
            batch_size: batch,
            seed: 99,
            ..FitConfig::default()
        };
        let a = adam_fit(phi.view(), y.view(), &cfg).unwrap();
        let b = adam_fit(phi.view(), y.view(), &cfg).unwrap();
        assert_eq!(a, b);
    }
}

fn unit_cube_model(seed: u64) -> (SdrnModel, Array2<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((150, 3), |_| rng.gen::<f64>());
    let y = Array1::from_shape_fn(150, |i| {
        x[[i, 0]] * x[[i, 1]] + x[[i, 2]] + 0.1 * rng.gen::<f64>()
    });
    let cfg = FitConfig {
        m_override: Some(3),
        r_override: Some(5),
        epochs: 300,
        ..FitConfig::default()
    };
    (SdrnModel::fit(x.view(), y.view(), &cfg).unwrap(), x)
}

#[test]
fn json_round_trip_is_bit_identical() {
    let (model, _) = unit_cube_model(10);
    let back = SdrnModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back.gamma(), model.gamma());
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 1.2 - 0.1).collect();
        assert_eq!(
            model.predict(&x).unwrap().to_bits(),
            back.predict(&x).unwrap().to_bits()
        );
    }
}

#[test]
fn one_hot_coefficients_select_a_feature() {
    let (model, _) = unit_cube_model(12);
    let json: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    let p = model.gamma().len();
    let features = FeatureMap::new(SparseGridBasis::new(3, 3).unwrap(), 5).unwrap();
    let scaler = model.scaler().clone();
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    for k in [0, p / 2, p - 1] {
        let mut v = json.clone();
        let hot: Vec<f64> = (0..p).map(|j| f64::from(j == k)).collect();
        v["gamma"] = serde_json::json!(hot);
        let one_hot = SdrnModel::from_json(&v.to_string()).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let row = features.row(&scaler.transform(&x).unwrap()).unwrap();
            assert_eq!(one_hot.predict(&x).unwrap(), row[k]);
        }
    }
}

#[test]
fn model_four_labels_follow_the_logistic_link() {
    // Covariate settings with log-odds exactly -2, 0 and 2.
    let mut lo = [0.0; 10];
    lo[4] = 1.0;
    lo[3] = 1.0;
    lo[1] = 1.0;
    lo[0] = std::f64::consts::FRAC_PI_2 - 1.0;
    let mut mid = [0.0; 10];
    mid[4] = 0.5;
    let mut hi = [0.0; 10];
    hi[2] = 1.0;
    hi[6] = 1.0;
    hi[8] = 0.15;
    for (x, mu) in [(lo, -2.0), (mid, 0.0), (hi, 2.0)] {
        assert!((SimModel::log_odds(&x) - mu).abs() < 1e-12);
        let p = SimModel::Four.mean(&x);
        assert!((p - sigmoid(mu)).abs() < 1e-12);
        let mut rng = stream_rng(21 + mu as u64, Stream::Noise);
        let draws = 100_000;
        let ones: f64 = (0..draws).map(|_| bernoulli_label(p, &mut rng)).sum();
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((ones / draws as f64 - p).abs() <= 3.0 * se, "μ={mu}");
    }
}

proptest! {
    #[test]
    fn mse_is_bias_plus_variance(seed in 0u64..1000, reps in 1usize..6, n in 1usize..20) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let preds: Vec<Vec<f64>> = (0..reps).map(|_| (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect()).collect();
        for i in 0..n {
            let point: Vec<Vec<f64>> = preds.iter().map(|p| vec![p[i]]).collect();
            let m = regression_metrics(&point, &truth[i..=i]).unwrap();
            prop_assert!((m.avg_mse - m.avg_bias2 - m.avg_variance).abs() <= 1e-8);
        }
        let m = regression_metrics(&preds, &truth).unwrap();
        prop_assert!((m.avg_mse - m.avg_bias2 - m.avg_variance).abs() <= 1e-8);
        if reps == 1 {
            prop_assert!(m.avg_variance.abs() <= 1e-12);
        }
    }
}
