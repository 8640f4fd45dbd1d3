//! Simulation models, replication harness, metrics and bound sweeps.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SdrnError};
use crate::estimator::{adam_fit, classify, FeatureMap, FitConfig};
use crate::loss::{sigmoid, LossSpec};
use crate::relu::{
    approx_basis_eval, exact_basis_eval, pair_error_bound, pair_product, square_approx,
    tree_error_bound,
};
use crate::sparse_grid::{
    approximation_bound, basis_count, cardinality_bounds, interpolate, SparseGridBasis,
};

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Noise = 2,
    Design = 3,
    Test = 4,
    Shuffle = 5,
    Sweep = 6,
}

/// ChaCha20 generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finalizer, used to derive per-replication seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master ^ splitmix64(rep as u64 + 1))
}

/// Uniform draw on the open interval (0, 1).
pub fn open_uniform<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("valid")
        .inverse_cdf(open_uniform(rng))
}

/// Standard Laplace (location 0, scale 1) by inversion.
pub fn standard_laplace<R: RngCore>(rng: &mut R) -> f64 {
    let u = open_uniform(rng) - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Normal,
    Laplace,
    None,
}

impl NoiseKind {
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Normal => standard_normal(rng),
            NoiseKind::Laplace => standard_laplace(rng),
            NoiseKind::None => 0.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::Normal => "normal",
            NoiseKind::Laplace => "laplace",
            NoiseKind::None => "none",
        }
    }
}

impl FromStr for NoiseKind {
    type Err = SdrnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(NoiseKind::Normal),
            "laplace" => Ok(NoiseKind::Laplace),
            "none" => Ok(NoiseKind::None),
            _ => Err(SdrnError::InvalidConfig(format!(
                "unknown noise `{s}` (normal | laplace | none)"
            ))),
        }
    }
}

/// The four data-generating models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SimModel {
    One,
    Two,
    Three,
    Four,
}

impl TryFrom<u8> for SimModel {
    type Error = SdrnError;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(SimModel::One),
            2 => Ok(SimModel::Two),
            3 => Ok(SimModel::Three),
            4 => Ok(SimModel::Four),
            _ => Err(SdrnError::InvalidConfig(format!(
                "unknown model id {id} (expected 1..4)"
            ))),
        }
    }
}

impl From<SimModel> for u8 {
    fn from(m: SimModel) -> u8 {
        m.id()
    }
}

impl SimModel {
    pub fn id(&self) -> u8 {
        match self {
            SimModel::One => 1,
            SimModel::Two => 2,
            SimModel::Three => 3,
            SimModel::Four => 4,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SimModel::One => 5,
            SimModel::Two => 7,
            SimModel::Three | SimModel::Four => 10,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, SimModel::Four)
    }

    /// Log-odds `μ` of model 4.
    pub fn log_odds(x: &[f64]) -> f64 {
        x[4] * (x[0] * x[1] + x[2] + x[3]).cos()
            + x[2] * x[2] * x[6] * (x[5] * x[7] + x[8] + 0.1).sqrt()
            + x[6] / (2.0 + x[4] * x[4] + x[9].powi(4))
            - 3.0 * x[4]
            + 1.0
    }

    /// `E(Y | X = x)`; for model 4 this is `P(Y = 1 | x)`.
    pub fn mean(&self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            SimModel::One => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                r2 + 1.5 * (1.5f64.sqrt() * PI * (x[0] + x[1])).sin() + x[2] / (r2 + 1.0) + 1.0
            }
            SimModel::Two => {
                x[0] * x[1]
                    + (2.0 * PI * (x[2] + x[3])).sin().exp() / (1.0 + (2.0 * PI * x[4]).cos().exp())
                    + (x[0] / (x[1] * x[1] + x[3].powi(4) + 2.0)).tan()
            }
            SimModel::Three => {
                1.5 * x[4] * (x[0] * x[1] + x[2] + x[3]).cos()
                    + x[2] * x[2] * x[6] * (x[5] * x[7] + x[8] + 0.1).sqrt()
                    + 2.0 * x[6] / (2.0 + x[4] * x[4] + x[9].powi(4))
                    + 1.0
            }
            SimModel::Four => sigmoid(Self::log_odds(x)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimModelSpec {
    pub model: SimModel,
    pub n: usize,
    pub noise: NoiseKind,
    pub seed: u64,
}

/// One simulated sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// `E(Y | X_i)` at every row.
    pub truth: Vec<f64>,
}

/// A training sample plus the fixed evaluation design `x*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub train: Dataset,
    pub design: Array2<f64>,
    pub design_truth: Vec<f64>,
}

fn uniform_design(rng: &mut ChaCha20Rng, n: usize, d: usize) -> Array2<f64> {
    let mut x = Array2::zeros((n, d));
    for v in x.iter_mut() {
        *v = open_uniform(rng);
    }
    x
}

/// `1` with probability `p`, from one open-interval uniform.
pub fn bernoulli_label<R: RngCore>(p: f64, rng: &mut R) -> f64 {
    f64::from(open_uniform(rng) < p)
}

/// Draws `n` rows of `model` with covariates from `x_rng` and noise or labels from `y_rng`.
pub fn draw_dataset(
    model: SimModel,
    n: usize,
    noise: NoiseKind,
    x_rng: &mut ChaCha20Rng,
    y_rng: &mut ChaCha20Rng,
) -> Dataset {
    let x = uniform_design(x_rng, n, model.dim());
    let truth: Vec<f64> = x
        .outer_iter()
        .map(|r| model.mean(r.as_slice().expect("row-major")))
        .collect();
    let y = truth
        .iter()
        .map(|&f| {
            if model.is_classification() {
                bernoulli_label(f, y_rng)
            } else {
                f + noise.sample(y_rng)
            }
        })
        .collect();
    Dataset { x, y, truth }
}

/// Training sample from the data and noise streams of `spec.seed`; design
/// from its design stream.
pub fn generate(spec: &SimModelSpec) -> Result<Simulation> {
    if spec.n == 0 {
        return Err(SdrnError::InvalidConfig("n must be positive".into()));
    }
    let train = draw_dataset(
        spec.model,
        spec.n,
        spec.noise,
        &mut stream_rng(spec.seed, Stream::Data),
        &mut stream_rng(spec.seed, Stream::Noise),
    );
    let (design, design_truth) = evaluation_design(spec.model, spec.n, spec.seed);
    Ok(Simulation {
        train,
        design,
        design_truth,
    })
}

/// The fixed design `x*` of size `n` and its true regression values.
pub fn evaluation_design(model: SimModel, n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let design = uniform_design(&mut stream_rng(seed, Stream::Design), n, model.dim());
    let truth = design
        .outer_iter()
        .map(|r| model.mean(r.as_slice().expect("row-major")))
        .collect();
    (design, truth)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub avg_bias2: f64,
    pub avg_variance: f64,
    pub avg_mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// `None` when undefined (no positives or no negatives in the relevant margin).
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSet {
    Regression(RegressionMetrics),
    Classification(ClassificationMetrics),
}

/// Average bias², variance (divided by the replication count) and MSE over
/// the design points. `predictions[j][i]` is replication `j` at point `i`.
pub fn regression_metrics(predictions: &[Vec<f64>], truth: &[f64]) -> Result<RegressionMetrics> {
    if predictions.is_empty() {
        return Err(SdrnError::EmptyInput(
            "regression metrics need at least one replication",
        ));
    }
    if truth.is_empty() {
        return Err(SdrnError::EmptyInput(
            "regression metrics need at least one design point",
        ));
    }
    for p in predictions {
        if p.len() != truth.len() {
            return Err(SdrnError::DimensionMismatch {
                expected: truth.len(),
                found: p.len(),
            });
        }
    }
    let reps = predictions.len() as f64;
    let (mut bias2, mut var, mut mse) = (0.0, 0.0, 0.0);
    for (i, &f) in truth.iter().enumerate() {
        let (mut s1, mut s2, mut se) = (0.0, 0.0, 0.0);
        for p in predictions {
            let v = p[i];
            s1 += v;
            s2 += v * v;
            se += (v - f) * (v - f);
        }
        let mean = s1 / reps;
        bias2 += (mean - f) * (mean - f);
        var += s2 / reps - mean * mean;
        mse += se / reps;
    }
    let n = truth.len() as f64;
    Ok(RegressionMetrics {
        avg_bias2: bias2 / n,
        avg_variance: var / n,
        avg_mse: mse / n,
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion-matrix rates with positive class 1, and the rank-statistic AUC
/// (ties get average ranks).
pub fn classification_metrics(
    y_hat: &[u8],
    y_true: &[u8],
    scores: &[f64],
) -> Result<ClassificationMetrics> {
    if y_hat.len() != y_true.len() || scores.len() != y_true.len() {
        return Err(SdrnError::DimensionMismatch {
            expected: y_true.len(),
            found: if y_hat.len() != y_true.len() {
                y_hat.len()
            } else {
                scores.len()
            },
        });
    }
    if y_true.is_empty() {
        return Err(SdrnError::EmptyInput(
            "classification metrics need at least one label",
        ));
    }
    if let Some(&bad) = y_true.iter().chain(y_hat).find(|&&v| v > 1) {
        return Err(SdrnError::InvalidLabel(bad as f64));
    }
    let (mut tp, mut tn, mut fp, mut fneg) = (0, 0, 0, 0);
    for (&p, &t) in y_hat.iter().zip(y_true) {
        match (p, t) {
            (1, 1) => tp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fp += 1,
            _ => fneg += 1,
        }
    }
    let sensitivity = ratio(tp, tp + fneg);
    let precision = ratio(tp, tp + fp);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(ClassificationMetrics {
        accuracy: (tp + tn) as f64 / y_true.len() as f64,
        sensitivity,
        specificity: ratio(tn, tn + fp),
        precision,
        recall: sensitivity,
        f1,
        auc: auc(y_true, scores),
    })
}

/// Mann-Whitney AUC; `None` when one class is absent.
pub fn auc(y_true: &[u8], scores: &[f64]) -> Option<f64> {
    let pos = y_true.iter().filter(|&&v| v == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y_true[k] == 1 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for v in values.flatten() {
        s += v;
        k += 1;
    }
    (k > 0).then(|| s / k as f64)
}

/// Averages per-replication classification metrics; undefined entries are skipped.
pub fn average_classification(per_rep: &[ClassificationMetrics]) -> Result<ClassificationMetrics> {
    if per_rep.is_empty() {
        return Err(SdrnError::EmptyInput("no replications to average"));
    }
    let avg = |f: fn(&ClassificationMetrics) -> Option<f64>| mean_defined(per_rep.iter().map(f));
    Ok(ClassificationMetrics {
        accuracy: per_rep.iter().map(|m| m.accuracy).sum::<f64>() / per_rep.len() as f64,
        sensitivity: avg(|m| m.sensitivity),
        specificity: avg(|m| m.specificity),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        auc: avg(|m| m.auc),
    })
}

/// Tuning grid for [`run_replications`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub kappas: Vec<f64>,
    pub cs: Vec<i32>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            kappas: vec![0.1, 0.5, 1.0, 2.0, 4.0],
            cs: vec![-2, -1, 0, 1, 2],
        }
    }
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        if self.kappas.is_empty() || self.cs.is_empty() {
            return Err(SdrnError::InvalidConfig(
                "tuning grid must not be empty".into(),
            ));
        }
        if let Some(k) = self.kappas.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
            return Err(SdrnError::InvalidConfig(format!(
                "kappa must be finite and >= 0, got {k}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub kappa: f64,
    pub c: i32,
    pub m: u32,
    #[serde(rename = "R")]
    pub r: u32,
    pub basis_size: usize,
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: SimModel,
    pub n: usize,
    pub noise: NoiseKind,
    pub loss: LossSpec,
    pub reps: usize,
    pub seed: u64,
    pub epochs: usize,
    pub cells: Vec<CellReport>,
    /// Index of the cell with the smallest MSE (regression) or largest accuracy.
    pub best: usize,
}

impl SimReport {
    pub fn best_cell(&self) -> &CellReport {
        &self.cells[self.best]
    }

    pub fn cell(&self, kappa: f64, c: i32) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|cell| cell.kappa == kappa && cell.c == c)
    }

    /// Header comment echoing the configuration, one `# key=value` per line.
    pub fn config_echo(&self) -> String {
        format!(
            "# model={}\n# n={}\n# noise={}\n# loss={}\n# reps={}\n# seed={}\n# epochs={}\n",
            self.model.id(),
            self.n,
            self.noise.as_str(),
            self.loss,
            self.reps,
            self.seed,
            self.epochs
        )
    }

    /// Metric CSV: config echo, header, one row per `(κ, c)` cell.
    pub fn to_csv(&self) -> String {
        let mut out = self.config_echo();
        let classification = self.model.is_classification();
        out.push_str("kappa,c,m,R,basis_size,");
        out.push_str(if classification {
            "accuracy,sensitivity,specificity,precision,recall,f1,auc\n"
        } else {
            "avg_bias2,avg_variance,avg_mse\n"
        });
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_else(|| "NA".into());
        for cell in &self.cells {
            let _ = write!(
                out,
                "{},{},{},{},{},",
                cell.kappa, cell.c, cell.m, cell.r, cell.basis_size
            );
            match &cell.metrics {
                MetricSet::Regression(m) => {
                    let _ = writeln!(
                        out,
                        "{:.10},{:.10},{:.10}",
                        m.avg_bias2, m.avg_variance, m.avg_mse
                    );
                }
                MetricSet::Classification(m) => {
                    let _ = writeln!(
                        out,
                        "{:.10},{},{},{},{},{},{}",
                        m.accuracy,
                        opt(m.sensitivity),
                        opt(m.specificity),
                        opt(m.precision),
                        opt(m.recall),
                        opt(m.f1),
                        opt(m.auc)
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

// Per-c feature setup shared by all replications.
struct CellLevels {
    c: i32,
    m: u32,
    r: u32,
    map: FeatureMap,
    design_phi: Option<Array2<f64>>,
}

/// Fits every `(κ, c)` cell on `reps` fresh samples.
///
/// Replication `j` uses seed `replication_seed(spec.seed, j)` for its data and
/// noise (or labels, and an independent test sample for model 4); the same
/// sample is shared by all cells. Regression cells are scored on the fixed
/// design drawn from `spec.seed`.
pub fn run_replications(
    spec: &SimModelSpec,
    base: &FitConfig,
    grid: &TuningGrid,
    reps: usize,
) -> Result<SimReport> {
    if reps == 0 {
        return Err(SdrnError::InvalidConfig("reps must be at least 1".into()));
    }
    if spec.n < 2 {
        return Err(SdrnError::InvalidConfig("n must be at least 2".into()));
    }
    grid.validate()?;
    base.validate()?;
    let classification = spec.model.is_classification();
    if classification != base.loss.is_classification() {
        return Err(SdrnError::InvalidConfig(format!(
            "loss {} does not fit model {}",
            base.loss,
            spec.model.id()
        )));
    }
    let (design, design_truth) = evaluation_design(spec.model, spec.n, spec.seed);
    let levels: Vec<CellLevels> = grid
        .cs
        .iter()
        .map(|&c| {
            let (m, r) = FitConfig {
                c_offset: c,
                ..base.clone()
            }
            .resolve_levels(spec.n);
            let map = FeatureMap::new(SparseGridBasis::new(spec.model.dim(), m)?, r)?;
            let design_phi = if classification {
                None
            } else {
                Some(map.matrix(design.view())?)
            };
            Ok(CellLevels {
                c,
                m,
                r,
                map,
                design_phi,
            })
        })
        .collect::<Result<_>>()?;

    // per rep, per level, per kappa: design predictions or test metrics
    enum RepOut {
        Reg(Vec<f64>),
        Class(ClassificationMetrics),
    }
    let per_rep: Vec<Vec<Vec<RepOut>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(spec.seed, rep);
            let train = draw_dataset(
                spec.model,
                spec.n,
                spec.noise,
                &mut stream_rng(seed, Stream::Data),
                &mut stream_rng(seed, Stream::Noise),
            );
            let test = classification.then(|| {
                let mut rng = stream_rng(seed, Stream::Test);
                let mut labels = stream_rng(seed ^ 0x5EED_7E57, Stream::Test);
                draw_dataset(spec.model, spec.n, spec.noise, &mut rng, &mut labels)
            });
            levels
                .iter()
                .map(|lv| {
                    let phi = lv.map.matrix(train.x.view())?;
                    let test_phi = test
                        .as_ref()
                        .map(|t| lv.map.matrix(t.x.view()))
                        .transpose()?;
                    grid.kappas
                        .iter()
                        .map(|&kappa| {
                            let config = FitConfig {
                                kappa,
                                c_offset: lv.c,
                                seed,
                                ..base.clone()
                            };
                            let wrap = |e: SdrnError| SdrnError::Replication {
                                kappa,
                                c: lv.c,
                                rep,
                                source: Box::new(e),
                            };
                            let fit =
                                adam_fit(phi.view(), train.y.view(), &config).map_err(wrap)?;
                            match (&lv.design_phi, &test, &test_phi) {
                                (Some(dphi), _, _) => {
                                    Ok(RepOut::Reg(dphi.dot(&fit.gamma).to_vec()))
                                }
                                (None, Some(t), Some(tphi)) => {
                                    let scores = tphi.dot(&fit.gamma);
                                    let y_hat: Vec<u8> =
                                        scores.iter().map(|&s| classify(s, 0.5)).collect();
                                    let y_true: Vec<u8> = t.y.iter().map(|&v| v as u8).collect();
                                    let m = classification_metrics(
                                        &y_hat,
                                        &y_true,
                                        scores.as_slice().expect("contiguous"),
                                    )
                                    .map_err(wrap)?;
                                    Ok(RepOut::Class(m))
                                }
                                _ => unreachable!(
                                    "regression has a design, classification a test sample"
                                ),
                            }
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for (li, lv) in levels.iter().enumerate() {
        for (ki, &kappa) in grid.kappas.iter().enumerate() {
            let metrics = if classification {
                let per: Vec<ClassificationMetrics> = per_rep
                    .iter()
                    .map(|r| match &r[li][ki] {
                        RepOut::Class(m) => *m,
                        RepOut::Reg(_) => unreachable!(),
                    })
                    .collect();
                MetricSet::Classification(average_classification(&per)?)
            } else {
                let preds: Vec<Vec<f64>> = per_rep
                    .iter()
                    .map(|r| match &r[li][ki] {
                        RepOut::Reg(p) => p.clone(),
                        RepOut::Class(_) => unreachable!(),
                    })
                    .collect();
                MetricSet::Regression(regression_metrics(&preds, &design_truth)?)
            };
            cells.push(CellReport {
                kappa,
                c: lv.c,
                m: lv.m,
                r: lv.r,
                basis_size: lv.map.len(),
                metrics,
            });
        }
    }
    let score = |cell: &CellReport| match &cell.metrics {
        MetricSet::Regression(m) => m.avg_mse,
        MetricSet::Classification(m) => -m.accuracy,
    };
    let best = (0..cells.len())
        .min_by(|&a, &b| score(&cells[a]).total_cmp(&score(&cells[b])))
        .unwrap_or(0);
    Ok(SimReport {
        model: spec.model,
        n: spec.n,
        noise: spec.noise,
        loss: base.loss,
        reps,
        seed: spec.seed,
        epochs: base.epochs,
        cells,
        best,
    })
}

/// Table of `|V_m^(1)|` for `d = 2..8` (rows) and `m = 0..4` (columns).
pub const REFERENCE_BASIS_COUNTS: [[u64; 5]; 7] = [
    [4, 8, 17, 37, 81],
    [8, 20, 50, 123, 297],
    [16, 48, 136, 368, 961],
    [32, 112, 352, 1032, 2882],
    [64, 256, 880, 2768, 8204],
    [128, 576, 2144, 7184, 22472],
    [256, 1280, 5120, 18176, 59744],
];

/// Settings for [`verify_bounds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub seed: u64,
    pub square_levels: Vec<u32>,
    pub square_grid: usize,
    pub pair_levels: Vec<u32>,
    pub pair_grid: usize,
    pub factor_dims: Vec<usize>,
    pub factor_levels: Vec<u32>,
    pub factor_samples: usize,
    pub factor_max_level_sum: u32,
    pub sandwich_dims: Vec<usize>,
    pub sandwich_levels: Vec<u32>,
    pub decay_levels: Vec<u32>,
    pub decay_samples: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            square_levels: (1..=8).collect(),
            square_grid: 10_000,
            pair_levels: (1..=6).collect(),
            pair_grid: 201,
            factor_dims: vec![2, 3, 4, 5, 8],
            factor_levels: vec![2, 4, 6],
            factor_samples: 1000,
            factor_max_level_sum: 6,
            sandwich_dims: (2..=8).collect(),
            sandwich_levels: (0..=6).collect(),
            decay_levels: (1..=6).collect(),
            decay_samples: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub sweep: String,
    pub params: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    /// Informational rows are reported but do not count as violations.
    pub informational: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn violations(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| !c.pass && !c.informational)
            .count()
    }

    pub fn all_pass(&self) -> bool {
        self.violations() == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,params,measured,bound,pass,informational\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},\"{}\",{:.6e},{:.6e},{},{}",
                c.sweep, c.params, c.measured, c.bound, c.pass, c.informational
            );
        }
        out
    }
}

fn check(sweep: &str, params: String, measured: f64, bound: f64, pass: bool) -> BoundCheck {
    BoundCheck {
        sweep: sweep.into(),
        params,
        measured,
        bound,
        pass,
        informational: false,
    }
}

/// Max of `|f_R(x) - x²|` over `grid + 1` equispaced points and the argmax.
pub fn square_sweep(r: u32, grid: usize) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    for i in 0..=grid {
        let x = i as f64 / grid as f64;
        let e = (square_approx(r, x) - x * x).abs();
        if e > best.0 {
            best = (e, x);
        }
    }
    best
}

/// Max of `|f̃_R(x, y) - xy|` over a `grid × grid` lattice of `[0,1]²`.
pub fn pair_sweep(r: u32, grid: usize) -> f64 {
    let step = 1.0 / (grid - 1) as f64;
    (0..grid)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 * step;
            (0..grid)
                .map(|j| {
                    let y = j as f64 * step;
                    (pair_product(r, x, y) - x * y).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Max of `|φ̃(x) - φ(x)|` over random basis ids of `V_m^(1)` (with `m` capped
/// so the basis stays small) and random points, the point drawn near the
/// support of the id half of the time.
pub fn factor_sweep(
    d: usize,
    r: u32,
    samples: usize,
    max_level_sum: u32,
    seed: u64,
) -> Result<f64> {
    let m = (0..=max_level_sum)
        .rev()
        .find(|&m| basis_count(d, m) <= 200_000)
        .unwrap_or(0);
    let basis = SparseGridBasis::new(d, m)?;
    let mut rng = stream_rng(seed ^ (d as u64) << 8 ^ r as u64, Stream::Sweep);
    let mut worst = 0.0f64;
    for k in 0..samples {
        let id = &basis.ids()[rng.gen_range(0..basis.len())];
        let x: Vec<f64> = if k % 2 == 0 {
            (0..d).map(|_| open_uniform(&mut rng)).collect()
        } else {
            id.grid_point()
                .iter()
                .zip(id.levels())
                .map(|(&c, &l)| {
                    (c + (2.0 * open_uniform(&mut rng) - 1.0) * 0.5f64.powi(l as i32))
                        .clamp(0.0, 1.0)
                })
                .collect()
        };
        let e = (approx_basis_eval(r, id, &x)? - exact_basis_eval(id, &x)).abs();
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Test function `16 x(1-x) y(1-y)`; its mixed fourth derivative is the
/// constant 64.
pub fn bump_2d(x: &[f64]) -> f64 {
    16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])
}

pub const BUMP_2D_D2_NORM: f64 = 64.0;

/// Monte-Carlo `L²` error of the level-`m` sparse-grid interpolant of [`bump_2d`].
pub fn interpolation_error(m: u32, samples: usize, seed: u64) -> Result<f64> {
    let fm = interpolate(bump_2d, 2, m)?;
    let mut rng = stream_rng(seed, Stream::Sweep);
    let pts: Vec<[f64; 2]> = (0..samples)
        .map(|_| [open_uniform(&mut rng), open_uniform(&mut rng)])
        .collect();
    let sq: Vec<f64> = pts
        .par_iter()
        .map(|p| {
            let e = fm.evaluate(p).expect("dimension matches") - bump_2d(p);
            e * e
        })
        .collect();
    let sum: f64 = sq.iter().sum();
    Ok((sum / samples as f64).sqrt())
}

/// Runs the cardinality, sandwich, square, pair, d-factor and interpolation
/// sweeps. Bound violations are report entries, not errors.
pub fn verify_bounds(config: &BoundsConfig) -> Result<BoundReport> {
    let mut checks = Vec::new();
    for (row, d) in (2..=8usize).enumerate() {
        for m in 0..=4u32 {
            let count = basis_count(d, m) as f64;
            let expected = REFERENCE_BASIS_COUNTS[row][m as usize] as f64;
            checks.push(check(
                "cardinality",
                format!("d={d} m={m}"),
                count,
                expected,
                count == expected,
            ));
        }
    }
    for &d in &config.sandwich_dims {
        for &m in &config.sandwich_levels {
            let count = basis_count(d, m) as f64;
            let (lo, hi) = cardinality_bounds(d, m)?;
            let mut c = check(
                "sandwich",
                format!("d={d} m={m} lower={lo}"),
                count,
                hi,
                lo <= count && count <= hi,
            );
            c.informational = m == 0;
            checks.push(c);
        }
    }
    for &r in &config.square_levels {
        let (err, _) = square_sweep(r, config.square_grid);
        let bound = 2f64.powi(-2 * r as i32 - 2);
        checks.push(check(
            "square",
            format!("R={r}"),
            err,
            bound,
            err <= bound * (1.0 + 1e-12),
        ));
    }
    for &r in &config.pair_levels {
        let err = pair_sweep(r, config.pair_grid);
        let bound = pair_error_bound(r);
        checks.push(check(
            "pair",
            format!("R={r}"),
            err,
            bound,
            err <= bound * (1.0 + 1e-12),
        ));
    }
    for &d in &config.factor_dims {
        for &r in &config.factor_levels {
            let err = factor_sweep(
                d,
                r,
                config.factor_samples,
                config.factor_max_level_sum,
                config.seed,
            )?;
            let bound = tree_error_bound(r, d);
            checks.push(check(
                "d-factor",
                format!("d={d} R={r}"),
                err,
                bound,
                err <= bound * (1.0 + 1e-12),
            ));
        }
    }
    for &m in &config.decay_levels {
        let err = interpolation_error(m, config.decay_samples, config.seed)?;
        let bound = approximation_bound(2, m, BUMP_2D_D2_NORM, 1.0)?;
        checks.push(check(
            "interpolation",
            format!("d=2 m={m}"),
            err,
            bound,
            err <= bound,
        ));
    }
    Ok(BoundReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_one_at_origin() {
        assert!((SimModel::One.mean(&[0.0; 5]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn model_four_zero_log_odds_gives_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        let mut x = [0.0; 10];
        x[4] = 0.5;
        // μ = 0.5·cos 0 - 1.5 + 1 = 0
        assert!(SimModel::log_odds(&x).abs() < 1e-15);
        assert!((SimModel::Four.mean(&x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn laplace_variance() {
        let mut rng = stream_rng(3, Stream::Noise);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = standard_laplace(&mut rng);
            s += v;
            s2 += v * v;
        }
        let var = s2 / n as f64 - (s / n as f64).powi(2);
        assert!((var - 2.0).abs() < 0.04, "{var}");
    }

    #[test]
    fn regression_metric_examples() {
        let truth = vec![1.0, 2.0];
        let m = regression_metrics(&[truth.clone(), truth.clone()], &truth).unwrap();
        assert_eq!((m.avg_bias2, m.avg_variance, m.avg_mse), (0.0, 0.0, 0.0));
        let m = regression_metrics(&[vec![1.5, 2.0]], &truth).unwrap();
        assert_eq!(m.avg_variance, 0.0);
        assert_eq!(m.avg_mse, m.avg_bias2);
        // point 0: preds 0,2 → mean 1, bias 0, var 1, mse 1; point 1: preds 3,3 → bias² 1
        let m = regression_metrics(&[vec![0.0, 3.0], vec![2.0, 3.0]], &truth).unwrap();
        assert_eq!(m.avg_bias2, 0.5);
        assert_eq!(m.avg_variance, 0.5);
        assert_eq!(m.avg_mse, 1.0);
        assert!(regression_metrics(&[vec![1.0]], &truth).is_err());
    }

    #[test]
    fn classification_metric_examples() {
        let y = [1u8, 0, 1, 0];
        let s = [0.9, 0.1, 0.8, 0.3];
        let m = classification_metrics(&y, &y, &s).unwrap();
        for v in [
            m.sensitivity,
            m.specificity,
            m.precision,
            m.recall,
            m.f1,
            m.auc,
        ] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!(m.accuracy, 1.0);
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        assert_eq!(
            classification_metrics(&flipped, &y, &s).unwrap().accuracy,
            0.0
        );
        let scores: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        assert_eq!(auc(&y, &scores), Some(1.0));
        let ones = [1u8, 1];
        let m = classification_metrics(&ones, &ones, &[0.2, 0.4]).unwrap();
        assert_eq!(m.specificity, None);
        assert_eq!(m.auc, None);
        assert_eq!(auc(&[1, 0], &[0.5, 0.5]), Some(0.5));
    }

    #[test]
    fn splitmix_is_stable() {
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn small_replication_grid() {
        let spec = SimModelSpec {
            model: SimModel::One,
            n: 64,
            noise: NoiseKind::Normal,
            seed: 1,
        };
        let cfg = FitConfig {
            epochs: 50,
            ..Default::default()
        };
        let grid = TuningGrid {
            kappas: vec![0.5, 1.0],
            cs: vec![-1, 0],
        };
        let a = run_replications(&spec, &cfg, &grid, 2).unwrap();
        assert_eq!(a.cells.len(), 4);
        let b = run_replications(&spec, &cfg, &grid, 2).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
