//! Sparse deep ReLU network estimator.
//!
//! A fitted model is `x ↦ φ̃(x)ᵀγ`, where `φ̃` stacks the ReLU product
//! approximations of every sparse-grid hat function and `γ` minimizes
//!
//! ```text
//! g(γ) = Σ_i ρ(φ̃(X_i)ᵀγ, Y_i) + ½ λ* γᵀγ,     λ* = κ
//! ```
//!
//! with ADAM, starting from `γ = 0`.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrnError};
use crate::loss::{sigmoid, LossSpec};
use crate::relu::{pair_product, pairing_schedule, PairStep};
use crate::sparse_grid::{hat_eval, SparseGridBasis};

/// Version tag written into model files.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// `m = max(⌊0.2 log₂ n⌋ + c, 0)` and `R = 3 max(⌊0.2 log₂ n⌋, m)`.
///
/// `R` is raised to 1 when the schedule would give 0 (only for `n < 32`).
pub fn hyperparams_from_n(n: usize, c: i32) -> (u32, u32) {
    let base = (0.2 * (n.max(1) as f64).log2()).floor() as i64;
    let m = (base + c as i64).max(0);
    let r = (3 * base.max(m)).max(1);
    (m as u32, r as u32)
}

/// Per-column min-max scaling onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(SdrnError::EmptyInput("scaling needs at least two rows"));
        }
        let mut min = Vec::with_capacity(x.ncols());
        let mut max = Vec::with_capacity(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SdrnError::Data(format!(
                    "column {j} contains non-finite values"
                )));
            }
            if hi <= lo {
                return Err(SdrnError::ConstantColumn { column: j });
            }
            min.push(lo);
            max.push(hi);
        }
        Ok(Self { min, max })
    }

    /// Identity scaler for data already on the unit cube.
    pub fn unit(d: usize) -> Self {
        Self {
            min: vec![0.0; d],
            max: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scaled and clamped copy of one raw point.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect())
    }

    pub fn transform_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - self.min[j]) / (self.max[j] - self.min[j])).clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }
}

/// Min-max scaling of a design matrix; returns the scaled copy and the scaler.
pub fn scale_covariates(x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Scaler)> {
    let scaler = Scaler::fit(x)?;
    let scaled = scaler.transform_matrix(x)?;
    Ok((scaled, scaler))
}

// Shared-subtree evaluation plan for all φ̃ of a basis. Identical sub-products
// across basis ids are computed once per point; the arithmetic per id is the
// same sequence of pair products as `tree_product`.
#[derive(Clone, Debug)]
struct ProductPlan {
    // per coordinate: distinct (level, node) leaves
    leaves: Vec<Vec<(u32, u32)>>,
    // per tree level, per position: pair entries or a forward of a position
    levels: Vec<Vec<PlanNode>>,
    // slot of every basis id in the root position
    root_slots: Vec<usize>,
}

#[derive(Clone, Debug)]
enum PlanNode {
    Pair {
        left: usize,
        right: usize,
        entries: Vec<(usize, usize)>,
    },
    Forward(usize),
}

impl ProductPlan {
    fn new(basis: &SparseGridBasis) -> Self {
        let d = basis.dim();
        let mut leaves: Vec<Vec<(u32, u32)>> = vec![Vec::new(); d];
        let mut leaf_index: Vec<HashMap<(u32, u32), usize>> = vec![HashMap::new(); d];
        let mut slots: Vec<Vec<usize>> = basis
            .ids()
            .iter()
            .map(|id| {
                (0..d)
                    .map(|j| {
                        let key = (id.levels()[j], id.nodes()[j]);
                        *leaf_index[j].entry(key).or_insert_with(|| {
                            leaves[j].push(key);
                            leaves[j].len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        let mut levels = Vec::new();
        for schedule in pairing_schedule(d) {
            let mut nodes = Vec::with_capacity(schedule.len());
            let mut index: Vec<HashMap<(usize, usize), usize>> =
                vec![HashMap::new(); schedule.len()];
            let mut entries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schedule.len()];
            for s in slots.iter_mut() {
                let next: Vec<usize> = schedule
                    .iter()
                    .enumerate()
                    .map(|(pos, step)| match *step {
                        PairStep::Pair(a, b) => {
                            let key = (s[a], s[b]);
                            *index[pos].entry(key).or_insert_with(|| {
                                entries[pos].push(key);
                                entries[pos].len() - 1
                            })
                        }
                        PairStep::Forward(a) => s[a],
                    })
                    .collect();
                *s = next;
            }
            for (pos, step) in schedule.iter().enumerate() {
                nodes.push(match *step {
                    PairStep::Pair(a, b) => PlanNode::Pair {
                        left: a,
                        right: b,
                        entries: std::mem::take(&mut entries[pos]),
                    },
                    PairStep::Forward(a) => PlanNode::Forward(a),
                });
            }
            levels.push(nodes);
        }
        let root_slots = slots.iter().map(|s| s[0]).collect();
        Self {
            leaves,
            levels,
            root_slots,
        }
    }

    fn eval_into(&self, r: u32, x: &[f64], out: &mut [f64]) {
        let mut current: Vec<Vec<f64>> = self
            .leaves
            .iter()
            .zip(x)
            .map(|(leaf, &xj)| leaf.iter().map(|&(l, s)| hat_eval(l, s, xj)).collect())
            .collect();
        let last = self.levels.len();
        for (depth, level) in self.levels.iter().enumerate() {
            let internal = depth + 1 < last;
            let next: Vec<Vec<f64>> = level
                .iter()
                .map(|node| match node {
                    PlanNode::Pair {
                        left,
                        right,
                        entries,
                    } => {
                        let (lv, rv) = (&current[*left], &current[*right]);
                        entries
                            .iter()
                            .map(|&(a, b)| {
                                let v = pair_product(r, lv[a], rv[b]);
                                if internal {
                                    v.clamp(0.0, 1.0)
                                } else {
                                    v
                                }
                            })
                            .collect()
                    }
                    PlanNode::Forward(a) => std::mem::take(&mut current[*a]),
                })
                .collect();
            current = next;
        }
        let root = &current[0];
        for (o, &slot) in out.iter_mut().zip(&self.root_slots) {
            *o = root[slot];
        }
    }
}

/// Maps points of `[0,1]^d` to the vector `φ̃(x)` in basis order.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    basis: SparseGridBasis,
    accuracy_level: u32,
    plan: ProductPlan,
}

impl FeatureMap {
    pub fn new(basis: SparseGridBasis, accuracy_level: u32) -> Result<Self> {
        if accuracy_level == 0 {
            return Err(SdrnError::Domain(
                "accuracy level R must be at least 1".into(),
            ));
        }
        let plan = ProductPlan::new(&basis);
        Ok(Self {
            basis,
            accuracy_level,
            plan,
        })
    }

    pub fn basis(&self) -> &SparseGridBasis {
        &self.basis
    }

    pub fn accuracy_level(&self) -> u32 {
        self.accuracy_level
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.plan.eval_into(self.accuracy_level, x, &mut out);
        Ok(out)
    }

    /// `Φ` with row `i` equal to `φ̃(X_i)`; rows are computed in parallel.
    pub fn matrix(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let p = self.len();
        let n = x.nrows();
        let mut data = vec![0.0; n * p];
        if p > 0 {
            data.par_chunks_mut(p).enumerate().for_each(|(i, out)| {
                let xi: Vec<f64> = x.row(i).to_vec();
                self.plan.eval_into(self.accuracy_level, &xi, out);
            });
        }
        Ok(Array2::from_shape_vec((n, p), data).expect("shape matches buffer"))
    }
}

/// Convenience wrapper for [`FeatureMap::matrix`].
pub fn feature_matrix(map: &FeatureMap, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    map.matrix(x)
}

fn check_shapes(
    gamma: ArrayView1<'_, f64>,
    phi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<()> {
    if phi.ncols() != gamma.len() {
        return Err(SdrnError::DimensionMismatch {
            expected: phi.ncols(),
            found: gamma.len(),
        });
    }
    if phi.nrows() != y.len() {
        return Err(SdrnError::DimensionMismatch {
            expected: phi.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

/// `Σ_i ρ(Φ_i γ, y_i) + ½ λ* γᵀγ`.
pub fn objective(
    gamma: ArrayView1<'_, f64>,
    phi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    loss: &LossSpec,
    lambda_star: f64,
) -> Result<f64> {
    check_shapes(gamma, phi, y)?;
    if lambda_star < 0.0 {
        return Err(SdrnError::InvalidConfig(
            "ridge weight must be non-negative".into(),
        ));
    }
    let pred = phi.dot(&gamma);
    Ok(data_term(&pred, y, loss) + 0.5 * lambda_star * gamma.dot(&gamma))
}

/// `Φᵀ ρ'(Φγ, y) + λ* γ`.
pub fn objective_gradient(
    gamma: ArrayView1<'_, f64>,
    phi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    loss: &LossSpec,
    lambda_star: f64,
) -> Result<Array1<f64>> {
    check_shapes(gamma, phi, y)?;
    let pred = phi.dot(&gamma);
    let mut grad = gamma.to_owned() * lambda_star;
    accumulate_gradient(&mut grad, phi, &pred, y, loss, None);
    Ok(grad)
}

fn data_term(pred: &Array1<f64>, y: ArrayView1<'_, f64>, loss: &LossSpec) -> f64 {
    pred.iter()
        .zip(y.iter())
        .map(|(&f, &yi)| loss.value(f, yi))
        .sum()
}

// grad += Σ_{i ∈ rows} ρ'(pred_i, y_i) Φ_i
fn accumulate_gradient(
    grad: &mut Array1<f64>,
    phi: ArrayView2<'_, f64>,
    pred: &Array1<f64>,
    y: ArrayView1<'_, f64>,
    loss: &LossSpec,
    rows: Option<&[usize]>,
) {
    let mut add = |i: usize, f: f64| {
        let w = loss.subgradient(f, y[i]);
        if w != 0.0 {
            grad.scaled_add(w, &phi.row(i));
        }
    };
    match rows {
        Some(rows) => rows.iter().zip(pred.iter()).for_each(|(&i, &f)| add(i, f)),
        None => pred.iter().enumerate().for_each(|(i, &f)| add(i, f)),
    }
}

// One sweep over the rows: returns the data term at `gamma` and adds the
// loss gradient into `grad`, touching each row of `phi` once.
fn fused_pass(
    phi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    gamma: &Array1<f64>,
    loss: &LossSpec,
    grad: &mut Array1<f64>,
) -> f64 {
    let g = gamma.as_slice().expect("owned vector is contiguous");
    let out = grad.as_slice_mut().expect("owned vector is contiguous");
    let mut total = 0.0;
    for (row, &yi) in phi.outer_iter().zip(y.iter()) {
        let f;
        let w;
        match row.as_slice() {
            Some(r) => {
                f = dot(r, g);
                w = loss.subgradient(f, yi);
                if w != 0.0 {
                    for (o, &v) in out.iter_mut().zip(r) {
                        *o += w * v;
                    }
                }
            }
            None => {
                f = row.dot(gamma);
                w = loss.subgradient(f, yi);
                if w != 0.0 {
                    for (o, &v) in out.iter_mut().zip(row.iter()) {
                        *o += w * v;
                    }
                }
            }
        }
        total += loss.value(f, yi);
    }
    total
}

// Eight-lane dot product; fixed summation order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for k in 0..chunks {
        let (x, z) = (&a[8 * k..8 * k + 8], &b[8 * k..8 * k + 8]);
        for j in 0..8 {
            acc[j] += x[j] * z[j];
        }
    }
    let mut tail = 0.0;
    for j in 8 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SdrnError::InvalidConfig(format!(
                "invalid ADAM parameters {self:?}"
            )))
        }
    }
}

/// First and second moment estimates with the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Array1<f64>,
    pub v: Array1<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(p: usize) -> Self {
        Self {
            m: Array1::zeros(p),
            v: Array1::zeros(p),
            t: 0,
        }
    }

    /// Applies one update to `gamma` and returns the largest coordinate change.
    pub fn step(
        &mut self,
        gamma: &mut Array1<f64>,
        grad: &Array1<f64>,
        params: &AdamParams,
    ) -> f64 {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - params.beta1.powi(t);
        let c2 = 1.0 - params.beta2.powi(t);
        let mut max_change = 0.0f64;
        for (((g, m), v), &h) in gamma
            .iter_mut()
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
            .zip(grad.iter())
        {
            *m = params.beta1 * *m + (1.0 - params.beta1) * h;
            *v = params.beta2 * *v + (1.0 - params.beta2) * h * h;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            let delta = params.alpha * m_hat / (v_hat.sqrt() + params.epsilon);
            *g -= delta;
            max_change = max_change.max(delta.abs());
        }
        max_change
    }
}

/// Optimizer settings for one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss: LossSpec,
    /// Ridge weight; `λ = κ/n`, so the summed objective uses `λ* = κ`.
    pub kappa: f64,
    /// Offset `c` in the `m` schedule.
    pub c_offset: i32,
    pub m_override: Option<u32>,
    pub r_override: Option<u32>,
    pub epochs: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub adam: AdamParams,
    /// Mini-batch size; `None` runs full-batch steps.
    pub batch_size: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::Quadratic,
            kappa: 1.0,
            c_offset: 0,
            m_override: None,
            r_override: None,
            epochs: 5000,
            tolerance: 1e-8,
            seed: 0,
            adam: AdamParams::default(),
            batch_size: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.epochs == 0 {
            return Err(SdrnError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(SdrnError::InvalidConfig(format!(
                "kappa must be finite and >= 0, got {}",
                self.kappa
            )));
        }
        if self.tolerance < 0.0 {
            return Err(SdrnError::InvalidConfig("tolerance must be >= 0".into()));
        }
        if self.r_override == Some(0) {
            return Err(SdrnError::InvalidConfig("R must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(SdrnError::InvalidConfig(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `(m, R)` for a sample of size `n`, honouring explicit overrides.
    pub fn resolve_levels(&self, n: usize) -> (u32, u32) {
        let (m, r) = hyperparams_from_n(n, self.c_offset);
        (self.m_override.unwrap_or(m), self.r_override.unwrap_or(r))
    }

    pub fn lambda_star(&self) -> f64 {
        self.kappa
    }
}

/// Result of [`adam_fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamFit {
    pub gamma: Array1<f64>,
    /// Objective before every step (full batch) or every epoch (mini-batch).
    pub trace: Vec<f64>,
    pub final_objective: f64,
    pub epochs_run: usize,
    pub converged: bool,
}

/// Minimizes the penalized empirical risk with ADAM from `γ = 0`.
pub fn adam_fit(
    phi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &FitConfig,
) -> Result<AdamFit> {
    config.validate()?;
    if phi.nrows() != y.len() {
        return Err(SdrnError::DimensionMismatch {
            expected: phi.nrows(),
            found: y.len(),
        });
    }
    for &yi in y.iter() {
        config.loss.check_target(yi)?;
    }
    let p = phi.ncols();
    let lambda = config.lambda_star();
    let loss = config.loss;
    let mut gamma = Array1::<f64>::zeros(p);
    let mut state = AdamState::new(p);
    let mut trace = Vec::with_capacity(config.epochs.min(100_000));
    let mut last_finite = 0.0;
    let mut converged = false;
    let mut epochs_run = 0;

    match config.batch_size.filter(|&b| b < phi.nrows()) {
        None => {
            let mut grad = Array1::<f64>::zeros(p);
            for epoch in 0..config.epochs {
                grad.assign(&gamma);
                grad *= lambda;
                let obj =
                    fused_pass(phi, y, &gamma, &loss, &mut grad) + 0.5 * lambda * gamma.dot(&gamma);
                if !obj.is_finite() {
                    return Err(SdrnError::NonFiniteObjective {
                        step: epoch,
                        last_finite,
                    });
                }
                last_finite = obj;
                trace.push(obj);
                let change = state.step(&mut gamma, &grad, &config.adam);
                epochs_run = epoch + 1;
                if change <= config.tolerance {
                    converged = true;
                    break;
                }
            }
        }
        Some(batch) => {
            let n = phi.nrows();
            let scale = n as f64 / batch as f64;
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
            let mut order: Vec<usize> = (0..n).collect();
            'epochs: for epoch in 0..config.epochs {
                let obj = objective(gamma.view(), phi, y, &loss, lambda)?;
                if !obj.is_finite() {
                    return Err(SdrnError::NonFiniteObjective {
                        step: epoch,
                        last_finite,
                    });
                }
                last_finite = obj;
                trace.push(obj);
                order.shuffle(&mut rng);
                let mut max_change = 0.0f64;
                for rows in order.chunks(batch) {
                    let pred: Array1<f64> = rows.iter().map(|&i| phi.row(i).dot(&gamma)).collect();
                    let mut grad = Array1::<f64>::zeros(p);
                    accumulate_gradient(&mut grad, phi, &pred, y, &loss, Some(rows));
                    grad *= scale * rows.len() as f64 / batch as f64;
                    grad.scaled_add(lambda, &gamma);
                    max_change = max_change.max(state.step(&mut gamma, &grad, &config.adam));
                }
                epochs_run = epoch + 1;
                if max_change <= config.tolerance {
                    converged = true;
                    break 'epochs;
                }
            }
        }
    }
    let final_objective = objective(gamma.view(), phi, y, &loss, lambda)?;
    if !final_objective.is_finite() {
        return Err(SdrnError::NonFiniteObjective {
            step: epochs_run,
            last_finite,
        });
    }
    Ok(AdamFit {
        gamma,
        trace,
        final_objective,
        epochs_run,
        converged,
    })
}

/// Training-time summaries stored with a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub final_objective: f64,
    /// `max_i |f̂(X_i)|` over the training inputs (proxy for the sup-norm bound `B`).
    pub train_sup_norm: f64,
    /// `max_i |f̂(X_i) - Y_i|`, the `M` used for the quadratic Lipschitz constant.
    pub residual_bound: f64,
    pub lipschitz_constant: f64,
    pub epochs_run: usize,
    pub converged: bool,
    pub basis_size: usize,
    pub n_train: usize,
    /// Predictions for the first training rows, via the same path as `predict`.
    pub fitted_head: Vec<f64>,
}

// On-disk layout of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    d: usize,
    m: u32,
    #[serde(rename = "R")]
    r: u32,
    loss: LossSpec,
    kappa: f64,
    #[serde(default)]
    covariates: Vec<String>,
    #[serde(default)]
    target: Option<String>,
    scaler: Scaler,
    gamma: Vec<f64>,
    diagnostics: FitDiagnostics,
}

/// A fitted estimator.
#[derive(Clone, Debug)]
pub struct SdrnModel {
    file: ModelFile,
    features: FeatureMap,
}

const FITTED_HEAD: usize = 10;

impl SdrnModel {
    /// Fits on raw covariates: scales columns, picks `(m, R)` and runs ADAM.
    pub fn fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        let (scaled, scaler) = scale_covariates(x)?;
        Self::fit_scaled(x, scaled.view(), y, scaler, config)
    }

    /// Fits on covariates already on the unit cube, with the identity scaler.
    pub fn fit_unit_cube(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        config: &FitConfig,
    ) -> Result<Self> {
        config.validate()?;
        let scaler = Scaler::unit(x.ncols());
        let scaled = scaler.transform_matrix(x)?;
        Self::fit_scaled(x, scaled.view(), y, scaler, config)
    }

    fn fit_scaled(
        raw: ArrayView2<'_, f64>,
        scaled: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        scaler: Scaler,
        config: &FitConfig,
    ) -> Result<Self> {
        let n = scaled.nrows();
        if n != y.len() {
            return Err(SdrnError::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        let d = scaled.ncols();
        let (m, r) = config.resolve_levels(n);
        let features = FeatureMap::new(SparseGridBasis::new(d, m)?, r)?;
        let phi = features.matrix(scaled)?;
        Self::fit_with_features(features, &phi, raw, y, scaler, config)
    }

    /// Fits with a precomputed feature matrix of the scaled training inputs.
    pub fn fit_with_features(
        features: FeatureMap,
        phi: &Array2<f64>,
        raw: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        scaler: Scaler,
        config: &FitConfig,
    ) -> Result<Self> {
        let fit = adam_fit(phi.view(), y, config)?;
        let fitted = phi.dot(&fit.gamma);
        let train_sup_norm = fitted.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let residual_bound = fitted
            .iter()
            .zip(y.iter())
            .fold(0.0f64, |a, (&f, &yi)| a.max((f - yi).abs()));
        let d = features.dim();
        let mut model = Self {
            file: ModelFile {
                schema_version: MODEL_SCHEMA_VERSION,
                d,
                m: features.basis().max_level_sum(),
                r: features.accuracy_level(),
                loss: config.loss,
                kappa: config.kappa,
                covariates: (1..=d).map(|j| format!("x{j}")).collect(),
                target: None,
                scaler,
                gamma: fit.gamma.to_vec(),
                diagnostics: FitDiagnostics {
                    final_objective: fit.final_objective,
                    train_sup_norm,
                    residual_bound,
                    lipschitz_constant: config.loss.lipschitz_constant(residual_bound),
                    epochs_run: fit.epochs_run,
                    converged: fit.converged,
                    basis_size: features.len(),
                    n_train: y.len(),
                    fitted_head: Vec::new(),
                },
            },
            features,
        };
        let head = raw
            .axis_iter(Axis(0))
            .take(FITTED_HEAD)
            .map(|row| model.predict(&row.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        model.file.diagnostics.fitted_head = head;
        Ok(model)
    }

    pub fn with_names(mut self, covariates: Vec<String>, target: Option<String>) -> Result<Self> {
        if covariates.len() != self.file.d {
            return Err(SdrnError::DimensionMismatch {
                expected: self.file.d,
                found: covariates.len(),
            });
        }
        self.file.covariates = covariates;
        self.file.target = target;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.file.d
    }

    pub fn m(&self) -> u32 {
        self.file.m
    }

    pub fn accuracy_level(&self) -> u32 {
        self.file.r
    }

    pub fn loss(&self) -> LossSpec {
        self.file.loss
    }

    pub fn kappa(&self) -> f64 {
        self.file.kappa
    }

    pub fn gamma(&self) -> &[f64] {
        &self.file.gamma
    }

    pub fn scaler(&self) -> &Scaler {
        &self.file.scaler
    }

    pub fn covariates(&self) -> &[String] {
        &self.file.covariates
    }

    pub fn target(&self) -> Option<&str> {
        self.file.target.as_deref()
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.file.diagnostics
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Score `φ̃(scale(x))ᵀγ` for one raw point.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let z = self.file.scaler.transform(x)?;
        let row = self.features.row(&z)?;
        Ok(row.iter().zip(&self.file.gamma).map(|(a, b)| a * b).sum())
    }

    /// Scores for every row of a raw design matrix.
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict(&x.row(i).to_vec()))
            .collect()
    }

    /// `sigmoid(score)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.predict(x)?))
    }

    /// Class 1 when `sigmoid(score) ≥ threshold`.
    pub fn predict_class(&self, x: &[f64], threshold: f64) -> Result<u8> {
        Ok(classify(self.predict(x)?, threshold))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| SdrnError::Data("model file has no schema_version".into()))?;
        if version != MODEL_SCHEMA_VERSION as u64 {
            return Err(SdrnError::SchemaVersion {
                found: version as u32,
                supported: MODEL_SCHEMA_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let features = FeatureMap::new(SparseGridBasis::new(file.d, file.m)?, file.r)?;
        if features.len() != file.gamma.len() {
            return Err(SdrnError::Data(format!(
                "model has {} coefficients but the (d={}, m={}) basis has {}",
                file.gamma.len(),
                file.d,
                file.m,
                features.len()
            )));
        }
        if file.scaler.dim() != file.d
            || (!file.covariates.is_empty() && file.covariates.len() != file.d)
        {
            return Err(SdrnError::Data(
                "model scaler or covariate names do not match d".into(),
            ));
        }
        Ok(Self { file, features })
    }
}

/// `1` when `sigmoid(score) ≥ threshold`, else `0`.
pub fn classify(score: f64, threshold: f64) -> u8 {
    u8::from(sigmoid(score) >= threshold)
}

/// One cell of a k-fold grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct CvCell {
    pub kappa: f64,
    pub c: i32,
    /// Mean held-out loss per observation.
    pub cv_loss: f64,
}

/// Plain k-fold cross-validation over a `(κ, c)` grid; returns every cell and
/// the index of the best one. Folds are contiguous after a seeded shuffle.
pub fn kfold_grid_search(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    base: &FitConfig,
    kappas: &[f64],
    cs: &[i32],
    folds: usize,
) -> Result<(Vec<CvCell>, usize)> {
    let n = x.nrows();
    if folds < 2 || folds > n {
        return Err(SdrnError::InvalidConfig(format!(
            "need 2 <= folds <= n, got {folds}"
        )));
    }
    if kappas.is_empty() || cs.is_empty() {
        return Err(SdrnError::InvalidConfig("empty tuning grid".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(base.seed));
    let mut cells = Vec::new();
    for &c in cs {
        for &kappa in kappas {
            let config = FitConfig {
                kappa,
                c_offset: c,
                ..base.clone()
            };
            let mut total = 0.0;
            for k in 0..folds {
                let lo = k * n / folds;
                let hi = (k + 1) * n / folds;
                let test: Vec<usize> = order[lo..hi].to_vec();
                let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
                let xt = x.select(Axis(0), &train);
                let yt = y.select(Axis(0), &train);
                let model = SdrnModel::fit(xt.view(), yt.view(), &config)?;
                for &i in &test {
                    let f = model.predict(&x.row(i).to_vec())?;
                    total += config.loss.value(f, y[i]);
                }
            }
            cells.push(CvCell {
                kappa,
                c,
                cv_loss: total / n as f64,
            });
        }
    }
    let best = cells
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cv_loss.total_cmp(&b.1.cv_loss))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok((cells, best))
}
