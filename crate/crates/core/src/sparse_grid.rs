//! Hierarchical hat basis on sparse grids.
//!
//! A basis function is identified by a level vector `ℓ` and a node vector `s`;
//! in one dimension it is the hat `φ((x - s·2^-ℓ) / 2^-ℓ)` with
//! `φ(t) = max(0, 1 - |t|)`, and in `d` dimensions the tensor product of the
//! one-dimensional hats. The sparse grid space of order `m` keeps every level
//! with `|ℓ|₁ ≤ m` and, per level, every node in the index set `I_ℓ`
//! (`{0, 1}` at level 0, the odd integers below `2^ℓ` above it).
//!
//! Basis ids are ordered lexicographically by `(|ℓ|₁, ℓ, s)`. Coefficient
//! vectors, feature columns and serialized models all rely on that order.

use std::f64::consts::{E, PI};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrnError};
use crate::quadrature::GaussLegendre;

/// Default upper bound on the number of enumerated basis functions.
pub const DEFAULT_BASIS_CAP: usize = 10_000_000;

/// Highest level supported per coordinate; keeps `2^ℓ` exact in `u32`.
pub const MAX_LEVEL: u32 = 30;

/// The index set `I_ℓ` of admissible nodes at `level`, ascending.
pub fn index_set(level: u32) -> Vec<u32> {
    if level == 0 {
        vec![0, 1]
    } else {
        (1..(1u32 << level)).step_by(2).collect()
    }
}

/// `|I_ℓ|`.
pub fn index_set_len(level: u32) -> u64 {
    if level == 0 {
        2
    } else {
        1u64 << (level - 1)
    }
}

/// One-dimensional hat `φ_{ℓ,s}(x)`.
///
/// Points outside `[0, 1]` get the same formula, which vanishes once `x` is
/// more than `2^-ℓ` away from the grid point.
#[inline]
pub fn hat_eval(level: u32, node: u32, x: f64) -> f64 {
    let scale = (1u64 << level) as f64;
    (1.0 - (x * scale - node as f64).abs()).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LevelVector(Vec<u32>);

impl LevelVector {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() {
            return Err(SdrnError::ZeroDimension);
        }
        if let Some(&l) = levels.iter().find(|&&l| l > MAX_LEVEL) {
            return Err(SdrnError::InvalidBasisId(format!(
                "level {l} exceeds the supported maximum {MAX_LEVEL}"
            )));
        }
        Ok(Self(levels))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|ℓ|₁`.
    pub fn l1(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// A `(ℓ, s)` pair naming one tensor-product hat function.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisId {
    level: LevelVector,
    node: Vec<u32>,
}

impl BasisId {
    pub fn new(level: Vec<u32>, node: Vec<u32>) -> Result<Self> {
        let level = LevelVector::new(level)?;
        if node.len() != level.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: level.dim(),
                found: node.len(),
            });
        }
        for (j, (&l, &s)) in level.as_slice().iter().zip(&node).enumerate() {
            let admissible = if l == 0 {
                s <= 1
            } else {
                s % 2 == 1 && s < (1u32 << l)
            };
            if !admissible {
                return Err(SdrnError::InvalidBasisId(format!(
                    "node {s} is not in the index set of level {l} (coordinate {j})"
                )));
            }
        }
        Ok(Self { level, node })
    }

    pub fn dim(&self) -> usize {
        self.node.len()
    }

    pub fn level(&self) -> &LevelVector {
        &self.level
    }

    pub fn levels(&self) -> &[u32] {
        self.level.as_slice()
    }

    pub fn nodes(&self) -> &[u32] {
        &self.node
    }

    /// Grid point `x_{ℓ,s} = s · 2^-ℓ`.
    pub fn grid_point(&self) -> Vec<f64> {
        self.levels()
            .iter()
            .zip(&self.node)
            .map(|(&l, &s)| s as f64 / (1u64 << l) as f64)
            .collect()
    }

    /// Tensor-product hat value without a dimension check.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for ((&l, &s), &xj) in self.levels().iter().zip(&self.node).zip(x) {
            v *= hat_eval(l, s, xj);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    /// One-dimensional hat values of every coordinate.
    pub fn factors(&self, x: &[f64]) -> Vec<f64> {
        self.levels()
            .iter()
            .zip(&self.node)
            .zip(x)
            .map(|((&l, &s), &xj)| hat_eval(l, s, xj))
            .collect()
    }
}

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(l={:?}, s={:?})", self.levels(), self.node)
    }
}

/// `φ_{ℓ,s}(x) = Π_j φ_{ℓ_j,s_j}(x_j)`.
pub fn tensor_hat_eval(id: &BasisId, x: &[f64]) -> Result<f64> {
    if x.len() != id.dim() {
        return Err(SdrnError::DimensionMismatch {
            expected: id.dim(),
            found: x.len(),
        });
    }
    Ok(id.eval_unchecked(x))
}

/// Number of basis functions with `|ℓ|₁ ≤ m` in dimension `d`, saturating.
pub fn basis_count(d: usize, m: u32) -> u128 {
    // by_sum[k] = number of (ℓ, s) over the processed coordinates with |ℓ|₁ = k
    let m = m as usize;
    let mut by_sum = vec![0u128; m + 1];
    by_sum[0] = 1;
    for _ in 0..d {
        let mut next = vec![0u128; m + 1];
        for (k, &ways) in by_sum.iter().enumerate() {
            if ways == 0 {
                continue;
            }
            for l in 0..=(m - k) {
                let add = ways.saturating_mul(index_set_len(l as u32) as u128);
                next[k + l] = next[k + l].saturating_add(add);
            }
        }
        by_sum = next;
    }
    by_sum.iter().fold(0u128, |acc, &w| acc.saturating_add(w))
}

/// Size of the full grid space `V_m^(∞)`, `(2^m + 1)^d`, saturating.
pub fn full_grid_count(d: usize, m: u32) -> u128 {
    let base = (1u128 << m.min(100)) + 1;
    (0..d).fold(1u128, |acc, _| acc.saturating_mul(base))
}

/// The enumerated sparse-grid family `{φ_{ℓ,s} : s ∈ I_ℓ, |ℓ|₁ ≤ m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGridBasis {
    dim: usize,
    max_level_sum: u32,
    ids: Vec<BasisId>,
}

impl SparseGridBasis {
    pub fn new(d: usize, m: u32) -> Result<Self> {
        Self::with_cap(d, m, DEFAULT_BASIS_CAP)
    }

    pub fn with_cap(d: usize, m: u32, cap: usize) -> Result<Self> {
        if d == 0 {
            return Err(SdrnError::ZeroDimension);
        }
        if m > MAX_LEVEL {
            return Err(SdrnError::Domain(format!(
                "m = {m} exceeds the supported maximum level {MAX_LEVEL}"
            )));
        }
        let count = basis_count(d, m);
        if count > cap as u128 {
            return Err(SdrnError::TooManyBasisFunctions { count, cap });
        }
        let mut ids = Vec::with_capacity(count as usize);
        let mut level = vec![0u32; d];
        for sum in 0..=m {
            compositions(sum, 0, &mut level, &mut |lv| push_nodes(lv, &mut ids));
        }
        debug_assert_eq!(ids.len() as u128, count);
        Ok(Self {
            dim: d,
            max_level_sum: m,
            ids,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_level_sum(&self) -> u32 {
        self.max_level_sum
    }

    pub fn ids(&self) -> &[BasisId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Every exact hat value at `x`, in basis order.
    pub fn eval_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(SdrnError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.ids.iter().map(|id| id.eval_unchecked(x)).collect())
    }
}

/// Shorthand for [`SparseGridBasis::new`].
pub fn enumerate_basis(d: usize, m: u32) -> Result<SparseGridBasis> {
    SparseGridBasis::new(d, m)
}

// Level vectors with the given sum, lexicographic order.
fn compositions(remaining: u32, pos: usize, level: &mut [u32], emit: &mut impl FnMut(&[u32])) {
    if pos + 1 == level.len() {
        level[pos] = remaining;
        emit(level);
        return;
    }
    for l in 0..=remaining {
        level[pos] = l;
        compositions(remaining - l, pos + 1, level, emit);
    }
}

fn push_nodes(level: &[u32], out: &mut Vec<BasisId>) {
    let sets: Vec<Vec<u32>> = level.iter().map(|&l| index_set(l)).collect();
    let mut cursor = vec![0usize; level.len()];
    loop {
        let node = cursor.iter().zip(&sets).map(|(&i, s)| s[i]).collect();
        out.push(BasisId {
            level: LevelVector(level.to_vec()),
            node,
        });
        // odometer, last coordinate fastest
        let mut j = level.len();
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            cursor[j] += 1;
            if cursor[j] < sets[j].len() {
                break;
            }
            cursor[j] = 0;
        }
    }
}

/// Closed-form lower and upper bounds on `|V_m^(1)|` for `d ≥ 2`.
///
/// The lower bound `2^{d-1}(2^m + 1)` exceeds the true count `2^d` at `m = 0`;
/// it only holds for `m ≥ 1`.
pub fn cardinality_bounds(d: usize, m: u32) -> Result<(f64, f64)> {
    if d < 2 {
        return Err(SdrnError::Domain(format!(
            "cardinality bounds need d >= 2, got d = {d}"
        )));
    }
    let df = d as f64;
    let mf = m as f64;
    let lower = 2f64.powi(d as i32 - 1) * (2f64.powi(m as i32) + 1.0);
    let upper = 2.0 * (2.0 / PI).sqrt() * (df - 1.0).sqrt() / (mf + df)
        * 2f64.powi(m as i32)
        * (4.0 * E * (mf + df) / (df - 1.0)).powi(d as i32 - 1);
    Ok((lower, upper))
}

/// `6^{-d/2} 2^{-(3/2)|ℓ|₁} ‖D²f‖`, the a-priori bound on one surplus.
pub fn surplus_bound(id: &BasisId, norm_d2f: f64) -> f64 {
    6f64.powf(-(id.dim() as f64) / 2.0) * 2f64.powf(-1.5 * id.level().l1() as f64) * norm_d2f
}

/// Right-hand side of the sparse-grid interpolation error bound
/// `‖f_m - f‖₂ ≤ … ‖D²f‖`.
pub fn approximation_bound(d: usize, m: u32, norm_d2f: f64, c_mu: f64) -> Result<f64> {
    if d < 2 {
        return Err(SdrnError::Domain(format!(
            "the approximation bound needs d >= 2, got d = {d}"
        )));
    }
    if norm_d2f < 0.0 || !norm_d2f.is_finite() {
        return Err(SdrnError::Domain(
            "norm of D²f must be finite and >= 0".into(),
        ));
    }
    if c_mu <= 0.0 || !c_mu.is_finite() {
        return Err(SdrnError::Domain(
            "density bound c_mu must be positive".into(),
        ));
    }
    let decay = 2f64.powi(-2 * m as i32);
    if d == 2 {
        return Ok(c_mu / 18.0 * decay * (m as f64 + 3.0) * norm_d2f);
    }
    let df = d as f64;
    let c_tilde = 0.5 * c_mu / (3.0 * (2.0 * PI).sqrt() * E);
    let growth = (E / 3.0 * (m as f64 + df) / (df - 2.0)).powi(d as i32 - 1);
    Ok(c_tilde * decay * (df - 2.0).sqrt() * growth * norm_d2f)
}

/// Extra error from replacing each hat by its ReLU product approximation:
/// `√(3/8) 2^{-2R} (d-1) (√(2/3))^{d-1} ‖D²f‖`.
pub fn relu_product_error_term(d: usize, r: u32, norm_d2f: f64) -> f64 {
    let df = d as f64;
    (3.0f64 / 8.0).sqrt()
        * 2f64.powi(-2 * r as i32)
        * (df - 1.0)
        * (2.0f64 / 3.0).sqrt().powi(d as i32 - 1)
        * norm_d2f
}

/// Full bound for the ReLU approximator: product-approximation term plus the
/// sparse-grid term of [`approximation_bound`].
pub fn sdrn_approximation_bound(d: usize, m: u32, r: u32, norm_d2f: f64, c_mu: f64) -> Result<f64> {
    let grid = approximation_bound(d, m, norm_d2f, c_mu)?;
    Ok(relu_product_error_term(d, r, norm_d2f) + grid)
}

/// A univariate factor with closed-form second derivative.
#[derive(Clone, Debug, PartialEq)]
pub enum Univariate {
    /// Ascending coefficients `c0 + c1 x + c2 x² + …`.
    Polynomial(Vec<f64>),
    /// `sin(freq · x + phase)`.
    Sine { freq: f64, phase: f64 },
    /// `exp(rate · x)`.
    Exp { rate: f64 },
}

impl Univariate {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Univariate::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            Univariate::Sine { freq, phase } => (freq * x + phase).sin(),
            Univariate::Exp { rate } => (rate * x).exp(),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            Univariate::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * x + (k * (k - 1)) as f64 * ck),
            Univariate::Sine { freq, phase } => -freq * freq * (freq * x + phase).sin(),
            Univariate::Exp { rate } => rate * rate * (rate * x).exp(),
        }
    }
}

/// A function on `[0,1]^d` that can report mixed second derivatives
/// `∂^{2k} f / ∂x_{j1}² … ∂x_{jk}²` over any subset of coordinates.
pub trait MixedSmooth: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// `active[j]` selects the coordinates differentiated twice.
    fn mixed_d2(&self, x: &[f64], active: &[bool]) -> f64;
}

/// `Σ_t c_t Π_j u_{t,j}(x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableSum {
    dim: usize,
    terms: Vec<(f64, Vec<Univariate>)>,
}

impl SeparableSum {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn with_term(mut self, coeff: f64, factors: Vec<Univariate>) -> Result<Self> {
        if factors.len() != self.dim {
            return Err(SdrnError::DimensionMismatch {
                expected: self.dim,
                found: factors.len(),
            });
        }
        self.terms.push((coeff, factors));
        Ok(self)
    }

    /// `‖D²f‖_{L²}` by tensor Gauss quadrature on `cells^d` sub-cubes.
    pub fn d2_l2_norm(&self, cells: usize, order: usize) -> f64 {
        let rule = GaussLegendre::new(order);
        let h = 1.0 / cells as f64;
        let mut pts = Vec::with_capacity(cells * order);
        for c in 0..cells {
            for (t, w) in rule.on_interval(c as f64 * h, (c + 1) as f64 * h) {
                pts.push((t, w));
            }
        }
        let all = vec![true; self.dim];
        let mut idx = vec![0usize; self.dim];
        let mut x = vec![0.0; self.dim];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for j in 0..self.dim {
                x[j] = pts[idx[j]].0;
                w *= pts[idx[j]].1;
            }
            let v = self.mixed_d2(&x, &all);
            total += w * v * v;
            if !advance(&mut idx, pts.len()) {
                break;
            }
        }
        total.sqrt()
    }
}

impl MixedSmooth for SeparableSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, fs)| {
                c * fs
                    .iter()
                    .zip(x)
                    .map(|(u, &xj)| u.value(xj))
                    .product::<f64>()
            })
            .sum()
    }

    fn mixed_d2(&self, x: &[f64], active: &[bool]) -> f64 {
        self.terms
            .iter()
            .map(|(c, fs)| {
                c * fs
                    .iter()
                    .zip(x)
                    .zip(active)
                    .map(|((u, &xj), &a)| {
                        if a {
                            u.second_derivative(xj)
                        } else {
                            u.value(xj)
                        }
                    })
                    .product::<f64>()
            })
            .sum()
    }
}

fn advance(idx: &mut [usize], radix: usize) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < radix {
            return true;
        }
        idx[i] = 0;
    }
    false
}

/// Settings for the integral form of the hierarchical coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Gauss-Legendre points per support cell.
    pub order: usize,
    /// Maximum allowed gap between `order` and `order + 2`.
    pub tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            order: 8,
            tolerance: 1e-10,
        }
    }
}

/// Hierarchical coefficient `γ⁰_{ℓ,s}` from the integral representation
/// `∫ Π_j (-2^{-(ℓ_j+1)} φ_{ℓ_j,s_j}(x_j)) D²f(x) dx`.
///
/// Coordinates at level 0 carry no hat integral: the coefficient there is
/// the nodal value at the corner `x_j = s_j`, so only the level ≥ 1
/// coordinates are differentiated and integrated.
pub fn hierarchical_coefficient<F: MixedSmooth + ?Sized>(
    f: &F,
    id: &BasisId,
    config: QuadratureConfig,
) -> Result<f64> {
    if config.order < 2 {
        return Err(SdrnError::Domain(
            "quadrature order must be at least 2".into(),
        ));
    }
    if f.dim() != id.dim() {
        return Err(SdrnError::DimensionMismatch {
            expected: id.dim(),
            found: f.dim(),
        });
    }
    let coarse = coefficient_at_order(f, id, config.order);
    let fine_order = config.order + 2;
    let refined = coefficient_at_order(f, id, fine_order);
    if (coarse - refined).abs() > config.tolerance * refined.abs().max(1.0) {
        return Err(SdrnError::NonConvergence {
            order: config.order,
            fine: fine_order,
            coarse,
            refined,
        });
    }
    Ok(refined)
}

fn coefficient_at_order<F: MixedSmooth + ?Sized>(f: &F, id: &BasisId, order: usize) -> f64 {
    let rule = GaussLegendre::new(order);
    let d = id.dim();
    let active: Vec<bool> = id.levels().iter().map(|&l| l > 0).collect();
    let mut base = vec![0.0; d];
    // per active coordinate: (x, weight · (-h/2) · φ(x)) on both support cells
    let mut axes: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for j in 0..d {
        let (l, s) = (id.levels()[j], id.nodes()[j]);
        if l == 0 {
            base[j] = s as f64;
            continue;
        }
        let h = 1.0 / (1u64 << l) as f64;
        let centre = s as f64 * h;
        let mut pts = Vec::with_capacity(2 * order);
        for (a, b) in [(centre - h, centre), (centre, centre + h)] {
            for (t, w) in rule.on_interval(a, b) {
                pts.push((t, w * (-0.5 * h) * hat_eval(l, s, t)));
            }
        }
        axes.push((j, pts));
    }
    if axes.is_empty() {
        return f.value(&base);
    }
    let radix = axes[0].1.len();
    let mut idx = vec![0usize; axes.len()];
    let mut x = base;
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for (k, (j, pts)) in axes.iter().enumerate() {
            x[*j] = pts[idx[k]].0;
            w *= pts[idx[k]].1;
        }
        total += w * f.mixed_d2(&x, &active);
        if !advance(&mut idx, radix) {
            break;
        }
    }
    total
}

/// Hierarchical surplus by the nodal stencil.
///
/// Per coordinate with `ℓ_j ≥ 1` the stencil `[-½, 1, -½]` is applied at
/// `(x - h, x, x + h)`; level-0 coordinates use the nodal value. The tensor
/// stencil is the sequential application over coordinates.
pub fn surplus_oracle<F: Fn(&[f64]) -> f64 + ?Sized>(f: &F, id: &BasisId) -> f64 {
    let centre = id.grid_point();
    let spacing: Vec<Option<f64>> = id
        .levels()
        .iter()
        .map(|&l| (l > 0).then(|| 1.0 / (1u64 << l) as f64))
        .collect();
    let active: Vec<usize> = (0..id.dim()).filter(|&j| spacing[j].is_some()).collect();
    if active.is_empty() {
        return f(&centre);
    }
    const OFFSETS: [(f64, f64); 3] = [(-1.0, -0.5), (0.0, 1.0), (1.0, -0.5)];
    let mut idx = vec![0usize; active.len()];
    let mut x = centre.clone();
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for (k, &j) in active.iter().enumerate() {
            let (off, wk) = OFFSETS[idx[k]];
            x[j] = centre[j] + off * spacing[j].unwrap_or(0.0);
            w *= wk;
        }
        total += w * f(&x);
        if !advance(&mut idx, 3) {
            break;
        }
    }
    total
}

/// Coefficients `γ⁰_{ℓ,s}` aligned with a basis; evaluates the interpolant `f_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurplusSet {
    basis: SparseGridBasis,
    coefficients: Vec<f64>,
}

impl SurplusSet {
    pub fn from_nodal<F: Fn(&[f64]) -> f64 + Sync>(basis: SparseGridBasis, f: F) -> Self {
        let coefficients = basis
            .ids()
            .par_iter()
            .map(|id| surplus_oracle(&f, id))
            .collect();
        Self {
            basis,
            coefficients,
        }
    }

    pub fn from_integral<F: MixedSmooth>(
        basis: SparseGridBasis,
        f: &F,
        config: QuadratureConfig,
    ) -> Result<Self> {
        let coefficients = basis
            .ids()
            .par_iter()
            .map(|id| hierarchical_coefficient(f, id, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            basis,
            coefficients,
        })
    }

    pub fn basis(&self) -> &SparseGridBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `f_m(x) = Σ γ⁰_{ℓ,s} φ_{ℓ,s}(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.basis.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: self.basis.dim(),
                found: x.len(),
            });
        }
        Ok(self
            .basis
            .ids()
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, &g)| g != 0.0)
            .map(|(id, &g)| g * id.eval_unchecked(x))
            .sum())
    }

    /// Largest `|γ| / bound` over all ids; at most 1 when the a-priori surplus
    /// bound holds.
    pub fn max_bound_ratio(&self, norm_d2f: f64) -> f64 {
        self.basis
            .ids()
            .iter()
            .zip(&self.coefficients)
            .map(|(id, &g)| {
                let b = surplus_bound(id, norm_d2f);
                if b == 0.0 {
                    if g == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    g.abs() / b
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Sparse-grid interpolant `f_m` of a point-evaluable function.
pub fn interpolate<F: Fn(&[f64]) -> f64 + Sync>(f: F, d: usize, m: u32) -> Result<SurplusSet> {
    Ok(SurplusSet::from_nodal(SparseGridBasis::new(d, m)?, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(l: &[u32], s: &[u32]) -> BasisId {
        BasisId::new(l.to_vec(), s.to_vec()).unwrap()
    }

    fn quad() -> Univariate {
        // x(1 - x)
        Univariate::Polynomial(vec![0.0, 1.0, -1.0])
    }

    #[test]
    fn index_sets() {
        assert_eq!(index_set(0), vec![0, 1]);
        assert_eq!(index_set(1), vec![1]);
        assert_eq!(index_set(2), vec![1, 3]);
        assert_eq!(index_set(3), vec![1, 3, 5, 7]);
    }

    #[test]
    fn basis_id_validation() {
        assert!(BasisId::new(vec![2], vec![2]).is_err());
        assert!(BasisId::new(vec![2], vec![5]).is_err());
        assert!(BasisId::new(vec![0], vec![2]).is_err());
        assert!(BasisId::new(vec![1, 0], vec![1]).is_err());
        assert!(BasisId::new(vec![], vec![]).is_err());
        assert_eq!(id(&[2, 0], &[3, 1]).grid_point(), vec![0.75, 1.0]);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(SparseGridBasis::new(2, 2).unwrap().len(), 17);
        assert_eq!(SparseGridBasis::new(5, 3).unwrap().len(), 1032);
        let b = SparseGridBasis::new(3, 0).unwrap();
        assert_eq!(b.len(), 8);
        assert!(b.ids().iter().all(|i| i.level().l1() == 0));
        assert!(matches!(
            SparseGridBasis::new(0, 2),
            Err(SdrnError::ZeroDimension)
        ));
        assert!(matches!(
            SparseGridBasis::with_cap(8, 4, 1000),
            Err(SdrnError::TooManyBasisFunctions {
                count: 59744,
                cap: 1000
            })
        ));
    }

    #[test]
    fn enumeration_order_is_lexicographic() {
        let b = SparseGridBasis::new(3, 3).unwrap();
        for w in b.ids().windows(2) {
            let ka = (w[0].level().l1(), w[0].levels(), w[0].nodes());
            let kb = (w[1].level().l1(), w[1].levels(), w[1].nodes());
            assert!(ka < kb, "{} !< {}", w[0], w[1]);
        }
    }

    #[test]
    fn count_matches_enumeration() {
        for d in 1..=5 {
            for m in 0..=4 {
                assert_eq!(
                    basis_count(d, m),
                    SparseGridBasis::new(d, m).unwrap().len() as u128
                );
            }
        }
    }

    #[test]
    fn cardinality_bounds_small_cases() {
        let (lo, hi) = cardinality_bounds(2, 2).unwrap();
        assert_eq!(lo, 10.0);
        assert!(lo <= 17.0 && 17.0 <= hi);
        let (lo, hi) = cardinality_bounds(8, 4).unwrap();
        assert!(lo <= 59744.0 && 59744.0 <= hi);
        let (lo, _) = cardinality_bounds(2, 0).unwrap();
        assert_eq!(lo, 4.0);
        assert!(cardinality_bounds(1, 3).is_err());
    }

    #[test]
    fn hat_values() {
        assert_eq!(hat_eval(0, 0, 0.25), 0.75);
        assert_eq!(hat_eval(2, 1, 0.25), 1.0);
        assert!((hat_eval(2, 1, 0.30) - 0.8).abs() < 1e-12);
        assert_eq!(hat_eval(3, 1, 0.9), 0.0);
        assert_eq!(hat_eval(0, 1, 1.5), 0.5);
        assert_eq!(hat_eval(0, 0, -2.0), 0.0);
    }

    #[test]
    fn tensor_hat_values() {
        let c = id(&[1, 1], &[1, 1]);
        assert_eq!(tensor_hat_eval(&c, &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(tensor_hat_eval(&c, &[0.25, 0.5]).unwrap(), 0.5);
        let corner = id(&[0, 0], &[0, 0]);
        assert!((tensor_hat_eval(&corner, &[0.25, 0.25]).unwrap() - 0.5625).abs() < 1e-15);
        assert!(matches!(
            tensor_hat_eval(&c, &[0.5]),
            Err(SdrnError::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn same_level_supports_are_disjoint() {
        for l in 1..=4u32 {
            let nodes = index_set(l);
            for i in 0..=400 {
                let x = i as f64 / 400.0;
                for a in 0..nodes.len() {
                    for b in (a + 1)..nodes.len() {
                        assert_eq!(hat_eval(l, nodes[a], x) * hat_eval(l, nodes[b], x), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn integral_coefficients() {
        let cfg = QuadratureConfig::default();
        let f1 = SeparableSum::new(1).with_term(1.0, vec![quad()]).unwrap();
        let g = hierarchical_coefficient(&f1, &id(&[1], &[1]), cfg).unwrap();
        assert!((g - 0.25).abs() < 1e-14);

        let f2 = SeparableSum::new(2)
            .with_term(1.0, vec![quad(), quad()])
            .unwrap();
        let g = hierarchical_coefficient(&f2, &id(&[1, 1], &[1, 1]), cfg).unwrap();
        assert!((g - 0.0625).abs() < 1e-14);

        let lin = SeparableSum::new(2)
            .with_term(
                0.7,
                vec![
                    Univariate::Polynomial(vec![1.0, 2.0]),
                    Univariate::Polynomial(vec![-1.0, 0.5]),
                ],
            )
            .unwrap();
        for (l, s) in [([1, 0], [1, 1]), ([2, 1], [3, 1]), ([0, 3], [0, 5])] {
            let g = hierarchical_coefficient(&lin, &id(&l, &s), cfg).unwrap();
            assert!(g.abs() < 1e-14, "{g}");
        }
        assert!(hierarchical_coefficient(
            &f1,
            &id(&[1], &[1]),
            QuadratureConfig {
                order: 1,
                tolerance: 1e-10
            }
        )
        .is_err());
    }

    #[test]
    fn non_convergence_is_signalled() {
        // a wildly oscillating D²f cannot be resolved by 2 vs 4 points per cell
        let f = SeparableSum::new(1)
            .with_term(
                1.0,
                vec![Univariate::Sine {
                    freq: 400.0,
                    phase: 0.3,
                }],
            )
            .unwrap();
        let err = hierarchical_coefficient(
            &f,
            &id(&[1], &[1]),
            QuadratureConfig {
                order: 2,
                tolerance: 1e-10,
            },
        );
        assert!(matches!(err, Err(SdrnError::NonConvergence { .. })));
    }

    #[test]
    fn stencil_surplus() {
        let g = surplus_oracle(&|x: &[f64]| x[0] * (1.0 - x[0]), &id(&[1], &[1]));
        assert_eq!(g, 0.25);
        assert_eq!(surplus_oracle(&|x: &[f64]| x[0], &id(&[0], &[1])), 1.0);
        let f = |x: &[f64]| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        assert!((surplus_oracle(&f, &id(&[1, 1], &[1, 1])) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn interpolation_reproduces_grid_values() {
        let f = |x: &[f64]| x[0] * x[1];
        let fm = interpolate(f, 2, 2).unwrap();
        assert_eq!(fm.evaluate(&[0.5, 0.5]).unwrap(), 0.25);

        let lin = |x: &[f64]| 0.3 + 1.5 * x[0] - 2.0 * x[1] + 0.25 * x[2];
        for m in 0..=3 {
            let fm = interpolate(lin, 3, m).unwrap();
            for id in fm.basis().ids() {
                let p = id.grid_point();
                assert!((fm.evaluate(&p).unwrap() - lin(&p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bounds_closed_forms() {
        assert!((approximation_bound(2, 0, 1.0, 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(approximation_bound(3, 2, 0.0, 2.5).unwrap(), 0.0);
        // c̃ 2^-4 ((e/3)·5)², c̃ = 1 / (2 · 3√(2π) e)
        let c_tilde = 1.0 / (2.0 * 3.0 * (2.0 * PI).sqrt() * E);
        let expected = c_tilde / 16.0 * (E / 3.0 * 5.0).powi(2);
        let got = approximation_bound(3, 2, 1.0, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.031378).abs() < 1e-6);
        assert!(approximation_bound(1, 2, 1.0, 1.0).is_err());
        assert!(approximation_bound(3, 2, 1.0, 0.0).is_err());
        let full = sdrn_approximation_bound(3, 2, 4, 1.0, 1.0).unwrap();
        assert!(full > got);
    }

    #[test]
    fn univariate_derivatives() {
        let p = Univariate::Polynomial(vec![1.0, -2.0, 3.0, 0.5]);
        // f'' = 6 + 3x
        assert!((p.second_derivative(0.4) - 7.2).abs() < 1e-14);
        assert!((p.value(0.5) - (1.0 - 1.0 + 0.75 + 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn d2_norm_of_product_quadratic() {
        // D²(16x(1-x)y(1-y)) = 64
        let f = SeparableSum::new(2)
            .with_term(16.0, vec![quad(), quad()])
            .unwrap();
        assert!((f.d2_l2_norm(1, 4) - 64.0).abs() < 1e-12);
    }
}
