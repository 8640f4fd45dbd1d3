//! ReLU approximations of squares and products.
//!
//! The square `x²` on `[0, 1]` is approximated by
//! `f_R(x) = x - Σ_{r=1..R} g_r(x) / 4^r`, where `g` is the tooth function
//! and `g_r` its `r`-fold composition; `|f_R(x) - x²| ≤ 2^{-2R-2}`. Products
//! follow from the polarization identity
//! `f̃_R(x, y) = 2 (f_R((x+y)/2) - f_R(x)/4 - f_R(y)/4)`, with error at most
//! `3·2^{-2R-2}`, and a `q`-factor product is built by pairing adjacent
//! factors level by level.
//!
//! Each construction exists twice: as a closed-form recursion (used to build
//! feature matrices) and as an explicit [`ReluGraph`] (used to verify the
//! recursion and to count depth, units and weights).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrnError};
use crate::sparse_grid::{hat_eval, BasisId};

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Tooth function: `2x` below one half, `2(1 - x)` above.
#[inline]
pub fn tooth(x: f64) -> f64 {
    if x < 0.5 {
        2.0 * x
    } else {
        2.0 * (1.0 - x)
    }
}

/// The tooth function written with three ReLUs.
#[inline]
pub fn tooth_relu(x: f64) -> f64 {
    2.0 * relu(x) - 4.0 * relu(x - 0.5) + 2.0 * relu(x - 1.0)
}

/// `g_r = g ∘ … ∘ g` (`r` times).
pub fn tooth_iter(r: u32, x: f64) -> f64 {
    (0..r).fold(x, |v, _| tooth(v))
}

/// `f_R(x) = x - Σ_{r=1..R} g_r(x) / 4^r`.
#[inline]
pub fn square_approx(r: u32, x: f64) -> f64 {
    let mut g = x;
    let mut scale = 1.0;
    let mut acc = x;
    for _ in 0..r {
        g = tooth(g);
        scale *= 0.25;
        acc -= g * scale;
    }
    acc
}

/// `f̃_R(x, y)`; inputs are clamped to `[0, 1]` first.
#[inline]
pub fn pair_product(r: u32, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let y = y.clamp(0.0, 1.0);
    2.0 * (square_approx(r, 0.5 * (x + y))
        - 0.25 * square_approx(r, x)
        - 0.25 * square_approx(r, y))
}

/// Worst-case error of [`pair_product`] against `xy`.
pub fn pair_error_bound(r: u32) -> f64 {
    3.0 * 2f64.powi(-2 * r as i32 - 2)
}

/// Worst-case error of a `q`-factor tree product: `3·2^{-2R-2}(q-1)`.
pub fn tree_error_bound(r: u32, q: usize) -> f64 {
    pair_error_bound(r) * q.saturating_sub(1) as f64
}

/// One step of a pairing schedule, indexing into the previous level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairStep {
    Pair(usize, usize),
    Forward(usize),
}

/// Binary-tree product of `q` factors with accuracy level `R`.
///
/// Adjacent factors are paired left to right; an unpaired last factor is
/// forwarded unchanged. Every pair output that feeds a further level is
/// clamped to `[0, 1]`; the root is not.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductApproximator {
    accuracy_level: u32,
    factor_count: usize,
    schedule: Vec<Vec<PairStep>>,
}

impl ProductApproximator {
    pub fn new(accuracy_level: u32, factor_count: usize) -> Result<Self> {
        if accuracy_level == 0 {
            return Err(SdrnError::Domain(
                "accuracy level R must be at least 1".into(),
            ));
        }
        if factor_count == 0 {
            return Err(SdrnError::EmptyInput("product of zero factors"));
        }
        Ok(Self {
            accuracy_level,
            factor_count,
            schedule: pairing_schedule(factor_count),
        })
    }

    pub fn accuracy_level(&self) -> u32 {
        self.accuracy_level
    }

    pub fn factor_count(&self) -> usize {
        self.factor_count
    }

    /// Levels of the tree, `⌈log₂ q⌉`.
    pub fn levels(&self) -> usize {
        self.schedule.len()
    }

    pub fn schedule(&self) -> &[Vec<PairStep>] {
        &self.schedule
    }

    pub fn evaluate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.factor_count {
            return Err(SdrnError::DimensionMismatch {
                expected: self.factor_count,
                found: values.len(),
            });
        }
        let r = self.accuracy_level;
        let mut current = values.to_vec();
        let last = self.schedule.len();
        for (depth, level) in self.schedule.iter().enumerate() {
            let internal = depth + 1 < last;
            current = level
                .iter()
                .map(|step| match *step {
                    PairStep::Pair(a, b) => {
                        let v = pair_product(r, current[a], current[b]);
                        if internal {
                            v.clamp(0.0, 1.0)
                        } else {
                            v
                        }
                    }
                    PairStep::Forward(a) => current[a],
                })
                .collect();
        }
        Ok(current[0])
    }
}

/// Pairing levels for `q` factors; empty for `q = 1`.
pub fn pairing_schedule(q: usize) -> Vec<Vec<PairStep>> {
    let mut levels = Vec::new();
    let mut width = q;
    while width > 1 {
        let mut level = Vec::with_capacity(width.div_ceil(2));
        let mut i = 0;
        while i + 1 < width {
            level.push(PairStep::Pair(i, i + 1));
            i += 2;
        }
        if i < width {
            level.push(PairStep::Forward(i));
        }
        width = level.len();
        levels.push(level);
    }
    levels
}

/// Approximate product of `values` through the pairing tree.
pub fn tree_product(r: u32, values: &[f64]) -> Result<f64> {
    ProductApproximator::new(r, values.len())?.evaluate(values)
}

/// `φ̃_{ℓ,s}(x)`: the tree product of the one-dimensional hat values.
pub fn approx_basis_eval(r: u32, id: &BasisId, x: &[f64]) -> Result<f64> {
    if x.len() != id.dim() {
        return Err(SdrnError::DimensionMismatch {
            expected: id.dim(),
            found: x.len(),
        });
    }
    tree_product(r, &id.factors(x))
}

/// A basis id paired with the product network that approximates it.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxBasisFeature {
    pub id: BasisId,
    pub product: ProductApproximator,
}

impl ApproxBasisFeature {
    pub fn new(id: BasisId, r: u32) -> Result<Self> {
        let product = ProductApproximator::new(r, id.dim())?;
        Ok(Self { id, product })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.id.dim() {
            return Err(SdrnError::DimensionMismatch {
                expected: self.id.dim(),
                found: x.len(),
            });
        }
        self.product.evaluate(&self.id.factors(x))
    }
}

// ---------------------------------------------------------------------------
// Explicit graphs
// ---------------------------------------------------------------------------

/// Position of a node: layer 0 holds the inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub layer: usize,
    pub index: usize,
}

/// One computational unit: `act(Σ w_k · source_k + bias)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub sources: Vec<NodeRef>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub relu: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub units: Vec<Unit>,
}

/// Depth, units and weights, counted as in the network-complexity literature:
/// depth includes the input layer, weights are connections plus units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub depth: usize,
    pub units: usize,
    pub connections: usize,
    pub weights: usize,
}

impl ComplexityReport {
    /// Closed form for the square network at level `R`.
    pub fn square_network(r: u32) -> Self {
        let r = r as usize;
        Self {
            depth: r + 2,
            units: 3 * r + 1,
            connections: 12 * r - 5,
            weights: 15 * r - 4,
        }
    }
}

/// A layered ReLU network with skip connections.
///
/// Every unit reads from nodes in strictly earlier layers. Serializes to JSON
/// as `{input_arity, layers: [{units: [{sources, weights, bias, relu}]}], outputs}`
/// where each source is `{layer, index}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluGraph {
    pub input_arity: usize,
    pub layers: Vec<Layer>,
    pub outputs: Vec<NodeRef>,
}

impl ReluGraph {
    pub fn complexity(&self) -> ComplexityReport {
        let units: usize = self.layers.iter().map(|l| l.units.len()).sum();
        let connections: usize = self
            .layers
            .iter()
            .flat_map(|l| &l.units)
            .map(|u| u.weights.iter().filter(|&&w| w != 0.0).count())
            .sum();
        ComplexityReport {
            depth: self.layers.len() + 1,
            units,
            connections,
            weights: connections + units,
        }
    }

    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_arity {
            return Err(SdrnError::DimensionMismatch {
                expected: self.input_arity,
                found: input.len(),
            });
        }
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let out = layer
                .units
                .iter()
                .map(|u| {
                    let z = u
                        .sources
                        .iter()
                        .zip(&u.weights)
                        .fold(u.bias, |acc, (src, &w)| {
                            acc + w * values[src.layer][src.index]
                        });
                    if u.relu {
                        relu(z)
                    } else {
                        z
                    }
                })
                .collect();
            values.push(out);
        }
        Ok(self
            .outputs
            .iter()
            .map(|o| values[o.layer][o.index])
            .collect())
    }

    /// Single-output convenience wrapper around [`ReluGraph::eval`].
    pub fn eval_scalar(&self, input: &[f64]) -> Result<f64> {
        Ok(self.eval(input)?[0])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

// Affine expression over existing nodes.
#[derive(Clone, Debug, Default)]
struct Expr {
    terms: BTreeMap<NodeRef, f64>,
    constant: f64,
}

impl Expr {
    fn node(n: NodeRef) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(n, 1.0);
        Self {
            terms,
            constant: 0.0,
        }
    }

    fn axpy(mut self, k: f64, other: &Expr) -> Self {
        for (&n, &w) in &other.terms {
            *self.terms.entry(n).or_insert(0.0) += k * w;
        }
        self.constant += k * other.constant;
        self.terms.retain(|_, w| *w != 0.0);
        self
    }

    fn scaled(&self, k: f64) -> Self {
        Expr::default().axpy(k, self)
    }

    fn shifted(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

struct GraphBuilder {
    input_arity: usize,
    layers: Vec<Vec<Unit>>,
}

impl GraphBuilder {
    fn new(input_arity: usize) -> Self {
        Self {
            input_arity,
            layers: Vec::new(),
        }
    }

    fn input(&self, i: usize) -> Expr {
        Expr::node(NodeRef { layer: 0, index: i })
    }

    fn unit(&mut self, layer: usize, expr: &Expr, relu: bool) -> NodeRef {
        debug_assert!(layer >= 1);
        debug_assert!(expr.terms.keys().all(|n| n.layer < layer));
        while self.layers.len() < layer {
            self.layers.push(Vec::new());
        }
        let units = &mut self.layers[layer - 1];
        units.push(Unit {
            sources: expr.terms.keys().copied().collect(),
            weights: expr.terms.values().copied().collect(),
            bias: expr.constant,
            relu,
        });
        NodeRef {
            layer,
            index: units.len() - 1,
        }
    }

    // f_R(x) as an affine expression; uses layers start..start+R-1.
    fn square_block(&mut self, x: &Expr, start: usize, r: u32) -> Expr {
        let mut out = x.clone();
        let mut g_prev = x.clone();
        let mut scale = 1.0;
        for k in 0..r as usize {
            let layer = start + k;
            let a = self.unit(layer, &g_prev, true);
            let b = self.unit(layer, &g_prev.clone().shifted(-0.5), true);
            let c = self.unit(layer, &g_prev.clone().shifted(-1.0), true);
            let g = Expr::default()
                .axpy(2.0, &Expr::node(a))
                .axpy(-4.0, &Expr::node(b))
                .axpy(2.0, &Expr::node(c));
            scale *= 0.25;
            out = out.axpy(-scale, &g);
            g_prev = g;
        }
        out
    }

    // f̃_R(x, y) as an affine expression; uses layers start..start+R-1.
    fn pair_block(&mut self, x: &Expr, y: &Expr, start: usize, r: u32) -> Expr {
        let u = x.scaled(0.5).axpy(0.5, y);
        let fu = self.square_block(&u, start, r);
        let fx = self.square_block(x, start, r);
        let fy = self.square_block(y, start, r);
        Expr::default()
            .axpy(2.0, &fu)
            .axpy(-0.5, &fx)
            .axpy(-0.5, &fy)
    }

    fn finish(self, outputs: Vec<NodeRef>) -> ReluGraph {
        ReluGraph {
            input_arity: self.input_arity,
            layers: self
                .layers
                .into_iter()
                .map(|units| Layer { units })
                .collect(),
            outputs,
        }
    }
}

fn check_level(r: u32) -> Result<()> {
    if r == 0 {
        Err(SdrnError::Domain(
            "accuracy level R must be at least 1".into(),
        ))
    } else {
        Ok(())
    }
}

/// Network for `f_R` (input `x`, one linear output).
pub fn build_square_network(r: u32) -> Result<ReluGraph> {
    check_level(r)?;
    let mut b = GraphBuilder::new(1);
    let x = b.input(0);
    let f = b.square_block(&x, 1, r);
    let out = b.unit(r as usize + 1, &f, false);
    Ok(b.finish(vec![out]))
}

/// Network for `f̃_R(x, y)` on `[0, 1]²` (inputs `x, y`, one linear output).
pub fn build_pair_network(r: u32) -> Result<ReluGraph> {
    check_level(r)?;
    let mut b = GraphBuilder::new(2);
    let (x, y) = (b.input(0), b.input(1));
    let f = b.pair_block(&x, &y, 1, r);
    let out = b.unit(r as usize + 1, &f, false);
    Ok(b.finish(vec![out]))
}

/// Network for `φ̃_{ℓ,s}` on `d` inputs.
///
/// Layer 1 evaluates every hat as `σ(t+1) - 2σ(t) + σ(t-1)` with
/// `t = 2^ℓ x - s`; each tree level then spends `R` hidden layers on the pair
/// products plus one layer that either clamps (`σ(v) - σ(v-1)`) or, at the
/// root, emits the linear output.
pub fn build_basis_network(r: u32, id: &BasisId) -> Result<ReluGraph> {
    check_level(r)?;
    let d = id.dim();
    let mut b = GraphBuilder::new(d);
    let mut current: Vec<Expr> = Vec::with_capacity(d);
    for j in 0..d {
        let scale = (1u64 << id.levels()[j]) as f64;
        let t = b.input(j).scaled(scale).shifted(-(id.nodes()[j] as f64));
        let p = b.unit(1, &t.clone().shifted(1.0), true);
        let q = b.unit(1, &t, true);
        let w = b.unit(1, &t.clone().shifted(-1.0), true);
        current.push(
            Expr::default()
                .axpy(1.0, &Expr::node(p))
                .axpy(-2.0, &Expr::node(q))
                .axpy(1.0, &Expr::node(w)),
        );
    }
    if d == 1 {
        let out = b.unit(2, &current[0], false);
        return Ok(b.finish(vec![out]));
    }
    let schedule = pairing_schedule(d);
    let levels = schedule.len();
    let mut start = 2;
    let mut output = None;
    for (depth, level) in schedule.iter().enumerate() {
        let close = start + r as usize;
        let mut next = Vec::with_capacity(level.len());
        for step in level {
            match *step {
                PairStep::Pair(a, c) => {
                    let v = b.pair_block(&current[a], &current[c], start, r);
                    if depth + 1 == levels {
                        output = Some(b.unit(close, &v, false));
                        next.push(Expr::default());
                    } else {
                        let lo = b.unit(close, &v, true);
                        let hi = b.unit(close, &v.clone().shifted(-1.0), true);
                        next.push(
                            Expr::default()
                                .axpy(1.0, &Expr::node(lo))
                                .axpy(-1.0, &Expr::node(hi)),
                        );
                    }
                }
                PairStep::Forward(a) => next.push(current[a].clone()),
            }
        }
        current = next;
        start = close + 1;
    }
    let out = output.expect("a tree over d >= 2 factors ends in a pair");
    Ok(b.finish(vec![out]))
}

/// Closed-form evaluation of the exact hat product, for comparison with the
/// approximation.
pub fn exact_basis_eval(id: &BasisId, x: &[f64]) -> f64 {
    id.levels()
        .iter()
        .zip(id.nodes())
        .zip(x)
        .map(|((&l, &s), &xj)| hat_eval(l, s, xj))
        .product()
}
