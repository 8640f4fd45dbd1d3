//! Convex Lipschitz losses `ρ(f, y)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrnError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossSpec {
    /// `(y - f)²`
    Quadratic,
    /// `½(y - f)²` inside `|y - f| ≤ δ`, `δ|y - f| - δ²/2` outside.
    Huber { delta: f64 },
    /// `(y - f)(τ - 1{y - f ≤ 0})`
    Quantile { tau: f64 },
    /// `log(1 + e^f) - y f` for `y ∈ {0, 1}`.
    Logistic,
}

impl LossSpec {
    pub fn huber(delta: f64) -> Result<Self> {
        if delta > 0.0 && delta.is_finite() {
            Ok(LossSpec::Huber { delta })
        } else {
            Err(SdrnError::InvalidConfig(format!(
                "Huber delta must be positive, got {delta}"
            )))
        }
    }

    pub fn quantile(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(LossSpec::Quantile { tau })
        } else {
            Err(SdrnError::InvalidConfig(format!(
                "quantile tau must lie in (0, 1), got {tau}"
            )))
        }
    }

    /// `ρ(f, y)` without target validation.
    #[inline]
    pub fn value(&self, f: f64, y: f64) -> f64 {
        match *self {
            LossSpec::Quadratic => (y - f) * (y - f),
            LossSpec::Huber { delta } => {
                let a = (y - f).abs();
                if a <= delta {
                    0.5 * a * a
                } else {
                    delta * a - 0.5 * delta * delta
                }
            }
            LossSpec::Quantile { tau } => {
                let r = y - f;
                r * (tau - if r <= 0.0 { 1.0 } else { 0.0 })
            }
            LossSpec::Logistic => softplus(f) - y * f,
        }
    }

    /// `∂ρ/∂f`.
    ///
    /// For the quantile loss at a zero residual the indicator counts as 1,
    /// giving `1 - τ`.
    #[inline]
    pub fn subgradient(&self, f: f64, y: f64) -> f64 {
        match *self {
            LossSpec::Quadratic => 2.0 * (f - y),
            LossSpec::Huber { delta } => (f - y).clamp(-delta, delta),
            LossSpec::Quantile { tau } => {
                if y - f <= 0.0 {
                    1.0 - tau
                } else {
                    -tau
                }
            }
            LossSpec::Logistic => sigmoid(f) - y,
        }
    }

    /// Lipschitz constant `C_ρ`; the quadratic loss needs the residual bound `M`.
    pub fn lipschitz_constant(&self, residual_bound: f64) -> f64 {
        match *self {
            LossSpec::Quadratic => 2.0 * residual_bound,
            LossSpec::Huber { delta } => delta,
            LossSpec::Quantile { .. } => 1.0,
            LossSpec::Logistic => 2.0,
        }
    }

    pub fn check_target(&self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(SdrnError::Data(format!("non-finite response {y}")));
        }
        if matches!(self, LossSpec::Logistic) && y != 0.0 && y != 1.0 {
            return Err(SdrnError::InvalidLabel(y));
        }
        Ok(())
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, LossSpec::Logistic)
    }
}

/// `ρ(f, y)` with target validation.
pub fn loss_value(spec: &LossSpec, f: f64, y: f64) -> Result<f64> {
    spec.check_target(y)?;
    Ok(spec.value(f, y))
}

pub fn loss_subgradient(spec: &LossSpec, f: f64, y: f64) -> f64 {
    spec.subgradient(f, y)
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Quadratic => write!(f, "quadratic"),
            LossSpec::Huber { delta } => write!(f, "huber:{delta}"),
            LossSpec::Quantile { tau } => write!(f, "quantile:{tau}"),
            LossSpec::Logistic => write!(f, "logistic"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = SdrnError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SdrnError::InvalidLoss(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad())
        };
        match (name.trim(), arg) {
            ("quadratic", None) => Ok(LossSpec::Quadratic),
            ("logistic", None) => Ok(LossSpec::Logistic),
            ("huber", a) => LossSpec::huber(number(a)?),
            ("quantile", a) => LossSpec::quantile(number(a)?),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for LossSpec {
    type Error = SdrnError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LossSpec> for String {
    fn from(l: LossSpec) -> String {
        l.to_string()
    }
}
