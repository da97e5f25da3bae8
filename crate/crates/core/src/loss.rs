//! Per-entry losses and their half-quadratic weights.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss applied to each residual `e = y - ŷ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loss {
    /// `ln(1 + e²/γ²)`
    Cauchy { gamma: f64 },
    /// `e²`
    L2,
}

impl Loss {
    pub fn cauchy(gamma: f64) -> Result<Self> {
        let loss = Loss::Cauchy { gamma };
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Cauchy { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::InvalidConfig(format!("cauchy scale gamma must be positive and finite, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Unscaled per-entry loss.
    #[inline]
    pub fn value(&self, residual: f64) -> f64 {
        match *self {
            Loss::Cauchy { gamma } => (residual * residual / (gamma * gamma)).ln_1p(),
            Loss::L2 => residual * residual,
        }
    }

    /// Half-quadratic weight `Δ(e)`.
    ///
    /// For Cauchy this is `1 / (γ² + e²)`, which satisfies
    /// `d/de [½ ln(1 + e²/γ²)] = Δ(e)·e`. The squared loss uses `Δ ≡ 1`.
    #[inline]
    pub fn weight(&self, residual: f64) -> f64 {
        match *self {
            Loss::Cauchy { gamma } => 1.0 / (gamma * gamma + residual * residual),
            Loss::L2 => 1.0,
        }
    }

    /// Factor by which the weight of a zero residual differs from the squared
    /// loss: `1/γ²` for Cauchy, `1` for L2.
    ///
    /// The optimizer divides its augmentation coefficient by this so that the
    /// penalty terms stay balanced against the data term for any `γ`, and the
    /// Cauchy updates approach the L2 updates as `γ → ∞`.
    #[inline]
    pub fn weight_scale(&self) -> f64 {
        match *self {
            Loss::Cauchy { gamma } => 1.0 / (gamma * gamma),
            Loss::L2 => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Cauchy { .. } => "cauchy",
            Loss::L2 => "l2",
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loss::Cauchy { gamma } => write!(f, "cauchy(gamma={gamma})"),
            Loss::L2 => f.write_str("l2"),
        }
    }
}
