use serde::Serialize;

use crate::error::{Error, Result};

/// Root tolerance, either absolute in response units or scaled by the spread
/// of the observed responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Epsilon {
    Absolute(f64),
    /// `factor * (max y - min y)`, falling back to `factor` when the
    /// responses are all equal.
    ResponseScaled(f64),
}

impl Epsilon {
    pub fn resolve(&self, responses: &[f64]) -> f64 {
        match *self {
            Epsilon::Absolute(e) => e,
            Epsilon::ResponseScaled(f) => {
                let lo = responses.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = responses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let range = hi - lo;
                if range > 0.0 {
                    f * range
                } else {
                    f
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Epsilon::Absolute(e) => e,
            Epsilon::ResponseScaled(f) => f,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive and finite, got {v}"
            )));
        }
        Ok(())
    }
}

/// Shared knobs: miscoverage level, root tolerance and the model-fit budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub epsilon: Epsilon,
    pub max_fits: usize,
}

impl ConformalConfig {
    /// Defaults: response-scaled tolerance `1e-4 * (max y - min y)` and a
    /// budget of 1000 fits.
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with(alpha, Epsilon::ResponseScaled(1e-4), 1000)
    }

    pub fn with(alpha: f64, epsilon: Epsilon, max_fits: usize) -> Result<Self> {
        if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        epsilon.validate()?;
        if max_fits == 0 {
            return Err(Error::invalid("max_fits must be positive"));
        }
        Ok(Self {
            alpha,
            epsilon,
            max_fits,
        })
    }
}
