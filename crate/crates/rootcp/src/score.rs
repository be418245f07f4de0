//! The rank-based kernel shared by every conformal method: conformity
//! scores, the rank of the candidate's score, the typicalness function and
//! the finite-sample empirical quantile.

use serde::Serialize;

use crate::error::{Error, Result};

/// Conformity score `S(y, prediction)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScoreFunction {
    /// `|y - mu|`, the default throughout.
    Absolute,
    /// `(y - mu)^2`.
    Squared,
    /// `exp(gamma d) - gamma d - 1` with `d = y - mu`; asymmetric, penalizes
    /// one side exponentially and the other roughly linearly.
    AsymmetricLinex { gamma: f64 },
}

impl ScoreFunction {
    pub fn score(&self, truth: f64, prediction: f64) -> Result<f64> {
        if !truth.is_finite() || !prediction.is_finite() {
            return Err(Error::invalid(format!(
                "score arguments must be finite, got ({truth}, {prediction})"
            )));
        }
        let d = truth - prediction;
        match *self {
            ScoreFunction::Absolute => Ok(d.abs()),
            ScoreFunction::Squared => Ok(d * d),
            ScoreFunction::AsymmetricLinex { gamma } => {
                if !(gamma.is_finite() && gamma != 0.0) {
                    return Err(Error::invalid("linex gamma must be finite and non-zero"));
                }
                let g = gamma * d;
                // exp(g) - g - 1 >= 0; clamp away tiny negative rounding near 0.
                Ok((g.exp() - g - 1.0).max(0.0))
            }
        }
    }
}

/// The `n+1` instance-wise scores for one candidate; the candidate's own
/// score sits in the last slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::invalid(format!(
                "a score vector needs at least 2 entries, got {}",
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction enforces len >= 2
    }

    /// The candidate's score `E_{n+1}`.
    pub fn candidate(&self) -> f64 {
        *self.scores.last().unwrap()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }
}

/// Level comparisons on the typicalness grid, `value >= level` in intent.
///
/// Typicalness values are exact rationals `k/(n+1)` that f64 arithmetic can
/// only approximate (`1 - 90.0/100.0 < 0.1f64`), so a bare `>=` silently
/// turns the inclusive membership convention into the strict one whenever
/// `(1 - level)(n+1)` is an integer. The guard is far below the grid spacing
/// for any realistic `n` and far above the rounding error of the values.
pub(crate) fn clears_level(value: f64, level: f64) -> bool {
    value >= level - 1e-12
}

/// Rank of the candidate's score among all scores, counting ties with the
/// weak inequality: `sum_i 1[E_i <= E_{n+1}]`. Always in `[1, len]` because
/// the self-comparison contributes one.
pub fn rank_of_last(scores: &ScoreVector) -> usize {
    let last = scores.candidate();
    scores.as_slice().iter().filter(|&&s| s <= last).count()
}

/// `pi = 1 - rank / (n+1)`; lives on the grid `{0, 1/(n+1), ..., n/(n+1)}`.
pub fn typicalness(scores: &ScoreVector) -> f64 {
    let m = scores.len() as f64;
    1.0 - rank_of_last(scores) as f64 / m
}

/// Typicalness loosened by an optimization-error slack:
/// `(1/(n+1)) sum_i 1[E_i >= E_{n+1} - slack]`.
///
/// At `slack = 0` this upper-bounds [`typicalness`]; it is non-decreasing in
/// `slack`. Callers derive the slack from their solver's certified error
/// (`2 sqrt(2 nu eps0)` for a `nu`-strongly-convex fit with gap `eps0`).
pub fn typicalness_with_slack(scores: &ScoreVector, slack: f64) -> Result<f64> {
    if !(slack.is_finite() && slack >= 0.0) {
        return Err(Error::invalid(format!(
            "slack must be non-negative, got {slack}"
        )));
    }
    let threshold = scores.candidate() - slack;
    let m = scores.len() as f64;
    let count = scores
        .as_slice()
        .iter()
        .filter(|&&s| s >= threshold)
        .count();
    Ok(count as f64 / m)
}

/// `k`-th order statistic with `k = ceil((m+1) * level)` where `m` is the
/// number of values. When `k > m` the finite sample cannot certify the level
/// and the quantile is reported as `+inf`; callers must surface the
/// resulting unbounded interval rather than clamp.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("empirical quantile of an empty sample"));
    }
    if !(level.is_finite() && 0.0 < level && level < 1.0) {
        return Err(Error::invalid(format!(
            "quantile level must lie in (0, 1), got {level}"
        )));
    }
    let m = values.len();
    // The small shift keeps integer-valued targets (where the fp product may
    // land an ulp above the integer) from ceiling one rank too far.
    let k = (((m as f64 + 1.0) * level - 1e-9).ceil() as usize).max(1);
    if k > m {
        return Ok(f64::INFINITY);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[k - 1])
}
