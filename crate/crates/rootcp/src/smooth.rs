//! Smoothed typicalness: the hard rank indicator is replaced by a
//! non-increasing surrogate, making the profile continuous in the candidate.
//! The sigmoid is the practical choice; the two ramps are explicit lower and
//! upper envelopes of the indicator used to sandwich the exact set.

use serde::Serialize;

use crate::config::ConformalConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::interval::{ConformalInterval, Method};
use crate::profile::{ProfileKind, TypicalnessProfile};
use crate::regressors::SymmetricRegressor;
use crate::score::{ScoreFunction, ScoreVector};

/// Surrogate for the indicator `1[x <= 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// `exp(-gamma x) / (1 + exp(-gamma x))`; neither a lower nor an upper
    /// bound of the indicator.
    Sigmoid,
    /// `clamp(-gamma x, 0, 1)`: below the indicator everywhere, so the level
    /// set it produces contains the exact one.
    LowerRamp,
    /// `clamp(1 - gamma x, 0, 1)`: above the indicator everywhere, so the
    /// level set it produces sits inside the exact one.
    UpperRamp,
}

/// Smoothing strength plus an optional recalibrated level.
///
/// When `target_alpha` is set it is used as the level the root solver aims
/// for; for the sigmoid it must absorb the calibration tax, i.e.
/// `target_alpha - delta(gamma) >= alpha`. When unset the nominal `alpha` is
/// used directly (the uncalibrated profile-exploration regime).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingConfig {
    pub gamma: f64,
    pub target_alpha: Option<f64>,
    pub envelope: Envelope,
}

impl SmoothingConfig {
    pub fn new(gamma: f64, envelope: Envelope) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self {
            gamma,
            target_alpha: None,
            envelope,
        })
    }

    pub fn with_target_alpha(mut self, target_alpha: f64) -> Result<Self> {
        if !(target_alpha.is_finite() && 0.0 < target_alpha && target_alpha < 1.0) {
            return Err(Error::invalid(format!(
                "target alpha must lie in (0, 1), got {target_alpha}"
            )));
        }
        self.target_alpha = Some(target_alpha);
        Ok(self)
    }
}

/// Evaluate the surrogate at `x`. All three envelopes are non-increasing and
/// take values in `[0, 1]`.
pub fn phi(envelope: Envelope, gamma: f64, x: f64) -> f64 {
    let g = gamma * x;
    match envelope {
        Envelope::Sigmoid => {
            // Exponentiate a non-positive argument only.
            if g >= 0.0 {
                let e = (-g).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + g.exp())
            }
        }
        Envelope::LowerRamp => (-g).clamp(0.0, 1.0),
        Envelope::UpperRamp => (1.0 - g).clamp(0.0, 1.0),
    }
}

/// `sup_x (phi_gamma - 1[x <= 0])`, the worst-case calibration tax of the
/// surrogate. Analytic: 1/2 for the sigmoid (approached at `0+`), 0 for the
/// lower ramp, 1 for the upper ramp.
pub fn delta(envelope: Envelope, _gamma: f64) -> f64 {
    match envelope {
        Envelope::Sigmoid => 0.5,
        Envelope::LowerRamp => 0.0,
        Envelope::UpperRamp => 1.0,
    }
}

/// `sum_i phi_gamma(E_i - E_{n+1})`, the smooth stand-in for the rank of the
/// candidate's score.
pub fn smooth_rank(scores: &ScoreVector, smoothing: &SmoothingConfig) -> f64 {
    let last = scores.candidate();
    scores
        .as_slice()
        .iter()
        .map(|&s| phi(smoothing.envelope, smoothing.gamma, s - last))
        .sum()
}

/// `1 - sRank / (n+1)`. With the upper ramp this lower-bounds the hard
/// typicalness; with the lower ramp it upper-bounds it.
pub fn smooth_typicalness(scores: &ScoreVector, smoothing: &SmoothingConfig) -> f64 {
    1.0 - smooth_rank(scores, smoothing) / scores.len() as f64
}

/// Derivative of [`smooth_rank`] in the candidate's score (sigmoid only; the
/// ramps are not differentiable at their kinks).
pub fn smooth_rank_candidate_gradient(
    scores: &ScoreVector,
    smoothing: &SmoothingConfig,
) -> Result<f64> {
    if smoothing.envelope != Envelope::Sigmoid {
        return Err(Error::Unsupported(
            "gradient is only defined for the sigmoid envelope".into(),
        ));
    }
    let last = scores.candidate();
    let gamma = smoothing.gamma;
    let n_plus_1 = scores.len();
    // d/du phi(s - u) = gamma * phi * (1 - phi); the self term is constant.
    let grad = scores.as_slice()[..n_plus_1 - 1]
        .iter()
        .map(|&s| {
            let p = phi(Envelope::Sigmoid, gamma, s - last);
            gamma * p * (1.0 - p)
        })
        .sum();
    Ok(grad)
}

/// A data-driven smoothing strength: 100 divided by the interquartile range
/// of the supplied scores, so that the transition zone of the surrogate is
/// about a hundredth of the typical score spread.
pub fn default_gamma(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 100.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    let iqr = q(0.75) - q(0.25);
    if iqr > 0.0 {
        100.0 / iqr
    } else {
        let spread = sorted[sorted.len() - 1] - sorted[0];
        if spread > 0.0 {
            100.0 / spread
        } else {
            100.0
        }
    }
}

/// Conformal interval from the smoothed profile, computed with the same
/// bracket-and-bisect machinery as the hard profile; the level solved for
/// is `target_alpha` when set, otherwise `cfg.alpha`.
///
/// The bisection keeps the pure bracket-width criterion even though the
/// profile is continuous: a small value residual does not bound the
/// distance to the crossing without a slope bound, and the returned
/// endpoints promise exactly that bound. Smoothness buys a continuous
/// profile for the envelope constructions and for derivative-based
/// analysis, not fewer bisection steps here.
pub fn smooth_conformal_interval(
    regressor: &SymmetricRegressor,
    data: &Dataset,
    cfg: &ConformalConfig,
    smoothing: &SmoothingConfig,
) -> Result<ConformalInterval> {
    let level = match smoothing.target_alpha {
        Some(t) => {
            if t - delta(smoothing.envelope, smoothing.gamma) < cfg.alpha - 1e-12 {
                return Err(Error::invalid(format!(
                    "target alpha {t} does not satisfy target - delta >= alpha = {}",
                    cfg.alpha
                )));
            }
            t
        }
        None => cfg.alpha,
    };
    let mut profile = TypicalnessProfile::new(
        regressor.clone(),
        data,
        ScoreFunction::Absolute,
        ProfileKind::Smooth(*smoothing),
        cfg.max_fits,
    );
    let out = crate::root::solve_at_level(&mut profile, cfg, level)?;
    let eps = cfg.epsilon.resolve(data.responses().as_slice());
    let mut interval = ConformalInterval::new(
        out.lower,
        out.upper,
        eps,
        profile.fits_used(),
        Method::Smooth,
    );
    interval.warnings = out.warnings;
    Ok(interval)
}
