//! Inductive (split) conformal prediction: one fit on a shuffled training
//! half, calibration quantile on the held-out half.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ConformalConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::interval::{ConformalInterval, Method};
use crate::regressors::SymmetricRegressor;
use crate::score::{empirical_quantile, ScoreFunction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub shuffle_seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            shuffle_seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn new(train_fraction: f64, shuffle_seed: u64) -> Result<Self> {
        if !(train_fraction.is_finite() && 0.0 < train_fraction && train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self {
            train_fraction,
            shuffle_seed,
        })
    }
}

/// Split conformal interval with the absolute score:
/// `[mu_tr(x_test) - Q, mu_tr(x_test) + Q]` where `Q` is the
/// `ceil((m_cal + 1)(1 - alpha))`-th smallest calibration score.
///
/// Exactly one model fit. When the calibration set is too small to certify
/// the level, the quantile overflows to `+inf` and the returned interval is
/// unbounded, with a warning.
pub fn split_interval(
    regressor: &SymmetricRegressor,
    data: &Dataset,
    cfg: &ConformalConfig,
    split_cfg: &SplitConfig,
) -> Result<ConformalInterval> {
    split_interval_with_score(regressor, data, cfg, split_cfg, ScoreFunction::Absolute)
}

/// Split conformal with an arbitrary score: the interval is the level set
/// `{z : S(z, mu_tr(x_test)) <= Q}` on the score scale, closed-form for the
/// absolute and squared scores and solved by scalar bisection for linex.
pub fn split_interval_with_score(
    regressor: &SymmetricRegressor,
    data: &Dataset,
    cfg: &ConformalConfig,
    split_cfg: &SplitConfig,
    score_fn: ScoreFunction,
) -> Result<ConformalInterval> {
    let n = data.n();
    let m_train = ((n as f64 * split_cfg.train_fraction).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_cfg.shuffle_seed);
    order.shuffle(&mut rng);
    let (train_idx, cal_idx) = order.split_at(m_train);

    let x_train =
        nalgebra::DMatrix::from_fn(m_train, data.p(), |i, j| data.features()[(train_idx[i], j)]);
    let y_train = nalgebra::DVector::from_fn(m_train, |i, _| data.responses()[train_idx[i]]);
    let model = regressor.fit_xy(&x_train, &y_train, None)?;

    let mut cal_scores = Vec::with_capacity(cal_idx.len());
    for &i in cal_idx {
        let pred = model.predict(&data.features().row(i).transpose());
        cal_scores.push(score_fn.score(data.responses()[i], pred)?);
    }
    let quantile = empirical_quantile(&cal_scores, 1.0 - cfg.alpha)?;
    let center = model.predict(data.test_features());

    let mut interval = if quantile.is_infinite() {
        let mut itv =
            ConformalInterval::new(f64::NEG_INFINITY, f64::INFINITY, 0.0, 1, Method::Split);
        itv.warnings.push(format!(
            "calibration set of {} cannot certify level {}; interval is unbounded",
            cal_idx.len(),
            1.0 - cfg.alpha
        ));
        itv
    } else {
        let (lo, hi) = score_level_set(score_fn, center, quantile)?;
        ConformalInterval::new(lo, hi, 0.0, 1, Method::Split)
    };
    interval.fits_used = 1;
    Ok(interval)
}

/// Solve `{z : S(z, center) <= q}` for the supported scores. Every score here
/// is continuous in `z`, zero at `z = center` and non-decreasing away from
/// it on each side, so the level set is a closed interval around the center.
fn score_level_set(score_fn: ScoreFunction, center: f64, q: f64) -> Result<(f64, f64)> {
    match score_fn {
        ScoreFunction::Absolute => Ok((center - q, center + q)),
        ScoreFunction::Squared => {
            let r = q.max(0.0).sqrt();
            Ok((center - r, center + r))
        }
        ScoreFunction::AsymmetricLinex { .. } => {
            let upper = solve_deviation(&score_fn, center, q, 1.0)?;
            let lower = solve_deviation(&score_fn, center, q, -1.0)?;
            Ok((center + lower, center + upper))
        }
    }
}

/// Largest deviation `d` (of the given sign) with `S(center + d, center) <= q`,
/// found by doubling then bisecting. No model fits involved.
fn solve_deviation(score_fn: &ScoreFunction, center: f64, q: f64, sign: f64) -> Result<f64> {
    if q <= 0.0 {
        return Ok(0.0);
    }
    let mut step = 1.0;
    let mut iters = 0;
    while score_fn.score(center + sign * step, center)? <= q {
        step *= 2.0;
        iters += 1;
        if iters > 200 {
            return Ok(sign * step); // score plateaus; effectively unbounded side
        }
    }
    let (mut lo, mut hi) = (0.0f64, step);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score_fn.score(center + sign * mid, center)? <= q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sign * lo)
}
