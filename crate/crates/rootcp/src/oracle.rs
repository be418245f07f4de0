//! Exact full conformal set for ridge regression with the absolute score.
//! The ridge prediction at every augmented row is affine in the candidate,
//! so each rank indicator flips only at the roots of two linear factors;
//! collecting all of them cuts the line into cells on which the typicalness
//! is constant. Quadratic in `n` and entirely sufficient at oracle scale;
//! this is the ground truth every other method is validated against.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::interval::{ConformalInterval, Method};
use crate::regressors::{affine_coefficients, AffineFitCoefficients};
use crate::score::clears_level;

/// The exact conformal set: disjoint, sorted, maximal intervals.
#[derive(Debug, Clone)]
pub struct ExactRidgeSet {
    pub intervals: Vec<(f64, f64)>,
    pub is_single_interval: bool,
    /// Model fits spent recovering the affine decomposition.
    pub fits_used: usize,
}

impl ExactRidgeSet {
    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= y && y <= hi)
    }

    /// Outer hull, `None` for the empty set.
    pub fn hull(&self) -> Option<(f64, f64)> {
        match (self.intervals.first(), self.intervals.last()) {
            (Some(&(lo, _)), Some(&(_, hi))) => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|&(lo, hi)| hi - lo).sum()
    }

    /// Hull as a [`ConformalInterval`], warning about any interior gaps.
    pub fn to_interval(&self) -> ConformalInterval {
        match self.hull() {
            None => ConformalInterval::empty(0.0, self.fits_used, Method::RidgeExact),
            Some((lo, hi)) => {
                let mut itv =
                    ConformalInterval::new(lo, hi, 0.0, self.fits_used, Method::RidgeExact);
                if !self.is_single_interval {
                    itv.warnings.push(format!(
                        "exact conformal set is a union of {} intervals; hull reported",
                        self.intervals.len()
                    ));
                }
                itv
            }
        }
    }
}

/// Enumerate the exact conformal set `{z : pi(z) >= alpha}` for ridge with
/// the absolute score.
pub fn exact_ridge_set(data: &Dataset, lambda: f64, alpha: f64) -> Result<ExactRidgeSet> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let coeffs = affine_coefficients(data, lambda)?;
    exact_set_from_coefficients(&coeffs, data, alpha, 3)
}

/// The enumeration itself, reusable when the affine decomposition is already
/// available. `fits_used` is carried through for accounting.
pub fn exact_set_from_coefficients(
    coeffs: &AffineFitCoefficients,
    data: &Dataset,
    alpha: f64,
    fits_used: usize,
) -> Result<ExactRidgeSet> {
    let n = data.n();
    if coeffs.len() != n + 1 {
        return Err(Error::invalid(format!(
            "affine coefficients cover {} rows, expected {}",
            coeffs.len(),
            n + 1
        )));
    }
    // Residual lines: E_i(z) = |c_i + d_i z|, candidate E = |cp + dp z|.
    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        c.push(data.responses()[i] - coeffs.intercepts[i]);
        d.push(-coeffs.slopes[i]);
    }
    let cp = -coeffs.intercepts[n];
    let dp = 1.0 - coeffs.slopes[n];

    let mut roots = Vec::with_capacity(2 * n);
    for i in 0..n {
        let scale = d[i].abs().max(dp.abs()).max(1.0);
        for (s, t) in [(d[i] - dp, c[i] - cp), (d[i] + dp, c[i] + cp)] {
            // A vanishing slope never flips the indicator; coincident slopes
            // (for instance dp == d_i when the test leverage makes the two
            // lines parallel) simply contribute no root.
            if s.abs() > 1e-14 * scale {
                roots.push(-t / s);
            }
        }
    }
    roots.sort_unstable_by(f64::total_cmp);
    let span = match (roots.first(), roots.last()) {
        (Some(a), Some(b)) => (b - a).max(1.0),
        _ => 1.0,
    };
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * span);

    let pi_at = |z: f64| -> f64 {
        let e_test = (cp + dp * z).abs();
        let mut rank = 1usize; // self-comparison
        for i in 0..n {
            if (c[i] + d[i] * z).abs() <= e_test {
                rank += 1;
            }
        }
        1.0 - rank as f64 / (n + 1) as f64
    };

    // Evaluate the constant typicalness of every cell at its midpoint; the
    // two unbounded end cells at a representative point beyond the extremes.
    let mut cells: Vec<(f64, f64, bool)> = Vec::with_capacity(roots.len() + 1);
    if roots.is_empty() {
        let inside = clears_level(pi_at(0.0), alpha);
        cells.push((f64::NEG_INFINITY, f64::INFINITY, inside));
    } else {
        let first = roots[0];
        let last = roots[roots.len() - 1];
        cells.push((
            f64::NEG_INFINITY,
            first,
            clears_level(pi_at(first - 1.0 - span), alpha),
        ));
        for w in roots.windows(2) {
            cells.push((w[0], w[1], clears_level(pi_at(0.5 * (w[0] + w[1])), alpha)));
        }
        cells.push((
            last,
            f64::INFINITY,
            clears_level(pi_at(last + 1.0 + span), alpha),
        ));
    }

    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for (lo, hi, inside) in cells {
        if !inside {
            continue;
        }
        match intervals.last_mut() {
            Some(prev) if prev.1 == lo => prev.1 = hi,
            _ => intervals.push((lo, hi)),
        }
    }

    let is_single_interval =
        intervals.len() == 1 && intervals[0].0.is_finite() && intervals[0].1.is_finite();
    Ok(ExactRidgeSet {
        intervals,
        is_single_interval,
        fits_used,
    })
}
