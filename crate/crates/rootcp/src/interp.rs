//! Conformal prediction from a piecewise-linear interpolation of the fit map
//! `z -> mu_z(.)` built on a handful of query fits. The interpolated map is
//! symmetric because the query fits are and the interpolation weights depend
//! only on `z`, so the coverage guarantee carries over. For scores whose
//! instance-wise differences are piecewise linear in `z` the level set can
//! be enumerated exactly, with no further model fits.

use nalgebra::{DMatrix, DVector};

use crate::config::ConformalConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::interval::{ConformalInterval, Method};
use crate::profile::EvalRecord;
use crate::regressors::{scores_from_predictions, SymmetricRegressor};
use crate::score::{clears_level, typicalness, ScoreFunction};
use crate::split::{split_interval, SplitConfig};

/// Piecewise-linear interpolation of the fit map through `d` query fits
/// bracketing the expected conformal set, anchored at the response extremes.
/// Row `t` of `predictions` holds the fitted predictions at all `n+1`
/// augmented rows for knot `t`. Beyond the outermost knots the edge segments
/// extrapolate linearly.
#[derive(Debug, Clone)]
pub struct InterpolatedFitMap {
    knots: Vec<f64>,
    predictions: DMatrix<f64>,
    fits_used: usize,
}

impl InterpolatedFitMap {
    /// Fit at `d` evenly spaced query points inside `bracket` plus the two
    /// anchors (the observed response extremes, pushed outward when the
    /// bracket exceeds them). Exactly `d + 2` fits.
    pub fn build(
        regressor: &SymmetricRegressor,
        data: &Dataset,
        bracket: (f64, f64),
        d: usize,
    ) -> Result<Self> {
        let (lo, hi) = bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "degenerate query bracket [{lo}, {hi}]"
            )));
        }
        if d < 2 {
            return Err(Error::invalid("need at least 2 query points"));
        }
        let span = hi - lo;
        let (y_lo, y_hi) = data.response_range();
        let anchor_lo = y_lo.min(lo - 0.25 * span);
        let anchor_hi = y_hi.max(hi + 0.25 * span);

        let mut knots = Vec::with_capacity(d + 2);
        knots.push(anchor_lo);
        for k in 0..d {
            knots.push(lo + span * k as f64 / (d - 1) as f64);
        }
        knots.push(anchor_hi);
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("query points collapsed; bracket too narrow"));
        }

        let n1 = data.n() + 1;
        let mut predictions = DMatrix::zeros(knots.len(), n1);
        for (t, &z) in knots.iter().enumerate() {
            let preds = regressor
                .fit(data, z)?
                .predict_rows(data.augmented_features());
            predictions.row_mut(t).copy_from(&preds.transpose());
        }
        Ok(Self {
            knots,
            predictions,
            fits_used: d + 2,
        })
    }

    /// Assemble a map from profile evaluations already paid for. Returns
    /// `None` with fewer than three distinct knots.
    pub(crate) fn from_profile_records(records: &[EvalRecord]) -> Option<Self> {
        if records.len() < 3 {
            return None;
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| records[a].z.total_cmp(&records[b].z));
        order.dedup_by(|a, b| records[*a].z == records[*b].z);
        if order.len() < 3 {
            return None;
        }
        let n1 = records[0].predictions.len();
        let knots: Vec<f64> = order.iter().map(|&i| records[i].z).collect();
        let mut predictions = DMatrix::zeros(order.len(), n1);
        for (t, &i) in order.iter().enumerate() {
            predictions
                .row_mut(t)
                .copy_from(&records[i].predictions.transpose());
        }
        Some(Self {
            knots,
            predictions,
            fits_used: 0,
        })
    }

    pub fn fits_used(&self) -> usize {
        self.fits_used
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// The interior query points (knots minus the two anchors), when the map
    /// was built with anchors; otherwise all knots.
    pub fn query_points(&self) -> &[f64] {
        let m = self.knots.len();
        if m >= 4 {
            &self.knots[1..m - 1]
        } else {
            &self.knots
        }
    }

    /// First and last interior query point.
    pub fn query_range(&self) -> (f64, f64) {
        let q = self.query_points();
        (q[0], q[q.len() - 1])
    }

    fn segment_of(&self, z: f64) -> usize {
        let m = self.knots.len();
        let idx = match self.knots.binary_search_by(|k| k.total_cmp(&z)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        idx.min(m - 2)
    }

    /// Interpolated predictions at every augmented row. Outside the knot
    /// range this extrapolates the edge segment, so the map is continuous
    /// and piecewise linear on the whole line.
    pub fn predict_all(&self, z: f64) -> DVector<f64> {
        let s = self.segment_of(z);
        let (zl, zr) = (self.knots[s], self.knots[s + 1]);
        let w = (z - zl) / (zr - zl);
        let row = self.predictions.row(s) * (1.0 - w) + self.predictions.row(s + 1) * w;
        row.transpose()
    }

    /// Interpolated prediction for one augmented row.
    pub fn predict(&self, z: f64, row: usize) -> f64 {
        let s = self.segment_of(z);
        let (zl, zr) = (self.knots[s], self.knots[s + 1]);
        let w = (z - zl) / (zr - zl);
        self.predictions[(s, row)] * (1.0 - w) + self.predictions[(s + 1, row)] * w
    }
}

/// Typicalness of candidate `z` under the interpolated fit map; costs no
/// model fits.
pub fn interp_typicalness(
    map: &InterpolatedFitMap,
    data: &Dataset,
    score_fn: ScoreFunction,
    z: f64,
) -> Result<f64> {
    let preds = map.predict_all(z);
    let scores = scores_from_predictions(score_fn, data, &preds, z)?;
    Ok(typicalness(&scores))
}

/// Disjoint intervals of the enumerated level set plus any warnings raised
/// while assembling them.
pub type EnumeratedLevelSet = (Vec<(f64, f64)>, Vec<String>);

/// The exact level set `{z : interpolated typicalness >= alpha}` as maximal
/// disjoint intervals, by enumerating every point where some instance-wise
/// score difference changes sign.
///
/// Supported scores are those whose differences have piecewise-linear sign
/// structure: absolute and squared (their crossings are the roots of the same
/// two linear factors per segment).
pub fn enumerate_level_set(
    map: &InterpolatedFitMap,
    data: &Dataset,
    score_fn: ScoreFunction,
    alpha: f64,
) -> Result<EnumeratedLevelSet> {
    if !matches!(score_fn, ScoreFunction::Absolute | ScoreFunction::Squared) {
        return Err(Error::Unsupported(
            "exact crossing enumeration needs a score with piecewise-linear sign structure \
             (absolute or squared)"
                .into(),
        ));
    }
    let n = data.n();
    let knots = &map.knots;
    let m = knots.len();
    let span = knots[m - 1] - knots[0];
    let window_lo = knots[0] - 10.0 * span;
    let window_hi = knots[m - 1] + 10.0 * span;

    let mut breakpoints: Vec<f64> = Vec::with_capacity(2 * n * (m - 1) + m + 2);
    breakpoints.push(window_lo);
    breakpoints.push(window_hi);
    breakpoints.extend_from_slice(knots);

    for s in 0..m - 1 {
        let (zl, zr) = (knots[s], knots[s + 1]);
        let dz = zr - zl;
        // The edge segments extend over the extrapolation rays.
        let dom_lo = if s == 0 { window_lo } else { zl };
        let dom_hi = if s == m - 2 { window_hi } else { zr };

        // Per-row affine prediction on this segment: icept + slope * z.
        let slope_test = (map.predictions[(s + 1, n)] - map.predictions[(s, n)]) / dz;
        let icept_test = map.predictions[(s, n)] - knots[s] * slope_test;
        let cp = -icept_test;
        let dp = 1.0 - slope_test;

        for i in 0..n {
            let slope = (map.predictions[(s + 1, i)] - map.predictions[(s, i)]) / dz;
            let icept = map.predictions[(s, i)] - knots[s] * slope;
            let c = data.responses()[i] - icept;
            let d = -slope;
            let scale = d.abs().max(dp.abs()).max(1.0);
            for (sf, tf) in [(d - dp, c - cp), (d + dp, c + cp)] {
                if sf.abs() > 1e-14 * scale {
                    let root = -tf / sf;
                    if root >= dom_lo && root <= dom_hi {
                        breakpoints.push(root);
                    }
                }
            }
        }
    }

    breakpoints.sort_unstable_by(f64::total_cmp);
    breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * span.max(1.0));

    // Typicalness is constant between consecutive breakpoints; classify each
    // cell by its midpoint.
    let mut member = Vec::with_capacity(breakpoints.len() - 1);
    for w in breakpoints.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        member.push(clears_level(
            interp_typicalness(map, data, score_fn, mid)?,
            alpha,
        ));
    }

    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for (cell, &inside) in member.iter().enumerate() {
        if inside && run_start.is_none() {
            run_start = Some(cell);
        }
        if !inside {
            if let Some(s) = run_start.take() {
                intervals.push((breakpoints[s], breakpoints[cell]));
            }
        }
    }
    if let Some(s) = run_start {
        intervals.push((breakpoints[s], breakpoints[breakpoints.len() - 1]));
    }

    let mut warnings = Vec::new();
    if let (Some(first), Some(last)) = (intervals.first(), intervals.last()) {
        if first.0 <= window_lo || last.1 >= window_hi {
            warnings.push(
                "interpolated conformal set reaches the enumeration window; it may be unbounded"
                    .to_string(),
            );
        }
    }
    Ok((intervals, warnings))
}

/// Conformal interval from a built map: the outer hull of the enumerated
/// level set, with interior gaps reported as warnings. Zero additional fits.
pub fn interp_conformal_interval(
    map: &InterpolatedFitMap,
    data: &Dataset,
    score_fn: ScoreFunction,
    cfg: &ConformalConfig,
) -> Result<ConformalInterval> {
    let (intervals, mut warnings) = enumerate_level_set(map, data, score_fn, cfg.alpha)?;
    if intervals.is_empty() {
        return Ok(ConformalInterval::empty(
            0.0,
            map.fits_used(),
            Method::Interp,
        ));
    }
    let hull = (intervals[0].0, intervals[intervals.len() - 1].1);
    for gap in intervals.windows(2) {
        warnings.push(format!(
            "interior gap ({:.6}, {:.6}) excluded by the level set but inside the reported hull",
            gap[0].1, gap[1].0
        ));
    }
    let mut itv = ConformalInterval::new(hull.0, hull.1, 0.0, map.fits_used(), Method::Interp);
    itv.warnings = warnings;
    Ok(itv)
}

/// End-to-end interpolated CP: localize with the split interval (enlarged by
/// half its width per side), build the map with `d` queries, and enumerate.
/// When a level crossing lands in an extrapolation region the bracket is
/// widened and the map rebuilt, at most twice.
pub fn interp_interval_auto(
    regressor: &SymmetricRegressor,
    data: &Dataset,
    cfg: &ConformalConfig,
    d: usize,
    split_cfg: &SplitConfig,
) -> Result<ConformalInterval> {
    let split = split_interval(regressor, data, cfg, split_cfg)?;
    let (y_lo, y_hi) = data.response_range();
    let (mut lo, mut hi) = match (split.is_empty(), split.length().is_finite()) {
        (false, true) if split.lower < split.upper => {
            let w = split.upper - split.lower;
            (split.lower - 0.5 * w, split.upper + 0.5 * w)
        }
        _ => (y_lo, y_hi),
    };
    if lo >= hi {
        let pad = lo.abs().max(1.0);
        lo -= pad;
        hi += pad;
    }

    let mut total_fits = 0;
    let mut rebuild_notes: Vec<String> = Vec::new();
    for attempt in 0..3 {
        let map = InterpolatedFitMap::build(regressor, data, (lo, hi), d)?;
        total_fits += map.fits_used();
        let mut itv = interp_conformal_interval(&map, data, ScoreFunction::Absolute, cfg)?;
        itv.fits_used = total_fits;
        itv.warnings.extend(rebuild_notes.iter().cloned());

        let (q_lo, q_hi) = map.query_range();
        let needs_rebuild = if itv.is_empty() {
            attempt == 0 // one retry on a wider bracket before reporting empty
        } else {
            itv.lower < q_lo || itv.upper > q_hi
        };
        if !needs_rebuild || attempt == 2 {
            return Ok(itv);
        }
        let (center, width) = if itv.is_empty() {
            (0.5 * (lo + hi), hi - lo)
        } else {
            (
                0.5 * (itv.lower + itv.upper),
                (itv.upper - itv.lower).max(hi - lo),
            )
        };
        lo = center - 1.5 * width;
        hi = center + 1.5 * width;
        rebuild_notes
            .push("rebuilt interpolation map: crossing fell in an extrapolation region".into());
    }
    unreachable!("rebuild loop returns within three attempts")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Epsilon;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn linear_dataset(n: usize, p: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let x = DMatrix::from_fn(n, p, |_, _| normal.sample(&mut rng));
        let beta = DVector::from_fn(p, |_, _| normal.sample(&mut rng));
        let y = &x * &beta + DVector::from_fn(n, |_, _| normal.sample(&mut rng)) * noise;
        let test = DVector::from_fn(p, |_, _| normal.sample(&mut rng));
        Dataset::new(x, y, test).unwrap()
    }

    #[test]
    fn ridge_interpolation_is_exact_with_two_queries() {
        // Ridge predictions are affine in z, so linear interpolation through
        // any two fits reproduces them everywhere, extrapolation included.
        let data = linear_dataset(30, 4, 0.8, 1);
        let reg = SymmetricRegressor::ridge(1.5).unwrap();
        let map = InterpolatedFitMap::build(&reg, &data, (-2.0, 2.0), 2).unwrap();
        assert_eq!(map.fits_used(), 4);
        for z in [-7.3, -1.0, 0.33, 1.9, 6.4] {
            let direct = reg
                .fit(&data, z)
                .unwrap()
                .predict_rows(data.augmented_features());
            let interp = map.predict_all(z);
            for i in 0..direct.len() {
                assert_abs_diff_eq!(interp[i], direct[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn map_reproduces_knot_fits_exactly() {
        let data = linear_dataset(20, 3, 0.5, 2);
        let reg = SymmetricRegressor::knn(4).unwrap();
        let map = InterpolatedFitMap::build(&reg, &data, (-1.0, 1.0), 4).unwrap();
        for (t, &z) in map.knots().iter().enumerate() {
            let direct = reg
                .fit(&data, z)
                .unwrap()
                .predict_rows(data.augmented_features());
            for i in 0..direct.len() {
                assert_eq!(map.predict(z, i), map.predictions[(t, i)]);
                assert_abs_diff_eq!(map.predict(z, i), direct[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn midpoint_is_mean_and_knots_are_continuous() {
        let data = linear_dataset(15, 2, 0.5, 3);
        let reg = SymmetricRegressor::knn(3).unwrap();
        let map = InterpolatedFitMap::build(&reg, &data, (-1.0, 1.0), 5).unwrap();
        let knots = map.knots().to_vec();
        for w in knots.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            for i in 0..data.n() + 1 {
                let expected = 0.5 * (map.predict(w[0], i) + map.predict(w[1], i));
                assert_abs_diff_eq!(map.predict(mid, i), expected, epsilon = 1e-12);
            }
        }
        for &k in &knots[1..knots.len() - 1] {
            let h = 1e-9 * (knots.last().unwrap() - knots[0]).abs();
            for i in 0..data.n() + 1 {
                let left = map.predict(k - h, i);
                let right = map.predict(k + h, i);
                assert!((left - right).abs() < 1e-6, "discontinuity at knot {k}");
            }
        }
    }

    #[test]
    fn enumeration_matches_dense_grid_on_handmade_map() {
        // Two observed rows, hand-picked knot predictions: enough structure
        // for several crossings per segment.
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[0.4, -0.8], &[0.5]).unwrap();
        let knots = vec![-2.0, 0.5, 3.0];
        // Rows: predictions for [row0, row1, test] at each knot.
        let predictions = DMatrix::from_row_slice(
            3,
            3,
            &[
                -0.5, 0.9, -1.4, //
                0.3, -0.2, 0.7, //
                1.1, 0.4, 2.2,
            ],
        );
        let map = InterpolatedFitMap {
            knots,
            predictions,
            fits_used: 0,
        };
        let alpha = 0.3;
        let (intervals, _) =
            enumerate_level_set(&map, &data, ScoreFunction::Absolute, alpha).unwrap();

        let grid_n = 10_000;
        let (glo, ghi) = (-20.0, 20.0);
        let mut mismatches = 0;
        for k in 0..=grid_n {
            let z = glo + (ghi - glo) * k as f64 / grid_n as f64;
            let member =
                interp_typicalness(&map, &data, ScoreFunction::Absolute, z).unwrap() >= alpha;
            let enumerated = intervals.iter().any(|&(a, b)| a <= z && z <= b);
            if member != enumerated {
                // Tolerate disagreement only within jitter of a boundary.
                let near_boundary = intervals
                    .iter()
                    .flat_map(|&(a, b)| [a, b])
                    .any(|e| (z - e).abs() < 1e-9 * 40.0);
                if !near_boundary {
                    mismatches += 1;
                }
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn empty_set_sentinel_when_candidate_always_worst() {
        // Candidate prediction far from z everywhere: its score dominates.
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[0.1, -0.1], &[0.5]).unwrap();
        let knots = vec![-1.0, 0.0, 1.0];
        let predictions = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.1, -0.1, 100.0, //
                0.1, -0.1, 100.0, //
                0.1, -0.1, 100.0,
            ],
        );
        let map = InterpolatedFitMap {
            knots,
            predictions,
            fits_used: 0,
        };
        let cfg = ConformalConfig::with(0.3, Epsilon::Absolute(1e-6), 100).unwrap();
        let itv = interp_conformal_interval(&map, &data, ScoreFunction::Absolute, &cfg).unwrap();
        assert!(itv.is_empty());
        assert!(itv.warnings.iter().any(|w| w.contains("empty")));
    }

    #[test]
    fn auto_interval_accounts_fits() {
        let data = linear_dataset(60, 5, 1.0, 4);
        let reg = SymmetricRegressor::ridge(1.0).unwrap();
        let cfg = ConformalConfig::new(0.1).unwrap();
        let itv = interp_interval_auto(&reg, &data, &cfg, 8, &SplitConfig::default()).unwrap();
        assert!(!itv.is_empty());
        assert_eq!(itv.fits_used % 10, 0, "each build costs d + 2 = 10 fits");
        assert_eq!(itv.epsilon, 0.0);
    }

    #[test]
    fn permuting_rows_permutes_predictions() {
        let data = linear_dataset(12, 3, 0.5, 5);
        let n = data.n();
        let idx: Vec<usize> = (0..n).map(|i| (i + 5) % n).collect();
        let xp = DMatrix::from_fn(n, data.p(), |i, j| data.features()[(idx[i], j)]);
        let yp = DVector::from_fn(n, |i, _| data.responses()[idx[i]]);
        let permuted = Dataset::new(xp, yp, data.test_features().clone()).unwrap();

        let reg = SymmetricRegressor::ridge(0.7).unwrap();
        let map = InterpolatedFitMap::build(&reg, &data, (-1.0, 1.0), 3).unwrap();
        let map_p = InterpolatedFitMap::build(&reg, &permuted, (-1.0, 1.0), 3).unwrap();
        for z in [-3.0, -0.2, 0.6, 2.5] {
            for (i, &source_row) in idx.iter().enumerate() {
                assert_abs_diff_eq!(
                    map.predict(z, source_row),
                    map_p.predict(z, i),
                    epsilon = 1e-10
                );
            }
            assert_abs_diff_eq!(map.predict(z, n), map_p.predict(z, n), epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_bracket_rejected() {
        let data = linear_dataset(10, 2, 0.5, 6);
        let reg = SymmetricRegressor::ridge(1.0).unwrap();
        assert!(InterpolatedFitMap::build(&reg, &data, (1.0, 1.0), 4).is_err());
        assert!(InterpolatedFitMap::build(&reg, &data, (-1.0, 1.0), 1).is_err());
    }
}
