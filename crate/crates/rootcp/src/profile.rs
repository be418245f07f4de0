//! The object the root solver probes: a cached, fit-counting map from a
//! candidate response to its (hard or smoothed) typicalness.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regressors::{scores_from_predictions, FittedModel, SymmetricRegressor};
use crate::score::{typicalness, ScoreFunction};
use crate::smooth::{smooth_typicalness, SmoothingConfig};

/// Which typicalness the profile reports.
#[derive(Debug, Clone, Copy)]
pub enum ProfileKind {
    Hard,
    Smooth(SmoothingConfig),
}

/// One evaluated candidate: its typicalness and the fitted predictions at
/// every augmented row (kept so the initialization cascade can interpolate
/// the fit map without refitting).
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub z: f64,
    pub value: f64,
    pub predictions: DVector<f64>,
}

/// Cached evaluation of `z -> pi(z)`.
///
/// Every fresh evaluation costs exactly one model fit; re-evaluating a cached
/// candidate costs nothing. Instances are single-threaded (mutable cache and
/// counter); run one profile per repetition when parallelizing.
pub struct TypicalnessProfile<'a> {
    regressor: SymmetricRegressor,
    data: &'a Dataset,
    score_fn: ScoreFunction,
    kind: ProfileKind,
    max_fits: usize,
    cache: HashMap<u64, usize>,
    records: Vec<EvalRecord>,
    external_fits: usize,
    diagnostic_fits: usize,
    warm: Option<FittedModel>,
}

impl<'a> TypicalnessProfile<'a> {
    pub fn new(
        regressor: SymmetricRegressor,
        data: &'a Dataset,
        score_fn: ScoreFunction,
        kind: ProfileKind,
        max_fits: usize,
    ) -> Self {
        Self {
            regressor,
            data,
            score_fn,
            kind,
            max_fits,
            cache: HashMap::new(),
            records: Vec::new(),
            external_fits: 0,
            diagnostic_fits: 0,
            warm: None,
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn regressor(&self) -> &SymmetricRegressor {
        &self.regressor
    }

    pub fn score_fn(&self) -> ScoreFunction {
        self.score_fn
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn max_fits(&self) -> usize {
        self.max_fits
    }

    /// Fits consumed so far, including fits charged from helper models
    /// (observed-data fit, split fit) but not diagnostic probing.
    pub fn fits_used(&self) -> usize {
        self.records.len() + self.external_fits - self.diagnostic_fits
    }

    /// Evaluate the typicalness at `z`, fitting at most one model.
    pub fn eval(&mut self, z: f64) -> Result<f64> {
        self.eval_inner(z, false)
    }

    /// Evaluation for post-hoc diagnostics: cached like [`eval`] but exempt
    /// from the fit budget and excluded from [`fits_used`].
    pub fn eval_diagnostic(&mut self, z: f64) -> Result<f64> {
        self.eval_inner(z, true)
    }

    fn eval_inner(&mut self, z: f64, diagnostic: bool) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::invalid(format!("candidate must be finite, got {z}")));
        }
        if let Some(&idx) = self.cache.get(&z.to_bits()) {
            return Ok(self.records[idx].value);
        }
        if !diagnostic && self.fits_used() >= self.max_fits {
            return Err(Error::FitBudgetExhausted {
                max_fits: self.max_fits,
            });
        }
        let model = match (&self.regressor, &self.warm) {
            (reg, Some(prev)) if reg.is_iterative() => {
                self.regressor.fit_with_warm_start(self.data, z, prev)?
            }
            _ => self.regressor.fit(self.data, z)?,
        };
        let predictions = model.predict_rows(self.data.augmented_features());
        let scores = scores_from_predictions(self.score_fn, self.data, &predictions, z)?;
        let value = match &self.kind {
            ProfileKind::Hard => typicalness(&scores),
            ProfileKind::Smooth(cfg) => smooth_typicalness(&scores, cfg),
        };
        self.warm = Some(model);
        if diagnostic {
            // The record pushed below is cancelled out of fits_used.
            self.diagnostic_fits += 1;
        }
        let idx = self.records.len();
        self.records.push(EvalRecord {
            z,
            value,
            predictions,
        });
        self.cache.insert(z.to_bits(), idx);
        Ok(value)
    }

    /// Cached value, if `z` has been evaluated.
    pub fn cached(&self, z: f64) -> Option<f64> {
        self.cache.get(&z.to_bits()).map(|&i| self.records[i].value)
    }

    /// Every evaluation so far, in evaluation order.
    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    /// Charge one model fit performed outside the profile (for instance the
    /// observed-data fit used to guess the test response).
    pub fn charge_external_fit(&mut self) {
        self.external_fits += 1;
    }

    /// Charge `count` fits spent by a helper profile (the coarse-tolerance
    /// previsualization pass).
    pub fn absorb_fits(&mut self, count: usize) {
        self.external_fits += count;
    }

    /// All probed `(z, value)` pairs, for initialization-failure reports.
    pub fn probes(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.z, r.value)).collect()
    }
}

/// A bracket for the level crossing: exactly one side sits at or above the
/// level, the other strictly below.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub lo_value: f64,
    pub hi_value: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64, lo_value: f64, hi_value: f64, level: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::invalid(format!(
                "bracket needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        let lo_in = crate::score::clears_level(lo_value, level);
        let hi_in = crate::score::clears_level(hi_value, level);
        if lo_in == hi_in {
            return Err(Error::invalid(format!(
                "bracket must straddle the level {level}: values ({lo_value}, {hi_value})"
            )));
        }
        Ok(Self {
            lo,
            hi,
            lo_value,
            hi_value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn tiny_dataset() -> Dataset {
        Dataset::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            &[0.1, 1.1, 1.9, 3.2],
            &[1.5],
        )
        .unwrap()
    }

    #[test]
    fn eval_is_cached_and_counted() {
        let data = tiny_dataset();
        let reg = SymmetricRegressor::ridge(0.5).unwrap();
        let mut profile =
            TypicalnessProfile::new(reg, &data, ScoreFunction::Absolute, ProfileKind::Hard, 100);
        let v1 = profile.eval(1.0).unwrap();
        assert_eq!(profile.fits_used(), 1);
        let v2 = profile.eval(1.0).unwrap();
        assert_eq!(profile.fits_used(), 1, "repeat evaluation must be free");
        assert_eq!(v1, v2);
        assert_eq!(profile.cached(1.0), Some(v1));
        profile.eval(2.0).unwrap();
        assert_eq!(profile.fits_used(), 2);
    }

    #[test]
    fn budget_is_enforced() {
        let data = tiny_dataset();
        let reg = SymmetricRegressor::ridge(0.5).unwrap();
        let mut profile =
            TypicalnessProfile::new(reg, &data, ScoreFunction::Absolute, ProfileKind::Hard, 2);
        profile.eval(0.0).unwrap();
        profile.eval(1.0).unwrap();
        match profile.eval(2.0) {
            Err(Error::FitBudgetExhausted { max_fits }) => assert_eq!(max_fits, 2),
            other => panic!("expected budget error, got {other:?}"),
        }
        // Diagnostics bypass the budget.
        assert!(profile.eval_diagnostic(2.0).is_ok());
        assert_eq!(profile.fits_used(), 2);
    }

    #[test]
    fn bracket_validation() {
        assert!(Bracket::new(0.0, 1.0, 0.5, 0.01, 0.1).is_ok());
        assert!(Bracket::new(0.0, 1.0, 0.01, 0.5, 0.1).is_ok());
        assert!(Bracket::new(0.0, 1.0, 0.5, 0.5, 0.1).is_err());
        assert!(Bracket::new(1.0, 0.0, 0.5, 0.01, 0.1).is_err());
    }
}
