use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Observed regression data (`n` feature rows with responses) together with
/// the feature row of the point whose response is being predicted.
///
/// The matrix augmented with the test row is precomputed once; fitting on the
/// augmented data for a candidate response only has to assemble the response
/// vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    responses: DVector<f64>,
    test_features: DVector<f64>,
    augmented: DMatrix<f64>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        responses: DVector<f64>,
        test_features: DVector<f64>,
    ) -> Result<Self> {
        let n = features.nrows();
        let p = features.ncols();
        if n < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 observed rows, got {n}"
            )));
        }
        if responses.len() != n {
            return Err(Error::invalid(format!(
                "feature rows ({n}) and responses ({}) disagree",
                responses.len()
            )));
        }
        if test_features.len() != p {
            return Err(Error::invalid(format!(
                "test features have length {}, expected {p}",
                test_features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite())
            || responses.iter().any(|v| !v.is_finite())
            || test_features.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("all dataset entries must be finite"));
        }
        let augmented = DMatrix::from_fn(n + 1, p, |i, j| {
            if i < n {
                features[(i, j)]
            } else {
                test_features[j]
            }
        });
        Ok(Self {
            features,
            responses,
            test_features,
            augmented,
        })
    }

    /// Convenience constructor from row-major nested vectors.
    pub fn from_rows(
        features: &[Vec<f64>],
        responses: &[f64],
        test_features: &[f64],
    ) -> Result<Self> {
        let n = features.len();
        let p = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("feature rows have inconsistent lengths"));
        }
        let mat = DMatrix::from_fn(n, p, |i, j| features[i][j]);
        Self::new(
            mat,
            DVector::from_column_slice(responses),
            DVector::from_column_slice(test_features),
        )
    }

    /// Number of observed rows.
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Number of features.
    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn test_features(&self) -> &DVector<f64> {
        &self.test_features
    }

    /// The `(n+1) x p` matrix with the test row appended last.
    pub fn augmented_features(&self) -> &DMatrix<f64> {
        &self.augmented
    }

    /// Responses augmented with candidate `z` in the last slot.
    pub fn augmented_responses(&self, z: f64) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n + 1, |i, _| if i < n { self.responses[i] } else { z })
    }

    /// `(min, max)` of the observed responses.
    pub fn response_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &y in self.responses.iter() {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        (lo, hi)
    }
}
