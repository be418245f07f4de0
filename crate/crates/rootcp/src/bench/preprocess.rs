//! Shared preprocessing so every method sees identical inputs: features
//! standardized to zero mean and unit spread, responses centered. The
//! statistics are computed over all pool rows, a symmetric function of the
//! data, so exchangeability (and with it the coverage guarantee) survives.

use serde::Serialize;

use super::synth::Pool;

#[derive(Debug, Clone, Serialize)]
pub struct Preprocessor {
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub response_offset: f64,
}

impl Preprocessor {
    pub fn fit(pool: &Pool) -> Self {
        let m = pool.rows() as f64;
        let p = pool.p();
        let mut feature_means = vec![0.0; p];
        let mut feature_scales = vec![1.0; p];
        for j in 0..p {
            let col = pool.features.column(j);
            let mean = col.sum() / m;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            feature_means[j] = mean;
            let sd = var.sqrt();
            feature_scales[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        let response_offset = pool.responses.sum() / m;
        Self {
            feature_means,
            feature_scales,
            response_offset,
        }
    }

    pub fn apply(&self, pool: &Pool) -> Pool {
        let mut features = pool.features.clone();
        for j in 0..pool.p() {
            let mut col = features.column_mut(j);
            for v in col.iter_mut() {
                *v = (*v - self.feature_means[j]) / self.feature_scales[j];
            }
        }
        let responses = pool.responses.map(|y| y - self.response_offset);
        Pool {
            features,
            responses,
        }
    }

    /// Map a centered response (or interval endpoint) back to original units.
    pub fn restore_response(&self, v: f64) -> f64 {
        v + self.response_offset
    }
}

/// Standardize a pool, returning the transformed pool and the transform.
pub fn standardize(pool: &Pool) -> (Pool, Preprocessor) {
    let prep = Preprocessor::fit(pool);
    (prep.apply(pool), prep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth::{generate_pool, SyntheticSpec};

    #[test]
    fn standardization_centers_and_scales() {
        let pool = generate_pool(&SyntheticSpec::new(200, 5, 3, 2.0, 9).unwrap()).unwrap();
        let (std_pool, prep) = standardize(&pool);
        let m = std_pool.rows() as f64;
        for j in 0..std_pool.p() {
            let col = std_pool.features.column(j);
            let mean = col.sum() / m;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8);
        }
        assert!(std_pool.responses.sum().abs() / m < 1e-10);
        // Centering is invertible and leaves lengths alone.
        let y = pool.responses[0];
        assert!((prep.restore_response(std_pool.responses[0]) - y).abs() < 1e-10);
    }

    #[test]
    fn constant_feature_does_not_blow_up() {
        let mut pool = generate_pool(&SyntheticSpec::new(20, 3, 2, 1.0, 4).unwrap()).unwrap();
        for i in 0..pool.rows() {
            pool.features[(i, 1)] = 5.0;
        }
        let (std_pool, _) = standardize(&pool);
        assert!(std_pool.features.column(1).iter().all(|v| v.abs() < 1e-12));
    }
}
