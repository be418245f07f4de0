//! Seeded synthetic regression data in the make_regression style: standard
//! normal design, a sparse standard-normal coefficient vector, additive
//! Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticSpec {
    /// Observed rows; one extra row is always generated as the hold-out.
    pub n: usize,
    pub p: usize,
    pub n_informative: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, p: usize, n_informative: usize, noise_sd: f64, seed: u64) -> Result<Self> {
        if n < 2 || p == 0 {
            return Err(Error::invalid(format!(
                "need n >= 2 and p >= 1, got n={n}, p={p}"
            )));
        }
        if n_informative > p {
            return Err(Error::invalid(format!(
                "n_informative ({n_informative}) exceeds p ({p})"
            )));
        }
        if !(noise_sd.is_finite() && noise_sd >= 0.0) {
            return Err(Error::invalid(format!(
                "noise_sd must be >= 0, got {noise_sd}"
            )));
        }
        Ok(Self {
            n,
            p,
            n_informative,
            noise_sd,
            seed,
        })
    }
}

/// A block of exchangeable rows the benchmark repeatedly re-splits into
/// observed data plus one held-out pair.
#[derive(Debug, Clone)]
pub struct Pool {
    pub features: DMatrix<f64>,
    pub responses: DVector<f64>,
}

impl Pool {
    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// Reorder rows by `perm`; the last row becomes the held-out test pair.
    pub fn with_permutation(&self, perm: &[usize]) -> Result<(Dataset, f64)> {
        let m = self.rows();
        if perm.len() != m {
            return Err(Error::invalid(format!(
                "permutation has {} entries for {} rows",
                perm.len(),
                m
            )));
        }
        let n = m - 1;
        let features = DMatrix::from_fn(n, self.p(), |i, j| self.features[(perm[i], j)]);
        let responses = DVector::from_fn(n, |i, _| self.responses[perm[i]]);
        let test = self.features.row(perm[n]).transpose();
        let held_out = self.responses[perm[n]];
        Ok((Dataset::new(features, responses, test)?, held_out))
    }

    /// Split without reordering: first `m - 1` rows observed, last held out.
    pub fn identity_split(&self) -> Result<(Dataset, f64)> {
        let perm: Vec<usize> = (0..self.rows()).collect();
        self.with_permutation(&perm)
    }
}

/// Draw `n + 1` rows (`n` observed plus the hold-out): X with standard
/// normal entries, the first `n_informative` coefficients standard normal
/// and the rest zero, `y = X beta + noise_sd * N(0, 1)`.
pub fn generate_pool(spec: &SyntheticSpec) -> Result<Pool> {
    SyntheticSpec::new(spec.n, spec.p, spec.n_informative, spec.noise_sd, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let rows = spec.n + 1;
    let features = DMatrix::from_fn(rows, spec.p, |_, _| normal.sample(&mut rng));
    let beta = DVector::from_fn(spec.p, |j, _| {
        if j < spec.n_informative {
            normal.sample(&mut rng)
        } else {
            0.0
        }
    });
    let noise = DVector::from_fn(rows, |_, _| {
        let e: f64 = normal.sample(&mut rng);
        e * spec.noise_sd
    });
    let responses = &features * &beta + noise;
    Ok(Pool {
        features,
        responses,
    })
}

/// Single-instance convenience: generate and split off the hold-out.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, f64)> {
    generate_pool(spec)?.identity_split()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::SymmetricRegressor;

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SyntheticSpec::new(50, 8, 4, 1.0, 7).unwrap();
        let a = generate_pool(&spec).unwrap();
        let b = generate_pool(&spec).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.responses, b.responses);
        let c = generate_pool(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.responses, c.responses);
    }

    #[test]
    fn noiseless_responses_live_in_the_column_space() {
        let spec = SyntheticSpec::new(40, 6, 6, 0.0, 3).unwrap();
        let (data, held_out) = generate(&spec).unwrap();
        let model = SymmetricRegressor::ridge(1e-10)
            .unwrap()
            .fit_observed(&data)
            .unwrap();
        let preds = model.predict_rows(data.features());
        for i in 0..data.n() {
            assert!((preds[i] - data.responses()[i]).abs() < 1e-6);
        }
        // The held-out row obeys the same noiseless linear model.
        assert!((model.predict(data.test_features()) - held_out).abs() < 1e-6);
    }

    #[test]
    fn informative_count_is_validated() {
        assert!(SyntheticSpec::new(30, 5, 6, 1.0, 0).is_err());
        assert!(SyntheticSpec::new(30, 5, 5, 1.0, 0).is_ok());
    }

    #[test]
    fn permutation_moves_the_hold_out() {
        let spec = SyntheticSpec::new(10, 2, 2, 0.5, 1).unwrap();
        let pool = generate_pool(&spec).unwrap();
        let mut perm: Vec<usize> = (0..11).collect();
        perm.swap(0, 10);
        let (data, held_out) = pool.with_permutation(&perm).unwrap();
        assert_eq!(held_out, pool.responses[0]);
        assert_eq!(data.responses()[0], pool.responses[10]);
    }
}
