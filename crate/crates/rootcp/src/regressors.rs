//! Symmetric regression estimators fitted on the augmented dataset
//! `D_{n+1}(z)`. Every estimator here is invariant under permutation of its
//! training pairs, which is what the conformal coverage guarantee needs.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::score::{ScoreFunction, ScoreVector};

pub const DEFAULT_LASSO_TOL: f64 = 1e-8;
pub const DEFAULT_LASSO_MAX_ITER: usize = 10_000;

/// A regression estimator that can be refit for any candidate response.
///
/// `lambda` is the penalty weight; the lasso `tol` is a duality-gap threshold
/// relative to `||y||^2` of the response vector being fitted, so a certified
/// optimization error is always available.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetricRegressor {
    Ridge {
        lambda: f64,
    },
    Lasso {
        lambda: f64,
        tol: f64,
        max_iter: usize,
    },
    Knn {
        k: usize,
    },
}

impl SymmetricRegressor {
    pub fn ridge(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "ridge lambda must be positive, got {lambda}"
            )));
        }
        Ok(SymmetricRegressor::Ridge { lambda })
    }

    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::lasso_with(lambda, DEFAULT_LASSO_TOL, DEFAULT_LASSO_MAX_ITER)
    }

    pub fn lasso_with(lambda: f64, tol: f64, max_iter: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "lasso lambda must be positive, got {lambda}"
            )));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid(format!(
                "lasso tol must be positive, got {tol}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::invalid("lasso max_iter must be positive"));
        }
        Ok(SymmetricRegressor::Lasso {
            lambda,
            tol,
            max_iter,
        })
    }

    pub fn knn(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("knn k must be positive"));
        }
        Ok(SymmetricRegressor::Knn { k })
    }

    /// Same estimator with the iterative-solver tolerance relaxed by
    /// `factor`; closed-form estimators are returned unchanged. Used for the
    /// coarse previsualization pass of the initialization cascade.
    pub fn relaxed(&self, factor: f64) -> Self {
        match *self {
            SymmetricRegressor::Lasso {
                lambda,
                tol,
                max_iter,
            } => SymmetricRegressor::Lasso {
                lambda,
                tol: tol * factor,
                max_iter,
            },
            ref other => other.clone(),
        }
    }

    pub fn is_iterative(&self) -> bool {
        matches!(self, SymmetricRegressor::Lasso { .. })
    }

    /// Fit on the augmented dataset `D_{n+1}(candidate)`.
    pub fn fit(&self, data: &Dataset, candidate: f64) -> Result<FittedModel> {
        if !candidate.is_finite() {
            return Err(Error::invalid(format!(
                "candidate must be finite, got {candidate}"
            )));
        }
        let y = data.augmented_responses(candidate);
        self.fit_xy(data.augmented_features(), &y, None)
    }

    /// Fit on the augmented dataset, starting the iterative solvers from the
    /// coefficients of `previous`. Closed-form estimators ignore the hint.
    pub fn fit_with_warm_start(
        &self,
        data: &Dataset,
        candidate: f64,
        previous: &FittedModel,
    ) -> Result<FittedModel> {
        if !candidate.is_finite() {
            return Err(Error::invalid(format!(
                "candidate must be finite, got {candidate}"
            )));
        }
        if let Some(coef) = previous.coefficients() {
            if coef.len() != data.p() {
                return Err(Error::invalid(format!(
                    "warm start has {} coefficients, expected {}",
                    coef.len(),
                    data.p()
                )));
            }
        }
        let y = data.augmented_responses(candidate);
        self.fit_xy(data.augmented_features(), &y, Some(previous))
    }

    /// Fit on the observed rows only (no augmentation). This is the model the
    /// initialization cascade uses to guess the test response.
    pub fn fit_observed(&self, data: &Dataset) -> Result<FittedModel> {
        self.fit_xy(data.features(), data.responses(), None)
    }

    /// Fit on an arbitrary design matrix / response pair.
    pub fn fit_xy(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        warm: Option<&FittedModel>,
    ) -> Result<FittedModel> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        match *self {
            SymmetricRegressor::Ridge { lambda } => fit_ridge(x, y, lambda),
            SymmetricRegressor::Lasso {
                lambda,
                tol,
                max_iter,
            } => {
                let start = warm.and_then(FittedModel::coefficients);
                fit_lasso(x, y, lambda, tol, max_iter, start)
            }
            SymmetricRegressor::Knn { k } => Ok(FittedModel {
                inner: FittedInner::Knn {
                    features: x.clone(),
                    responses: y.clone(),
                    k,
                },
                fit_meta: FitMeta {
                    iterations: 0,
                    final_tol: 0.0,
                    converged: true,
                },
            }),
        }
    }
}

/// Solver bookkeeping attached to every fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitMeta {
    pub iterations: usize,
    /// Achieved optimality measure: normal-equation gradient norm for ridge,
    /// duality gap for lasso, zero for kNN.
    pub final_tol: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
enum FittedInner {
    Linear {
        coefficients: DVector<f64>,
    },
    Knn {
        features: DMatrix<f64>,
        responses: DVector<f64>,
        k: usize,
    },
}

/// An immutable prediction function produced by a fit.
#[derive(Debug, Clone)]
pub struct FittedModel {
    inner: FittedInner,
    pub fit_meta: FitMeta,
}

impl FittedModel {
    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        match &self.inner {
            FittedInner::Linear { coefficients } => coefficients.dot(x),
            FittedInner::Knn {
                features,
                responses,
                k,
            } => knn_predict(features, responses, *k, x),
        }
    }

    /// Predictions at every row of `rows`.
    pub fn predict_rows(&self, rows: &DMatrix<f64>) -> DVector<f64> {
        match &self.inner {
            FittedInner::Linear { coefficients } => rows * coefficients,
            FittedInner::Knn { .. } => {
                DVector::from_fn(rows.nrows(), |i, _| self.predict(&rows.row(i).transpose()))
            }
        }
    }

    /// Linear coefficients, when the estimator has them.
    pub fn coefficients(&self) -> Option<&DVector<f64>> {
        match &self.inner {
            FittedInner::Linear { coefficients } => Some(coefficients),
            FittedInner::Knn { .. } => None,
        }
    }
}

fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<FittedModel> {
    let p = x.ncols();
    let xt = x.transpose();
    let mut gram = &xt * x;
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let rhs = &xt * y;
    let chol = nalgebra::linalg::Cholesky::new(gram.clone()).ok_or_else(|| {
        Error::Numerical("ridge normal equations are not positive definite".into())
    })?;
    let coefficients = chol.solve(&rhs);
    // Residual of the normal equations, i.e. half the objective gradient.
    let grad = (&gram * &coefficients - rhs).norm() * 2.0;
    Ok(FittedModel {
        inner: FittedInner::Linear { coefficients },
        fit_meta: FitMeta {
            iterations: 1,
            final_tol: grad,
            converged: true,
        },
    })
}

/// Coordinate descent for `0.5 ||y - X b||^2 + lambda ||b||_1` with a
/// duality-gap stopping rule: terminate once `gap <= tol * ||y||^2`.
fn fit_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    warm: Option<&DVector<f64>>,
) -> Result<FittedModel> {
    let p = x.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let y_sq = y.norm_squared();
    let gap_tol = (tol * y_sq).max(f64::MIN_POSITIVE);

    let mut beta = match warm {
        Some(b) if b.len() == p => b.clone(),
        _ => DVector::zeros(p),
    };
    let mut residual = y - x * &beta;
    let mut gap = duality_gap(x, y, &beta, &residual, lambda, y_sq);
    let mut iterations = 0;

    while gap > gap_tol && iterations < max_iter {
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = x.column(j).dot(&residual) + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                residual.axpy(old - new, &x.column(j), 1.0);
                beta[j] = new;
            }
        }
        iterations += 1;
        gap = duality_gap(x, y, &beta, &residual, lambda, y_sq);
    }

    let converged = gap <= gap_tol;
    Ok(FittedModel {
        inner: FittedInner::Linear { coefficients: beta },
        fit_meta: FitMeta {
            iterations,
            final_tol: gap,
            converged,
        },
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn duality_gap(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    residual: &DVector<f64>,
    lambda: f64,
    y_sq: f64,
) -> f64 {
    let primal = 0.5 * residual.norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
    let corr = (x.transpose() * residual).amax();
    let scale = if corr > lambda { lambda / corr } else { 1.0 };
    // Feasible dual point theta = scale * residual.
    let shifted = y - residual * scale;
    let dual = 0.5 * y_sq - 0.5 * shifted.norm_squared();
    (primal - dual).max(0.0)
}

fn knn_predict(
    features: &DMatrix<f64>,
    responses: &DVector<f64>,
    k: usize,
    x: &DVector<f64>,
) -> f64 {
    let rows = features.nrows();
    let mut dist: Vec<(f64, usize)> = (0..rows)
        .map(|i| {
            let mut d = 0.0;
            for j in 0..features.ncols() {
                let diff = features[(i, j)] - x[j];
                d += diff * diff;
            }
            (d, i)
        })
        .collect();
    // Ties broken by the lowest row index, deterministically.
    dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let take = k.min(rows);
    dist[..take].iter().map(|&(_, i)| responses[i]).sum::<f64>() / take as f64
}

/// Per-row intercept/slope pairs of the ridge prediction map: with responses
/// `(y_1..y_n, z)` the prediction at row `i` equals `intercepts[i] +
/// slopes[i] * z` for every `z`.
#[derive(Debug, Clone)]
pub struct AffineFitCoefficients {
    pub intercepts: DVector<f64>,
    pub slopes: DVector<f64>,
}

impl AffineFitCoefficients {
    pub fn len(&self) -> usize {
        self.intercepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intercepts.is_empty()
    }

    pub fn predict(&self, row: usize, z: f64) -> f64 {
        self.intercepts[row] + self.slopes[row] * z
    }
}

/// Recover the affine map `z -> ridge predictions` from two exact fits at
/// `z = 0` and `z = 1`, cross-checked with a third fit at an interior point.
pub fn affine_coefficients(data: &Dataset, lambda: f64) -> Result<AffineFitCoefficients> {
    let regressor = SymmetricRegressor::ridge(lambda)?;
    let at0 = regressor
        .fit(data, 0.0)?
        .predict_rows(data.augmented_features());
    let at1 = regressor
        .fit(data, 1.0)?
        .predict_rows(data.augmented_features());
    let slopes = &at1 - &at0;
    let coeffs = AffineFitCoefficients {
        intercepts: at0,
        slopes,
    };

    let (lo, hi) = data.response_range();
    let mut z_check = 0.5 * (lo + hi);
    if (z_check - 0.0).abs() < 1e-9 || (z_check - 1.0).abs() < 1e-9 {
        z_check += 0.5 * (hi - lo).max(1.0);
    }
    let direct = regressor
        .fit(data, z_check)?
        .predict_rows(data.augmented_features());
    let scale = direct.amax().max(1.0);
    for i in 0..direct.len() {
        let affine = coeffs.predict(i, z_check);
        if (affine - direct[i]).abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "affine decomposition check failed at row {i}: {affine} vs {}",
                direct[i]
            )));
        }
    }
    Ok(coeffs)
}

/// Scores of the `n+1` augmented instances for one candidate, given the
/// fitted predictions at every augmented row.
pub fn scores_from_predictions(
    score_fn: ScoreFunction,
    data: &Dataset,
    predictions: &DVector<f64>,
    candidate: f64,
) -> Result<ScoreVector> {
    let n = data.n();
    if predictions.len() != n + 1 {
        return Err(Error::invalid(format!(
            "need {} predictions, got {}",
            n + 1,
            predictions.len()
        )));
    }
    let mut scores = Vec::with_capacity(n + 1);
    for i in 0..n {
        scores.push(score_fn.score(data.responses()[i], predictions[i])?);
    }
    scores.push(score_fn.score(candidate, predictions[n])?);
    ScoreVector::new(scores)
}

/// Fit on `D_{n+1}(candidate)` and score every instance.
pub fn candidate_scores(
    score_fn: ScoreFunction,
    model: &FittedModel,
    data: &Dataset,
    candidate: f64,
) -> Result<ScoreVector> {
    let predictions = model.predict_rows(data.augmented_features());
    scores_from_predictions(score_fn, data, &predictions, candidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let x = DMatrix::from_fn(n, p, |_, _| normal.sample(&mut rng));
        let beta = DVector::from_fn(p, |_, _| normal.sample(&mut rng));
        let y = &x * &beta + DVector::from_fn(n, |_, _| normal.sample(&mut rng)) * 0.3;
        let test = DVector::from_fn(p, |_, _| normal.sample(&mut rng));
        Dataset::new(x, y, test).unwrap()
    }

    #[test]
    fn scalar_ridge_matches_hand_formula() {
        // Augmented design [1; 2] with responses [1, z] and lambda = 1:
        // beta(z) = (1 + 2z) / (1 + 4 + 1) = (1 + 2z) / 6.
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        for z in [0.0, 0.7, -3.0] {
            let y = DVector::from_column_slice(&[1.0, z]);
            let model = SymmetricRegressor::ridge(1.0)
                .unwrap()
                .fit_xy(&x, &y, None)
                .unwrap();
            let beta = model.coefficients().unwrap()[0];
            assert_abs_diff_eq!(beta, (1.0 + 2.0 * z) / 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn huge_ridge_penalty_shrinks_predictions() {
        let data = random_dataset(40, 5, 1);
        let model = SymmetricRegressor::ridge(1e12)
            .unwrap()
            .fit(&data, 0.5)
            .unwrap();
        let preds = model.predict_rows(data.augmented_features());
        assert!(preds.amax() < 1e-6);
    }

    #[test]
    fn ridge_normal_equation_residual_is_tiny() {
        let data = random_dataset(80, 12, 2);
        let model = SymmetricRegressor::ridge(2.0)
            .unwrap()
            .fit(&data, 1.3)
            .unwrap();
        assert!(
            model.fit_meta.final_tol <= 1e-8,
            "gradient {}",
            model.fit_meta.final_tol
        );
    }

    #[test]
    fn knn_with_all_rows_predicts_global_mean() {
        let data = random_dataset(10, 3, 3);
        let z = 2.5;
        let model = SymmetricRegressor::knn(11).unwrap().fit(&data, z).unwrap();
        let mean = (data.responses().sum() + z) / 11.0;
        let x = DVector::from_column_slice(&[0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(model.predict(&x), mean, epsilon = 1e-12);
    }

    #[test]
    fn lasso_duality_gap_certified() {
        let data = random_dataset(60, 15, 4);
        let reg = SymmetricRegressor::lasso(0.5).unwrap();
        let model = reg.fit(&data, 0.2).unwrap();
        assert!(model.fit_meta.converged);
        let y = data.augmented_responses(0.2);
        assert!(model.fit_meta.final_tol <= DEFAULT_LASSO_TOL * y.norm_squared());
    }

    #[test]
    fn lasso_warm_start_at_optimum_stops_immediately() {
        let data = random_dataset(60, 15, 5);
        let reg = SymmetricRegressor::lasso(0.5).unwrap();
        let cold = reg.fit(&data, 0.2).unwrap();
        let warm = reg.fit_with_warm_start(&data, 0.2, &cold).unwrap();
        assert!(
            warm.fit_meta.iterations <= 1,
            "took {} sweeps",
            warm.fit_meta.iterations
        );
    }

    #[test]
    fn lasso_warm_start_matches_cold_fit() {
        let data = random_dataset(60, 15, 6);
        let reg = SymmetricRegressor::lasso(1.0).unwrap();
        let base = reg.fit(&data, 0.2).unwrap();
        let warm = reg.fit_with_warm_start(&data, 0.2 + 1e-6, &base).unwrap();
        let cold = reg.fit(&data, 0.2 + 1e-6).unwrap();
        let pw = warm.predict_rows(data.augmented_features());
        let pc = cold.predict_rows(data.augmented_features());
        let y_sq = data.augmented_responses(0.2).norm_squared();
        assert!((pw - pc).amax() <= 10.0 * DEFAULT_LASSO_TOL * y_sq);
    }

    #[test]
    fn warm_start_shape_mismatch_is_rejected() {
        let d1 = random_dataset(30, 5, 7);
        let d2 = random_dataset(30, 8, 8);
        let reg = SymmetricRegressor::lasso(0.5).unwrap();
        let prev = reg.fit(&d1, 0.0).unwrap();
        assert!(reg.fit_with_warm_start(&d2, 0.0, &prev).is_err());
    }

    #[test]
    fn fits_are_permutation_invariant() {
        let data = random_dataset(30, 6, 9);
        let n = data.n();
        let candidate = 0.4;
        // Rotate the observed rows by 7 and refit; predictions must agree.
        let idx: Vec<usize> = (0..n).map(|i| (i + 7) % n).collect();
        let xp = DMatrix::from_fn(n, data.p(), |i, j| data.features()[(idx[i], j)]);
        let yp = DVector::from_fn(n, |i, _| data.responses()[idx[i]]);
        let permuted = Dataset::new(xp, yp, data.test_features().clone()).unwrap();

        for reg in [
            SymmetricRegressor::ridge(1.0).unwrap(),
            SymmetricRegressor::lasso(0.5).unwrap(),
            SymmetricRegressor::knn(3).unwrap(),
        ] {
            let a = reg.fit(&data, candidate).unwrap();
            let b = reg.fit(&permuted, candidate).unwrap();
            let pa = a.predict(data.test_features());
            let pb = b.predict(data.test_features());
            let tol = if reg.is_iterative() {
                10.0 * DEFAULT_LASSO_TOL * data.augmented_responses(candidate).norm_squared()
            } else {
                1e-10
            };
            assert!((pa - pb).abs() <= tol, "{reg:?}: {pa} vs {pb}");
        }
    }

    #[test]
    fn affine_coefficients_reproduce_refits() {
        let data = random_dataset(50, 8, 10);
        let lambda = 3.0;
        let coeffs = affine_coefficients(&data, lambda).unwrap();
        let reg = SymmetricRegressor::ridge(lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let z = z * 5.0;
            let direct = reg
                .fit(&data, z)
                .unwrap()
                .predict_rows(data.augmented_features());
            for i in 0..direct.len() {
                assert_abs_diff_eq!(coeffs.predict(i, z), direct[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn affine_slopes_vanish_for_huge_penalty() {
        let data = random_dataset(30, 4, 12);
        let coeffs = affine_coefficients(&data, 1e12).unwrap();
        assert!(coeffs.slopes.amax() < 1e-9);
    }

    #[test]
    fn scalar_ridge_affine_example() {
        // x_1 = 1 (y_1 = 1), test x = 2: prediction at row 1 is (1 + 2z)/6,
        // so a_1 = 1/6 and b_1 = 2/6. Dataset needs n >= 2, so duplicate the
        // observed row and adjust: with rows {1, 1} and test 2, lambda = 1,
        // gram = 1 + 1 + 4 + 1 = 7, rhs = y_1 + y_2 + 2z = 2 + 2z.
        let data = Dataset::from_rows(&[vec![1.0], vec![1.0]], &[1.0, 1.0], &[2.0]).unwrap();
        let coeffs = affine_coefficients(&data, 1.0).unwrap();
        assert_abs_diff_eq!(coeffs.intercepts[0], 2.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs.slopes[0], 2.0 / 7.0, epsilon = 1e-12);
    }
}
