//! The repetition protocol: permute the pool, hold out the last row, compute
//! every requested interval, record coverage, length, wall time and fit
//! counts. Repetitions are independent and may run in parallel; records are
//! merged in repetition order so reports are deterministic.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ConformalConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::interp::interp_interval_auto;
use crate::interval::{ConformalInterval, Method};
use crate::oracle::exact_ridge_set;
use crate::regressors::{candidate_scores, SymmetricRegressor};
use crate::root::conformal_interval;
use crate::score::ScoreFunction;
use crate::smooth::{default_gamma, smooth_conformal_interval, Envelope, SmoothingConfig};
use crate::split::{split_interval, SplitConfig};

use super::csvio::parse_csv;
use super::preprocess::standardize;
use super::report::{BenchReport, RepRecord};
use super::synth::{generate_pool, Pool, SyntheticSpec};

#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv(PathBuf),
}

impl DataSource {
    fn describe(&self) -> String {
        match self {
            DataSource::Synthetic(s) => format!(
                "synthetic(n={}, p={}, informative={}, noise_sd={}, seed={})",
                s.n, s.p, s.n_informative, s.noise_sd, s.seed
            ),
            DataSource::Csv(p) => format!("csv({})", p.display()),
        }
    }
}

/// Estimator choice with data-driven defaults for unset penalties:
/// ridge `lambda = p / ||beta_ls||^2`, lasso `lambda = ||X^T y||_inf / 10`.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Ridge {
        lambda: Option<f64>,
    },
    Lasso {
        lambda: Option<f64>,
        tol: f64,
        max_iter: usize,
    },
    Knn {
        k: usize,
    },
}

impl ModelSpec {
    pub fn describe(&self) -> String {
        match self {
            ModelSpec::Ridge { .. } => "ridge".into(),
            ModelSpec::Lasso { .. } => "lasso".into(),
            ModelSpec::Knn { k } => format!("knn(k={k})"),
        }
    }

    pub fn resolve(&self, pool: &Pool) -> Result<SymmetricRegressor> {
        match *self {
            ModelSpec::Ridge { lambda: Some(l) } => SymmetricRegressor::ridge(l),
            ModelSpec::Ridge { lambda: None } => {
                let beta_ls = least_squares_norm_sq(pool)?;
                let lambda = if beta_ls > 0.0 {
                    pool.p() as f64 / beta_ls
                } else {
                    1.0
                };
                SymmetricRegressor::ridge(lambda)
            }
            ModelSpec::Lasso {
                lambda: Some(l),
                tol,
                max_iter,
            } => SymmetricRegressor::lasso_with(l, tol, max_iter),
            ModelSpec::Lasso {
                lambda: None,
                tol,
                max_iter,
            } => {
                let lambda_max = (pool.features.transpose() * &pool.responses).amax();
                SymmetricRegressor::lasso_with((lambda_max / 10.0).max(1e-8), tol, max_iter)
            }
            ModelSpec::Knn { k } => SymmetricRegressor::knn(k),
        }
    }
}

fn least_squares_norm_sq(pool: &Pool) -> Result<f64> {
    // Least squares via ridge with a vanishing penalty.
    let reg = SymmetricRegressor::ridge(1e-10)?;
    let model = reg.fit_xy(&pool.features, &pool.responses, None)?;
    Ok(model
        .coefficients()
        .map(|c| c.norm_squared())
        .unwrap_or(0.0))
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub model: ModelSpec,
    pub conformal: ConformalConfig,
    /// Smoothing strength for the smooth method; derived from the observed
    /// residual spread when unset.
    pub gamma: Option<f64>,
    /// Query fits for the interpolated method.
    pub interp_queries: usize,
    pub repeats: usize,
    pub seed: u64,
    /// When false, wall times are recorded as zero so reports are
    /// byte-reproducible.
    pub collect_timing: bool,
    /// Cap on repetition parallelism (`CP_THREADS`); `None` uses the rayon
    /// default.
    pub threads: Option<usize>,
}

/// The oracle baseline: one fit on the augmented data at the true held-out
/// response, then the centered quantile interval. A reference point, not a
/// realizable predictor.
pub fn oracle_interval(
    regressor: &SymmetricRegressor,
    data: &Dataset,
    true_response: f64,
    cfg: &ConformalConfig,
) -> Result<ConformalInterval> {
    let model = regressor.fit(data, true_response)?;
    let scores = candidate_scores(ScoreFunction::Absolute, &model, data, true_response)?;
    // Quantile over all n+1 scores (the candidate's own is already among
    // them): k = ceil((n+1)(1 - alpha)).
    let mut sorted = scores.as_slice().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let k = ((sorted.len() as f64) * (1.0 - cfg.alpha)).ceil() as usize;
    let q = sorted[k.clamp(1, sorted.len()) - 1];
    let center = model.predict(data.test_features());
    Ok(ConformalInterval::new(
        center - q,
        center + q,
        0.0,
        1,
        Method::Oracle,
    ))
}

pub fn run_benchmark(source: &DataSource, bc: &BenchConfig) -> Result<BenchReport> {
    if bc.repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let raw = match source {
        DataSource::Synthetic(spec) => generate_pool(spec)?,
        DataSource::Csv(path) => parse_csv(path)?,
    };
    if raw.rows() < 4 {
        return Err(Error::invalid("need at least 4 pool rows to benchmark"));
    }
    let (pool, _transform) = standardize(&raw);
    let regressor = bc.model.resolve(&pool)?;

    let run_rep = |rep: usize| -> Result<Vec<RepRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(bc.seed);
        rng.set_stream(1 + rep as u64);
        let mut perm: Vec<usize> = (0..pool.rows()).collect();
        perm.shuffle(&mut rng);
        let (data, held_out) = pool.with_permutation(&perm)?;
        let split_cfg = SplitConfig {
            train_fraction: 0.5,
            shuffle_seed: bc.seed.wrapping_add(rep as u64),
        };
        let mut records = Vec::with_capacity(bc.methods.len());
        for &method in &bc.methods {
            let started = Instant::now();
            let outcome = run_method(method, &regressor, &data, held_out, bc, &split_cfg);
            let wall = if bc.collect_timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            };
            records.push(match outcome {
                Ok((interval, covered)) => RepRecord {
                    rep,
                    method,
                    covered,
                    length: interval.length(),
                    wall_time_s: wall,
                    fits: interval.fits_used,
                    error: None,
                },
                Err(e) => RepRecord {
                    rep,
                    method,
                    covered: false,
                    length: f64::NAN,
                    wall_time_s: wall,
                    fits: 0,
                    error: Some(e.to_string()),
                },
            });
        }
        Ok(records)
    };

    let nested: Vec<Result<Vec<RepRecord>>> = match bc.threads {
        Some(1) => (0..bc.repeats).map(run_rep).collect(),
        Some(t) => {
            let pool_threads = t.clamp(1, bc.repeats.max(1));
            let tp = rayon::ThreadPoolBuilder::new()
                .num_threads(pool_threads)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            tp.install(|| {
                use rayon::prelude::*;
                (0..bc.repeats).into_par_iter().map(run_rep).collect()
            })
        }
        None => {
            use rayon::prelude::*;
            (0..bc.repeats).into_par_iter().map(run_rep).collect()
        }
    };

    let mut per_rep = Vec::with_capacity(bc.repeats * bc.methods.len());
    for r in nested {
        per_rep.extend(r?);
    }
    let summary = BenchReport::summarize(&per_rep, &bc.methods);
    Ok(BenchReport {
        source: source.describe(),
        model: bc.model.describe(),
        alpha: bc.conformal.alpha,
        repeats: bc.repeats,
        seed: bc.seed,
        noise_sd: match source {
            DataSource::Synthetic(s) => Some(s.noise_sd),
            DataSource::Csv(_) => None,
        },
        timing: bc.collect_timing,
        summary,
        per_rep,
    })
}

fn run_method(
    method: Method,
    regressor: &SymmetricRegressor,
    data: &Dataset,
    held_out: f64,
    bc: &BenchConfig,
    split_cfg: &SplitConfig,
) -> Result<(ConformalInterval, bool)> {
    let cfg = &bc.conformal;
    match method {
        Method::RootFull => {
            let itv = conformal_interval(regressor, data, cfg)?;
            let covered = itv.contains(held_out);
            Ok((itv, covered))
        }
        Method::Split => {
            let itv = split_interval(regressor, data, cfg, split_cfg)?;
            let covered = itv.contains(held_out);
            Ok((itv, covered))
        }
        Method::Interp => {
            let itv = interp_interval_auto(regressor, data, cfg, bc.interp_queries, split_cfg)?;
            let covered = itv.contains(held_out);
            Ok((itv, covered))
        }
        Method::Smooth => {
            let gamma = match bc.gamma {
                Some(g) => g,
                None => {
                    let observed = regressor.fit_observed(data)?;
                    let preds = observed.predict_rows(data.features());
                    let scores: Vec<f64> = (0..data.n())
                        .map(|i| (data.responses()[i] - preds[i]).abs())
                        .collect();
                    default_gamma(&scores)
                }
            };
            let smoothing = SmoothingConfig::new(gamma, Envelope::Sigmoid)?;
            let itv = smooth_conformal_interval(regressor, data, cfg, &smoothing)?;
            let covered = itv.contains(held_out);
            Ok((itv, covered))
        }
        Method::Oracle => {
            let itv = oracle_interval(regressor, data, held_out, cfg)?;
            let covered = itv.contains(held_out);
            Ok((itv, covered))
        }
        Method::RidgeExact => {
            let lambda = match regressor {
                SymmetricRegressor::Ridge { lambda } => *lambda,
                _ => {
                    return Err(Error::Unsupported(
                        "the exact homotopy set requires the ridge model".into(),
                    ))
                }
            };
            let set = exact_ridge_set(data, lambda, cfg.alpha)?;
            // Coverage judged on the exact union; the reported interval is
            // its hull.
            let covered = set.contains(held_out);
            Ok((set.to_interval(), covered))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Epsilon;

    fn quick_config(methods: Vec<Method>, repeats: usize) -> BenchConfig {
        BenchConfig {
            methods,
            model: ModelSpec::Ridge { lambda: None },
            conformal: ConformalConfig::new(0.1).unwrap(),
            gamma: None,
            interp_queries: 8,
            repeats,
            seed: 42,
            collect_timing: false,
            threads: Some(1),
        }
    }

    fn small_source() -> DataSource {
        DataSource::Synthetic(SyntheticSpec::new(60, 6, 4, 1.0, 5).unwrap())
    }

    #[test]
    fn report_is_deterministic_across_thread_counts() {
        let src = small_source();
        let mut bc = quick_config(vec![Method::RootFull, Method::Split, Method::Oracle], 6);
        let a = run_benchmark(&src, &bc).unwrap();
        bc.threads = Some(3);
        let b = run_benchmark(&src, &bc).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn fit_accounting_per_method() {
        let src = small_source();
        let bc = quick_config(
            vec![
                Method::Split,
                Method::Oracle,
                Method::Interp,
                Method::RootFull,
            ],
            5,
        );
        let report = run_benchmark(&src, &bc).unwrap();
        for r in &report.per_rep {
            assert!(r.error.is_none(), "{:?}", r.error);
            match r.method {
                Method::Split | Method::Oracle => assert_eq!(r.fits, 1),
                Method::Interp => assert_eq!(r.fits, bc.interp_queries + 2),
                Method::RootFull => assert!(r.fits <= bc.conformal.max_fits),
                _ => {}
            }
        }
    }

    #[test]
    fn oracle_zero_scores_give_zero_length() {
        // Noiseless fully-informative data: the oracle fit interpolates, the
        // residuals vanish, the interval collapses.
        let spec = SyntheticSpec::new(30, 5, 5, 0.0, 11).unwrap();
        let (data, held_out) = super::super::synth::generate(&spec).unwrap();
        let reg = SymmetricRegressor::ridge(1e-9).unwrap();
        let cfg = ConformalConfig::with(0.1, Epsilon::Absolute(1e-8), 100).unwrap();
        let itv = oracle_interval(&reg, &data, held_out, &cfg).unwrap();
        assert!(itv.length() < 1e-6, "length {}", itv.length());
        assert_eq!(itv.fits_used, 1);
        assert!(itv.contains(held_out));
    }

    #[test]
    fn ridge_exact_requires_ridge() {
        let src = small_source();
        let mut bc = quick_config(vec![Method::RidgeExact], 2);
        bc.model = ModelSpec::Knn { k: 5 };
        let report = run_benchmark(&src, &bc).unwrap();
        assert!(report.per_rep.iter().all(|r| r.error.is_some()));
        assert_eq!(report.summary[0].failures, 2);
    }

    #[test]
    fn method_failures_are_recorded_not_fatal() {
        let src = small_source();
        let mut bc = quick_config(vec![Method::RidgeExact, Method::Split], 3);
        bc.model = ModelSpec::Knn { k: 5 };
        let report = run_benchmark(&src, &bc).unwrap();
        let split_rows: Vec<_> = report
            .per_rep
            .iter()
            .filter(|r| r.method == Method::Split)
            .collect();
        assert!(split_rows.iter().all(|r| r.error.is_none()));
    }
}
