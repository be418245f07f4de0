//! Conformal prediction intervals for regression, computed by root-finding.
//!
//! Full conformal prediction refits the model on the augmented dataset
//! `D_n + (x_test, z)` for every candidate response `z` and keeps the
//! candidates whose prediction error ranks low — a distribution-free
//! confidence set, but naively an infinite amount of work. When the set is
//! an interval, its endpoints are roots of `typicalness - alpha`, and a
//! bisection reaches them with about `2 log2(range / eps)` model fits.
//!
//! What's here:
//! * the rank/typicalness kernel and empirical quantiles ([`score`]),
//! * symmetric ridge / lasso / kNN estimators ([`regressors`]),
//! * the bracketed bisection with its initialization cascade ([`root`]),
//! * split conformal prediction ([`split`]),
//! * conformal sets from a piecewise-linear interpolation of the fit map,
//!   with exact crossing enumeration ([`interp`]),
//! * smoothed typicalness via sigmoid or ramp surrogates, including the
//!   envelope pair that sandwiches the exact set ([`smooth`]),
//! * the exact ridge set by breakpoint enumeration, used as ground truth
//!   ([`oracle`]),
//! * a benchmark harness with synthetic/CSV data and a CLI ([`bench`]).
//!
//! ```
//! use rootcp::bench::{generate, SyntheticSpec};
//! use rootcp::{conformal_interval, ConformalConfig, SymmetricRegressor};
//!
//! let spec = SyntheticSpec::new(80, 5, 3, 1.0, 7).unwrap();
//! let (data, held_out) = generate(&spec).unwrap();
//! let regressor = SymmetricRegressor::ridge(1.0).unwrap();
//! let cfg = ConformalConfig::new(0.1).unwrap();
//! let interval = conformal_interval(&regressor, &data, &cfg).unwrap();
//! assert!(interval.lower < interval.upper);
//! assert!(interval.fits_used <= cfg.max_fits);
//! # let _ = held_out;
//! ```

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod interp;
pub mod interval;
pub mod oracle;
pub mod profile;
pub mod regressors;
pub mod root;
pub mod score;
pub mod smooth;
pub mod split;

pub use config::{ConformalConfig, Epsilon};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use interp::{interp_conformal_interval, interp_interval_auto, InterpolatedFitMap};
pub use interval::{ConformalInterval, Method};
pub use oracle::{exact_ridge_set, ExactRidgeSet};
pub use profile::{Bracket, ProfileKind, TypicalnessProfile};
pub use regressors::{affine_coefficients, AffineFitCoefficients, FittedModel, SymmetricRegressor};
pub use root::{
    bisect_edge, check_interval_condition, conformal_interval, conformal_interval_detailed,
    initialize, IntervalCondition, RootDiagnostics,
};
pub use score::{
    empirical_quantile, rank_of_last, typicalness, typicalness_with_slack, ScoreFunction,
    ScoreVector,
};
pub use smooth::{
    delta, phi, smooth_conformal_interval, smooth_rank, smooth_typicalness, Envelope,
    SmoothingConfig,
};
pub use split::{split_interval, SplitConfig};
