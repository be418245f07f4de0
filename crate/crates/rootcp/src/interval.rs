use serde::Serialize;

/// Which construction produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RootFull,
    Split,
    Interp,
    Smooth,
    RidgeExact,
    Oracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::RootFull => "full",
            Method::Split => "split",
            Method::Interp => "interp",
            Method::Smooth => "smooth",
            Method::RidgeExact => "ridge-exact",
            Method::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A prediction interval with its endpoint tolerance, fit accounting and any
/// diagnostics collected along the way.
///
/// An unbounded interval carries infinite endpoints; an empty set is the NaN
/// sentinel, observable through [`ConformalInterval::is_empty`].
#[derive(Debug, Clone, Serialize)]
pub struct ConformalInterval {
    pub lower: f64,
    pub upper: f64,
    /// Endpoint tolerance: each reported endpoint is within `epsilon` of the
    /// corresponding level crossing (zero for exact constructions).
    pub epsilon: f64,
    /// Model fits consumed to produce the interval (diagnostic probing after
    /// the fact is not included).
    pub fits_used: usize,
    pub method: Method,
    pub warnings: Vec<String>,
}

impl ConformalInterval {
    pub fn new(lower: f64, upper: f64, epsilon: f64, fits_used: usize, method: Method) -> Self {
        Self {
            lower,
            upper,
            epsilon,
            fits_used,
            method,
            warnings: Vec::new(),
        }
    }

    /// The empty-set sentinel.
    pub fn empty(epsilon: f64, fits_used: usize, method: Method) -> Self {
        Self {
            lower: f64::NAN,
            upper: f64::NAN,
            epsilon,
            fits_used,
            method,
            warnings: vec!["empty conformal set".to_string()],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_nan()
    }

    /// Endpoint difference; 0 for the empty set, `+inf` when unbounded.
    pub fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.upper - self.lower
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        !self.is_empty() && self.lower <= y && y <= self.upper
    }

    /// Shift both endpoints (used to undo response centering).
    pub fn shifted(mut self, offset: f64) -> Self {
        self.lower += offset;
        self.upper += offset;
        self
    }
}
