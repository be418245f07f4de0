//! Numeric CSV ingestion: rectangular, last column is the response, header
//! auto-detected. Errors name the offending line.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::preprocess::{standardize, Preprocessor};
use super::synth::Pool;

/// A parsed, standardized CSV: the last row of the file becomes the held-out
/// pair. `transform` maps interval endpoints back to original response units.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub held_out: f64,
    pub transform: Preprocessor,
    /// The standardized pool, for protocols that re-permute rows.
    pub pool: Pool,
}

/// Parse without any preprocessing.
pub fn parse_csv(path: &Path) -> Result<Pool> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && width.is_none() => {
                // Non-numeric first row: header.
                width = Some(cells.len());
                continue;
            }
            Err(_) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-numeric cell in '{line}'"),
                });
            }
        };
        if let Some(w) = width {
            if values.len() != w {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {w} columns, found {}", values.len()),
                });
            }
        } else {
            width = Some(values.len());
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite value in column {}", bad + 1),
            });
        }
        rows.push(values);
    }

    let width = width.unwrap_or(0);
    if width < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "need at least one feature column plus the response".into(),
        });
    }
    if rows.len() < 3 {
        return Err(Error::Parse {
            line: rows.len(),
            message: format!("need at least 3 data rows, found {}", rows.len()),
        });
    }
    let p = width - 1;
    let features = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let responses = DVector::from_fn(rows.len(), |i, _| rows[i][p]);
    Ok(Pool {
        features,
        responses,
    })
}

/// Parse, standardize features, center the response, and split off the last
/// row as the held-out pair.
pub fn load_csv(path: &Path) -> Result<LoadedCsv> {
    let raw = parse_csv(path)?;
    let (pool, transform) = standardize(&raw);
    let (dataset, held_out) = pool.identity_split()?;
    Ok(LoadedCsv {
        dataset,
        held_out,
        transform,
        pool,
    })
}
