//! Data generation, ingestion, and the repetition protocol used to compare
//! the conformal constructions on equal footing.

mod csvio;
mod preprocess;
mod report;
mod runner;
mod synth;

pub use csvio::{load_csv, parse_csv, LoadedCsv};
pub use preprocess::{standardize, Preprocessor};
pub use report::{BenchReport, MethodSummary, RepRecord};
pub use runner::{oracle_interval, run_benchmark, BenchConfig, DataSource, ModelSpec};
pub use synth::{generate, generate_pool, Pool, SyntheticSpec};
