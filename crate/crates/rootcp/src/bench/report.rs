//! Benchmark records and their serializations: JSON for machines, an aligned
//! table for humans, CSV for the per-repetition dump.

use serde::Serialize;

use crate::interval::Method;

#[derive(Debug, Clone, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub covered: bool,
    /// Interval length; `+inf` (serialized as null) when unbounded.
    pub length: f64,
    pub wall_time_s: f64,
    pub fits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub repetitions: usize,
    pub failures: usize,
    pub mean_coverage: f64,
    pub mean_length: f64,
    pub mean_time_s: f64,
    pub mean_fits: f64,
    /// Mean time divided by the oracle method's mean time, when the oracle
    /// baseline is part of the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_vs_oracle: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub source: String,
    pub model: String,
    pub alpha: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Noise level of the synthetic generator, recorded because it is part
    /// of the protocol, not derivable from the outputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    pub timing: bool,
    pub summary: Vec<MethodSummary>,
    pub per_rep: Vec<RepRecord>,
}

impl BenchReport {
    /// Build the per-method summaries from the raw rows, in `methods` order.
    pub fn summarize(rows: &[RepRecord], methods: &[Method]) -> Vec<MethodSummary> {
        let mut out = Vec::with_capacity(methods.len());
        let oracle_mean_time = mean_time_of(rows, Method::Oracle);
        for &m in methods {
            let ok: Vec<&RepRecord> = rows
                .iter()
                .filter(|r| r.method == m && r.error.is_none())
                .collect();
            let failures = rows
                .iter()
                .filter(|r| r.method == m && r.error.is_some())
                .count();
            let k = ok.len().max(1) as f64;
            let mean_time = ok.iter().map(|r| r.wall_time_s).sum::<f64>() / k;
            out.push(MethodSummary {
                method: m,
                repetitions: ok.len(),
                failures,
                mean_coverage: ok.iter().filter(|r| r.covered).count() as f64 / k,
                mean_length: ok.iter().map(|r| r.length).sum::<f64>() / k,
                mean_time_s: mean_time,
                mean_fits: ok.iter().map(|r| r.fits as f64).sum::<f64>() / k,
                time_vs_oracle: match (m, oracle_mean_time) {
                    (Method::Oracle, Some(_)) => Some(1.0),
                    (_, Some(t)) if t > 0.0 => Some(mean_time / t),
                    _ => None,
                },
            });
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "source: {}   model: {}   alpha: {}   repeats: {}   seed: {}\n\n",
            self.source, self.model, self.alpha, self.repeats, self.seed
        ));
        s.push_str(&format!(
            "{:<12} {:>9} {:>9} {:>12} {:>12} {:>10} {:>12}\n",
            "method", "reps", "failures", "coverage", "length", "fits", "time [s]"
        ));
        for m in &self.summary {
            s.push_str(&format!(
                "{:<12} {:>9} {:>9} {:>12.4} {:>12} {:>10.1} {:>12.5}\n",
                m.method.to_string(),
                m.repetitions,
                m.failures,
                m.mean_coverage,
                fmt_len(m.mean_length),
                m.mean_fits,
                m.mean_time_s,
            ));
        }
        if self.summary.iter().any(|m| m.time_vs_oracle.is_some()) {
            s.push('\n');
            s.push_str(&format!("{:<12} {:>16}\n", "method", "time / oracle"));
            for m in &self.summary {
                if let Some(r) = m.time_vs_oracle {
                    s.push_str(&format!("{:<12} {:>16.2}\n", m.method.to_string(), r));
                }
            }
        }
        s
    }

    /// Per-repetition rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rep,method,covered,length,wall_time_s,fits,error\n");
        for r in &self.per_rep {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.rep,
                r.method,
                r.covered,
                fmt_len(r.length),
                r.wall_time_s,
                r.fits,
                r.error.as_deref().unwrap_or(""),
            ));
        }
        s
    }
}

fn mean_time_of(rows: &[RepRecord], method: Method) -> Option<f64> {
    let ok: Vec<&RepRecord> = rows
        .iter()
        .filter(|r| r.method == method && r.error.is_none())
        .collect();
    if ok.is_empty() {
        None
    } else {
        Some(ok.iter().map(|r| r.wall_time_s).sum::<f64>() / ok.len() as f64)
    }
}

fn fmt_len(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        "inf".to_string()
    }
}
