//! `cp` — compute and benchmark conformal prediction intervals.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rootcp::bench::{run_benchmark, BenchConfig, DataSource, ModelSpec, SyntheticSpec};
use rootcp::{ConformalConfig, Epsilon, Error, Method};

#[derive(Parser)]
#[command(
    name = "cp",
    version,
    about = "Conformal prediction intervals for regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the repetition benchmark and write a report.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Methods to evaluate (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "full")]
    method: Vec<MethodArg>,

    /// Regression model refit for every candidate.
    #[arg(long, value_enum, default_value_t = ModelArg::Ridge)]
    model: ModelArg,

    /// Miscoverage level.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,

    /// Absolute root tolerance in response units
    /// (default: 1e-4 of the response range).
    #[arg(long)]
    eps: Option<f64>,

    /// Smoothing strength for the smooth method
    /// (default: scaled from the observed residual spread).
    #[arg(long)]
    gamma: Option<f64>,

    /// Query fits for the interpolated method.
    #[arg(long, default_value_t = 8)]
    d: usize,

    /// Benchmark repetitions (hold-out re-randomized each time).
    #[arg(long, default_value_t = 100)]
    repeats: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Synthetic data as n,p,informative,noise_sd.
    #[arg(long, conflicts_with = "data", value_name = "N,P,INF,NOISE")]
    synthetic: Option<String>,

    /// Numeric CSV (last column is the response; header auto-detected).
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,

    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,

    /// Penalty weight; defaults are data-driven (ridge: p / ||beta_ls||^2,
    /// lasso: lambda_max / 10).
    #[arg(long)]
    lambda: Option<f64>,

    /// Neighbor count for the knn model.
    #[arg(long, default_value_t = 5)]
    knn_k: usize,

    /// Relative duality-gap tolerance for the lasso solver.
    #[arg(long, default_value_t = 1e-8)]
    lasso_tol: f64,

    /// Model-fit budget per interval.
    #[arg(long, default_value_t = 1000)]
    max_fits: usize,

    /// Record wall times; turn off for byte-reproducible reports.
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    timing: OnOff,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Full,
    Split,
    Interp,
    Smooth,
    Oracle,
    #[value(name = "ridge-exact")]
    RidgeExact,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Full => Method::RootFull,
            MethodArg::Split => Method::Split,
            MethodArg::Interp => Method::Interp,
            MethodArg::Smooth => Method::Smooth,
            MethodArg::Oracle => Method::Oracle,
            MethodArg::RidgeExact => Method::RidgeExact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ridge,
    Lasso,
    Knn,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Table,
    Csv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(code) => code,
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                code
            }
        },
    }
}

type Failure = (ExitCode, String);

fn config_error(msg: impl Into<String>) -> Failure {
    (ExitCode::from(2), msg.into())
}

fn run(args: RunArgs) -> Result<ExitCode, Failure> {
    let source = match (&args.synthetic, &args.data) {
        (Some(spec), None) => DataSource::Synthetic(parse_synthetic(spec, args.seed)?),
        (None, Some(path)) => DataSource::Csv(path.clone()),
        (None, None) => {
            return Err(config_error("one of --synthetic or --data is required"));
        }
        (Some(_), Some(_)) => unreachable!("clap marks the options as conflicting"),
    };

    let epsilon = match args.eps {
        Some(e) => Epsilon::Absolute(e),
        None => Epsilon::ResponseScaled(1e-4),
    };
    let conformal = ConformalConfig::with(args.alpha, epsilon, args.max_fits)
        .map_err(|e| config_error(e.to_string()))?;

    let model = match args.model {
        ModelArg::Ridge => ModelSpec::Ridge {
            lambda: args.lambda,
        },
        ModelArg::Lasso => ModelSpec::Lasso {
            lambda: args.lambda,
            tol: args.lasso_tol,
            max_iter: 10_000,
        },
        ModelArg::Knn => ModelSpec::Knn { k: args.knn_k },
    };

    let threads = match std::env::var("CP_THREADS") {
        Ok(v) => Some(v.parse::<usize>().ok().filter(|&t| t >= 1).ok_or_else(|| {
            config_error(format!("CP_THREADS must be a positive integer, got '{v}'"))
        })?),
        Err(_) => None,
    };

    let bc = BenchConfig {
        methods: args.method.iter().map(|&m| Method::from(m)).collect(),
        model,
        conformal,
        gamma: args.gamma,
        interp_queries: args.d,
        repeats: args.repeats,
        seed: args.seed,
        collect_timing: args.timing == OnOff::On,
        threads,
    };

    let report = match run_benchmark(&source, &bc) {
        Ok(r) => r,
        Err(e @ Error::InvalidInput(_)) | Err(e @ Error::Parse { .. }) => {
            return Err(config_error(e.to_string()));
        }
        Err(e) => return Err((ExitCode::from(1), e.to_string())),
    };

    let rendered = match args.format {
        FormatArg::Json => report.to_json(),
        FormatArg::Table => report.to_table(),
        FormatArg::Csv => report.to_csv(),
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered.as_bytes()).map_err(|e| {
            (
                ExitCode::from(1),
                format!("writing {}: {e}", path.display()),
            )
        })?,
        None => print!("{rendered}"),
    }

    // Initialization failures are recorded per repetition; surface them in
    // the exit status as the contract requires.
    let init_failed = report.per_rep.iter().any(|r| {
        r.error
            .as_deref()
            .is_some_and(|e| e.contains("initialization failed"))
    });
    if init_failed {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_synthetic(spec: &str, seed: u64) -> Result<SyntheticSpec, Failure> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(config_error(format!(
            "--synthetic expects n,p,informative,noise_sd, got '{spec}'"
        )));
    }
    let n = parts[0]
        .parse::<usize>()
        .map_err(|_| config_error("bad n"))?;
    let p = parts[1]
        .parse::<usize>()
        .map_err(|_| config_error("bad p"))?;
    let informative = parts[2]
        .parse::<usize>()
        .map_err(|_| config_error("bad informative"))?;
    let noise = parts[3]
        .parse::<f64>()
        .map_err(|_| config_error("bad noise_sd"))?;
    SyntheticSpec::new(n, p, informative, noise, seed).map_err(|e| config_error(e.to_string()))
}
