//! `tesn`: probabilities and moments of truncated and folded normal and
//! extended skew-normal laws from a JSON request.
//!
//! Exit status: 0 on success, 1 for an invalid request, 2 when the numerics fail.

mod request;
mod run;

use std::io::Read;
use std::process::ExitCode;

use clap::Parser;
use tesn::bench::{benchmark, to_csv};
use tesn::Settings;

use request::{validate, BenchJob, Request, Validated, DEFAULT_REPETITIONS};

#[derive(Debug, Parser)]
#[command(name = "tesn", version, about = "Truncated and folded (extended skew-)normal moments from JSON requests")]
struct Args {
    /// Request file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Seed for the QMC rules and the Monte Carlo check; overrides the request.
    #[arg(long)]
    seed: Option<u64>,
    /// Attach a Monte Carlo estimate to the response.
    #[arg(long)]
    verify: bool,
    /// Run the mean/covariance benchmark for these dimensions and print CSV.
    #[arg(long, value_delimiter = ',')]
    benchmark: Option<Vec<usize>>,
    /// Timed repetitions per benchmark row.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    repetitions: usize,
    /// Report wall time in `timing_ms`; without it the field is null and the
    /// output is reproducible byte for byte.
    #[arg(long)]
    timing: bool,
}

enum Failure {
    Invalid(String),
    Numeric(String),
}

fn read_input(path: &str) -> Result<String, Failure> {
    let mut s = String::new();
    let r = if path == "-" {
        std::io::stdin().read_to_string(&mut s).map(|_| ())
    } else {
        std::fs::read_to_string(path).map(|t| s = t)
    };
    r.map_err(|e| Failure::Invalid(format!("cannot read {path}: {e}")))?;
    Ok(s)
}

fn bench(job: &BenchJob) -> Result<String, Failure> {
    let rows = benchmark(&job.dims, job.repetitions, &job.settings).map_err(|e| Failure::Numeric(e.to_string()))?;
    Ok(to_csv(&rows))
}

fn execute(args: &Args) -> Result<String, Failure> {
    if let Some(dims) = &args.benchmark {
        if dims.is_empty() || dims.iter().any(|&p| p == 0 || p > tesn::bench::MAX_BENCH_DIM) {
            return Err(Failure::Invalid(format!("--benchmark dims must lie in 1..={}", tesn::bench::MAX_BENCH_DIM)));
        }
        let settings = match args.seed {
            Some(s) => Settings::default().with_seed(s),
            None => Settings::default(),
        };
        return bench(&BenchJob { dims: dims.clone(), repetitions: args.repetitions.max(1), settings });
    }
    let text = read_input(&args.input)?;
    let req: Request = serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("invalid request: {e}")))?;
    match validate(&req, args.seed, args.verify).map_err(Failure::Invalid)? {
        Validated::Bench(job) => bench(&job),
        Validated::Job(job) => {
            let resp = run::run(&job, args.timing).map_err(|e| Failure::Numeric(e.to_string()))?;
            let mut s = serde_json::to_string_pretty(&resp).expect("response serializes");
            s.push('\n');
            Ok(s)
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match execute(&args) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
