//! Request schema and its validation into library types.

use serde::Deserialize;
use tesn::esn::EsnParams;
use tesn::tn::MultiIndex;
use tesn::{NormalParams, QmcConfig, Settings, SymMatrix, TruncationBox};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Pdf,
    Cdf,
    Prob,
    Moment,
    MeanCov,
    FoldedMoment,
    FoldedMeanCov,
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Normal,
    Sn,
    #[default]
    Esn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Auto,
    Recurrence,
    NormalReduction,
    Mgf,
    OrthantSum,
    Explicit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::Recurrence => "recurrence",
            Method::NormalReduction => "normal-reduction",
            Method::Mgf => "mgf",
            Method::OrthantSum => "orthant-sum",
            Method::Explicit => "explicit",
        }
    }
}

/// A number, or one of the strings `"-inf"`, `"inf"` or a decimal literal.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ExtReal {
    Num(f64),
    Text(String),
}

impl ExtReal {
    fn value(&self) -> Result<f64, String> {
        match self {
            ExtReal::Num(x) => Ok(*x),
            ExtReal::Text(s) => match s.trim() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" | "+inf" => Ok(f64::INFINITY),
                t => t.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("not a number: {s:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BoxSpec {
    Pair([Vec<ExtReal>; 2]),
    Named { lower: Vec<ExtReal>, upper: Vec<ExtReal> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmcSpec {
    pub sample_count: Option<usize>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub target_abs_error: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub schema_version: Option<u32>,
    pub task: Task,
    #[serde(default)]
    pub family: Family,
    pub params: Option<ParamSpec>,
    #[serde(rename = "box")]
    pub bx: Option<BoxSpec>,
    pub x: Option<Vec<f64>>,
    pub kappa: Option<Vec<u32>>,
    #[serde(default)]
    pub method: Method,
    pub qmc: Option<QmcSpec>,
    #[serde(default)]
    pub verify: bool,
    /// Monte Carlo draws for `verify`.
    pub oracle_draws: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub repetitions: Option<usize>,
}

pub const DEFAULT_ORACLE_DRAWS: usize = 1_000_000;
pub const DEFAULT_REPETITIONS: usize = 3;

/// A request after validation; nothing numeric has run yet.
#[derive(Debug, Clone)]
pub struct Job {
    pub task: Task,
    pub family: Family,
    pub params: EsnParams,
    pub bx: Option<TruncationBox>,
    pub x: Option<Vec<f64>>,
    pub kappa: Option<MultiIndex>,
    pub method: Method,
    pub settings: Settings,
    pub verify: bool,
    pub oracle_draws: usize,
    pub seed: u64,
}

/// Benchmark requests carry no distribution.
#[derive(Debug, Clone)]
pub struct BenchJob {
    pub dims: Vec<usize>,
    pub repetitions: usize,
    pub settings: Settings,
}

#[derive(Debug, Clone)]
pub enum Validated {
    Job(Box<Job>),
    Bench(BenchJob),
}

fn qmc_config(spec: Option<&QmcSpec>, seed_override: Option<u64>) -> Result<QmcConfig, String> {
    let d = QmcConfig::default();
    let q = spec.cloned().unwrap_or_default();
    let cfg = QmcConfig {
        sample_count: q.sample_count.unwrap_or(d.sample_count),
        replicates: q.replicates.unwrap_or(d.replicates),
        seed: seed_override.or(q.seed).unwrap_or(d.seed),
        target_abs_error: q.target_abs_error.unwrap_or(d.target_abs_error),
    };
    if cfg.sample_count == 0 || cfg.replicates < 2 {
        return Err("qmc.sample_count must be positive and qmc.replicates at least 2".into());
    }
    if !(cfg.target_abs_error > 0.0) {
        return Err("qmc.target_abs_error must be positive".into());
    }
    Ok(cfg)
}

fn build_params(family: Family, spec: &ParamSpec) -> Result<EsnParams, String> {
    let p = spec.mu.len();
    if p == 0 {
        return Err("params.mu is empty".into());
    }
    let sigma = SymMatrix::from_rows(&spec.sigma).map_err(|e| format!("params.sigma: {e}"))?;
    let mu = nalgebra::DVector::from_vec(spec.mu.clone());
    match family {
        Family::Normal => {
            if spec.lambda.is_some() || spec.tau.is_some() {
                return Err("family \"normal\" takes no lambda or tau".into());
            }
            let n = NormalParams::new(mu, sigma).map_err(|e| e.to_string())?;
            Ok(EsnParams::normal(n))
        }
        Family::Sn | Family::Esn => {
            let lambda = spec.lambda.clone().unwrap_or_else(|| vec![0.0; p]);
            let tau = spec.tau.unwrap_or(0.0);
            if family == Family::Sn && tau != 0.0 {
                return Err("family \"sn\" has tau = 0".into());
            }
            EsnParams::new(mu, sigma, nalgebra::DVector::from_vec(lambda), tau).map_err(|e| e.to_string())
        }
    }
}

fn build_box(spec: &BoxSpec, p: usize) -> Result<TruncationBox, String> {
    let (lo, hi) = match spec {
        BoxSpec::Pair([lo, hi]) => (lo, hi),
        BoxSpec::Named { lower, upper } => (lower, upper),
    };
    if lo.len() != p || hi.len() != p {
        return Err(format!("box needs {p} lower and {p} upper limits"));
    }
    let conv = |v: &[ExtReal]| v.iter().map(ExtReal::value).collect::<Result<Vec<f64>, String>>();
    TruncationBox::new(conv(lo)?, conv(hi)?).map_err(|e| e.to_string())
}

fn forbid(present: bool, field: &str, task: Task) -> Result<(), String> {
    if present {
        return Err(format!("field \"{field}\" does not apply to task {task:?}"));
    }
    Ok(())
}

fn allowed(method: Method, ok: &[Method], task: Task) -> Result<(), String> {
    if !ok.contains(&method) {
        let names: Vec<&str> = ok.iter().map(|m| m.name()).collect();
        return Err(format!("method \"{}\" is not available for task {task:?} (use {})", method.name(), names.join(", ")));
    }
    Ok(())
}

/// Checks the request against the schema. `seed` (from `--seed`) overrides
/// both the QMC seed and the Monte Carlo seed.
pub fn validate(req: &Request, seed: Option<u64>, verify: bool) -> Result<Validated, String> {
    if let Some(v) = req.schema_version {
        if v != SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {v}; this build reads {SCHEMA_VERSION}"));
        }
    }
    let qmc = qmc_config(req.qmc.as_ref(), seed)?;
    let settings = Settings::default().with_qmc(qmc);
    let task = req.task;

    if task == Task::Benchmark {
        forbid(req.params.is_some(), "params", task)?;
        forbid(req.bx.is_some(), "box", task)?;
        forbid(req.verify || verify, "verify", task)?;
        let dims = req.dims.clone().ok_or("benchmark needs \"dims\"")?;
        if dims.is_empty() || dims.iter().any(|&p| p == 0 || p > tesn::bench::MAX_BENCH_DIM) {
            return Err(format!("benchmark dims must lie in 1..={}", tesn::bench::MAX_BENCH_DIM));
        }
        let repetitions = req.repetitions.unwrap_or(DEFAULT_REPETITIONS).max(1);
        return Ok(Validated::Bench(BenchJob { dims, repetitions, settings }));
    }
    forbid(req.dims.is_some(), "dims", task)?;
    forbid(req.repetitions.is_some(), "repetitions", task)?;

    let params = build_params(req.family, req.params.as_ref().ok_or("missing \"params\"")?)?;
    tesn::esn::esn_derive(&params).map_err(|e| format!("params: {e}"))?;
    let p = params.dim();

    let needs_box = matches!(task, Task::Prob | Task::Moment | Task::MeanCov);
    let bx = match (&req.bx, needs_box) {
        (Some(b), true) => Some(build_box(b, p)?),
        (None, true) => return Err(format!("task {task:?} needs \"box\"")),
        (Some(_), false) => return Err(format!("field \"box\" does not apply to task {task:?}")),
        (None, false) => None,
    };

    let needs_x = matches!(task, Task::Pdf | Task::Cdf);
    match (&req.x, needs_x) {
        (Some(x), true) if x.len() != p => return Err(format!("\"x\" needs {p} entries")),
        (Some(x), true) if x.iter().any(|v| !v.is_finite()) => return Err("\"x\" must be finite".into()),
        (None, true) => return Err(format!("task {task:?} needs \"x\"")),
        (Some(_), false) => return Err(format!("field \"x\" does not apply to task {task:?}")),
        _ => {}
    }

    let needs_kappa = matches!(task, Task::Moment | Task::FoldedMoment);
    let kappa = match (&req.kappa, needs_kappa) {
        (Some(k), true) if k.len() != p => return Err(format!("\"kappa\" needs {p} entries")),
        (Some(k), true) => Some(MultiIndex::new(k.clone())),
        (None, true) => return Err(format!("task {task:?} needs \"kappa\"")),
        (Some(_), false) => return Err(format!("field \"kappa\" does not apply to task {task:?}")),
        (None, false) => None,
    };

    use Method::*;
    match task {
        Task::Pdf | Task::Cdf | Task::Prob => allowed(req.method, &[Auto], task)?,
        Task::Moment => allowed(req.method, &[Auto, Recurrence, NormalReduction], task)?,
        Task::MeanCov => allowed(req.method, &[Auto, Recurrence, NormalReduction, Mgf], task)?,
        Task::FoldedMoment => allowed(req.method, &[Auto, NormalReduction, OrthantSum], task)?,
        Task::FoldedMeanCov => allowed(req.method, &[Auto, Explicit, OrthantSum], task)?,
        Task::Benchmark => unreachable!(),
    }

    let verify = req.verify || verify;
    if verify && task == Task::Pdf {
        return Err("verify is not available for task Pdf".into());
    }
    let oracle_draws = req.oracle_draws.unwrap_or(DEFAULT_ORACLE_DRAWS);
    if verify && oracle_draws < 2 {
        return Err("oracle_draws must be at least 2".into());
    }
    Ok(Validated::Job(Box::new(Job {
        task,
        family: req.family,
        params,
        bx,
        x: req.x.clone(),
        kappa,
        method: req.method,
        settings,
        verify,
        oracle_draws,
        seed: qmc.seed,
    })))
}
