//! Dispatch of a validated job and assembly of the response.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};
use tesn::bench::fesn_mean_cov_orthant;
use tesn::esn::{esn_cdf, esn_derive, esn_pdf, EsnParams};
use tesn::folded::{fesn_mean_cov, fesn_moment, FoldMethod};
use tesn::mvn::mvn_prob;
use tesn::oracle::{
    mc_fesn_mean_cov, mc_fesn_moment, mc_tesn_mean_cov, mc_tesn_moment, mc_tesn_prob, McEstimate, McMeanCov,
};
use tesn::tesn::{tesn_mean_cov_direct, tesn_mean_cov_traced, tesn_moment, tesn_prob, TesnMethod};
use tesn::tn::{
    tn_first_two_corrected_traced, tn_first_two_mgf, tn_first_two_recurrence, FirstTwoMoments, TnRecurrence,
};
use tesn::{Probability, Settings, TruncationBox};

use crate::request::{Family, Job, Method, Task, SCHEMA_VERSION};

#[derive(Debug, Serialize)]
pub struct Response {
    pub schema_version: u32,
    pub task: &'static str,
    pub family: &'static str,
    pub value: Value,
    pub abs_error_estimate: Option<f64>,
    pub method_used: &'static str,
    pub corrections_applied: Vec<String>,
    pub timing_ms: Option<f64>,
    pub oracle: Option<Value>,
}

fn task_name(t: Task) -> &'static str {
    match t {
        Task::Pdf => "pdf",
        Task::Cdf => "cdf",
        Task::Prob => "prob",
        Task::Moment => "moment",
        Task::MeanCov => "mean-cov",
        Task::FoldedMoment => "folded-moment",
        Task::FoldedMeanCov => "folded-mean-cov",
        Task::Benchmark => "benchmark",
    }
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Normal => "normal",
        Family::Sn => "sn",
        Family::Esn => "esn",
    }
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": rows })
}

fn vector(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn mean_cov_value(m: &FirstTwoMoments) -> Value {
    json!({ "mean": vector(&m.mean), "cov": matrix(m.cov.as_matrix()) })
}

fn mc_value(e: &McEstimate) -> Value {
    json!({ "value": e.value, "std_error": e.std_error, "n_effective": e.n_effective, "seed": e.seed })
}

fn mc_mean_cov_value(e: &McMeanCov) -> Value {
    json!({
        "mean": vector(&e.mean),
        "mean_std_error": vector(&e.mean_se),
        "cov": matrix(&e.cov),
        "cov_std_error": matrix(&e.cov_se),
        "n_effective": e.n_effective,
        "seed": e.seed,
    })
}

fn limit_applies(p: &EsnParams, settings: &Settings) -> tesn::Result<bool> {
    Ok(!p.is_normal() && esn_derive(p)?.tau_tilde <= settings.limit_tau_tilde)
}

struct Outcome {
    value: Value,
    abs_error: Option<f64>,
    method: &'static str,
    corrections: Vec<String>,
}

impl Outcome {
    fn new(value: Value, method: &'static str) -> Self {
        Outcome { value, abs_error: None, method, corrections: Vec::new() }
    }

    fn prob(p: Probability, method: &'static str) -> Self {
        Outcome { abs_error: Some(p.abs_error), ..Outcome::new(json!(p.value), method) }
    }
}

fn lower_orthant(x: &[f64]) -> tesn::Result<TruncationBox> {
    TruncationBox::new(vec![f64::NEG_INFINITY; x.len()], x.to_vec())
}

fn compute(job: &Job) -> tesn::Result<Outcome> {
    let (p, s) = (&job.params, &job.settings);
    let normal = p.is_normal();
    let mut out = match job.task {
        Task::Pdf => {
            let x = DVector::from_vec(job.x.clone().expect("validated"));
            Outcome::new(json!(esn_pdf(&x, p)?), "closed-form")
        }
        Task::Cdf => {
            let x = job.x.as_deref().expect("validated");
            if normal {
                Outcome::prob(mvn_prob(&lower_orthant(x)?, &p.normal_part(), &s.qmc)?, "rectangle")
            } else {
                Outcome::prob(esn_cdf(&DVector::from_column_slice(x), p, s)?, "normal-reduction")
            }
        }
        Task::Prob => {
            let bx = job.bx.as_ref().expect("validated");
            if normal {
                Outcome::prob(mvn_prob(bx, &p.normal_part(), &s.qmc)?, "rectangle")
            } else {
                Outcome::prob(tesn_prob(bx, p, s)?, "normal-reduction")
            }
        }
        Task::Moment => {
            let bx = job.bx.as_ref().expect("validated");
            let k = job.kappa.as_ref().expect("validated");
            if normal {
                let v = TnRecurrence::new(bx, &p.normal_part(), s)?.moment(k)?;
                Outcome::new(json!(v), "recurrence")
            } else {
                let (m, name) = match job.method {
                    Method::Recurrence => (TesnMethod::Recurrence, "recurrence"),
                    Method::NormalReduction => (TesnMethod::NormalReduction, "normal-reduction"),
                    _ if p.dim() == 1 => (TesnMethod::Recurrence, "recurrence"),
                    _ => (TesnMethod::NormalReduction, "normal-reduction"),
                };
                Outcome::new(json!(tesn_moment(bx, p, k, m, s)?), name)
            }
        }
        Task::MeanCov => {
            let bx = job.bx.as_ref().expect("validated");
            match (normal, job.method) {
                (true, Method::Mgf) => Outcome::new(mean_cov_value(&tn_first_two_mgf(bx, &p.normal_part(), s)?), "mgf"),
                (true, Method::Recurrence) => {
                    Outcome::new(mean_cov_value(&tn_first_two_recurrence(bx, &p.normal_part(), s)?), "recurrence")
                }
                (true, _) => {
                    let (m, tr) = tn_first_two_corrected_traced(bx, &p.normal_part(), s)?;
                    let mut o = Outcome::new(mean_cov_value(&m), "mgf");
                    o.corrections = tr.iter().map(ToString::to_string).collect();
                    o
                }
                (false, Method::Recurrence) => {
                    let mut o = Outcome::new(mean_cov_value(&tesn_mean_cov_direct(bx, p, s)?), "recurrence");
                    if limit_applies(p, s)? {
                        o.corrections.push("limit-tau".into());
                    }
                    o
                }
                (false, _) => {
                    let (m, tr) = tesn_mean_cov_traced(bx, p, s)?;
                    let mut o = Outcome::new(mean_cov_value(&m), "normal-reduction");
                    o.corrections = tr.iter().map(ToString::to_string).collect();
                    o
                }
            }
        }
        Task::FoldedMoment => {
            let k = job.kappa.as_ref().expect("validated");
            let (m, name) = match job.method {
                Method::OrthantSum => (FoldMethod::OrthantSum, "orthant-sum"),
                _ => (FoldMethod::NormalReduction, "normal-reduction"),
            };
            Outcome::new(json!(fesn_moment(p, k, m, s)?), name)
        }
        Task::FoldedMeanCov => match job.method {
            Method::OrthantSum => Outcome::new(mean_cov_value(&fesn_mean_cov_orthant(p, s)?), "orthant-sum"),
            _ => Outcome::new(mean_cov_value(&fesn_mean_cov(p, s)?), "explicit"),
        },
        Task::Benchmark => unreachable!("benchmarks are dispatched separately"),
    };
    let routed = matches!(job.task, Task::Prob | Task::Moment | Task::FoldedMoment | Task::FoldedMeanCov);
    if routed && limit_applies(p, s)? {
        out.corrections.insert(0, "limit-tau".into());
    }
    Ok(out)
}

fn oracle(job: &Job) -> Value {
    let (p, n, seed) = (&job.params, job.oracle_draws, job.seed);
    let est = match job.task {
        Task::Cdf => lower_orthant(job.x.as_deref().expect("validated"))
            .and_then(|b| mc_tesn_prob(&b, p, n, seed))
            .map(|e| mc_value(&e)),
        Task::Prob => mc_tesn_prob(job.bx.as_ref().expect("validated"), p, n, seed).map(|e| mc_value(&e)),
        Task::Moment => {
            mc_tesn_moment(job.bx.as_ref().expect("validated"), p, job.kappa.as_ref().expect("validated"), n, seed)
                .map(|e| mc_value(&e))
        }
        Task::MeanCov => mc_tesn_mean_cov(job.bx.as_ref().expect("validated"), p, n, seed).map(|e| mc_mean_cov_value(&e)),
        Task::FoldedMoment => mc_fesn_moment(p, job.kappa.as_ref().expect("validated"), n, seed).map(|e| mc_value(&e)),
        Task::FoldedMeanCov => mc_fesn_mean_cov(p, n, seed).map(|e| mc_mean_cov_value(&e)),
        Task::Pdf | Task::Benchmark => unreachable!("rejected during validation"),
    };
    est.unwrap_or_else(|e| json!({ "error": e.to_string() }))
}

/// Runs the job; `timing` fills `timing_ms`.
pub fn run(job: &Job, timing: bool) -> tesn::Result<Response> {
    let t = Instant::now();
    let out = compute(job)?;
    let elapsed = t.elapsed().as_secs_f64() * 1e3;
    Ok(Response {
        schema_version: SCHEMA_VERSION,
        task: task_name(job.task),
        family: family_name(job.family),
        value: out.value,
        abs_error_estimate: out.abs_error,
        method_used: out.method,
        corrections_applied: out.corrections,
        timing_ms: timing.then_some(elapsed),
        oracle: job.verify.then(|| oracle(job)),
    })
}

