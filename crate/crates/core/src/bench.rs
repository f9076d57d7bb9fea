//! Integral counts and wall times of the mean/covariance engines.
//!
//! Counts are the number of rectangle probabilities evaluated
//! ([`integral_count`]), so they do not depend on the QMC settings.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::esn::EsnParams;
use crate::folded::{fesn_mean_cov, fesn_moments, FoldMethod};
use crate::linalg::SymMatrix;
use crate::mvn::{integral_count, reset_integral_count, TruncationBox};
use crate::settings::Settings;
use crate::tesn::{tesn_mean_cov, tesn_mean_cov_direct};
use crate::tn::{FirstTwoMoments, MultiIndex};

pub const MAX_BENCH_DIM: usize = 10;
pub const CSV_HEADER: &str = "p,method,integral_count,median_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    /// Order-one and order-two recurrence identities on the ESN law.
    Recurrence,
    /// `(p+1)`-dimensional truncated normal through its MGF.
    NormalReduction,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 2] = [BenchMethod::Recurrence, BenchMethod::NormalReduction];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Recurrence => "recurrence",
            BenchMethod::NormalReduction => "normal-reduction",
        }
    }

    pub fn mean_cov(self, bx: &TruncationBox, p: &EsnParams, settings: &Settings) -> Result<FirstTwoMoments> {
        match self {
            BenchMethod::Recurrence => tesn_mean_cov_direct(bx, p, settings),
            BenchMethod::NormalReduction => tesn_mean_cov(bx, p, settings),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub p: usize,
    pub method: BenchMethod,
    pub integral_count: u64,
    pub median_ms: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{:.3}", self.p, self.method.name(), self.integral_count, self.median_ms)
    }
}

/// The doubly truncated instance used for dimension `p`: unit variances,
/// correlation 0.3, alternating skewness, box `[-1, 1.5]^p`.
pub fn bench_instance(p: usize) -> Result<(TruncationBox, EsnParams)> {
    let sigma = SymMatrix::new(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.3 }))?;
    let mu = DVector::from_fn(p, |i, _| 0.1 * i as f64);
    let lambda = DVector::from_fn(p, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 });
    let params = EsnParams::new(mu, sigma, lambda, 0.5)?;
    Ok((TruncationBox::new(vec![-1.0; p], vec![1.5; p])?, params))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs `f` once for the integral count and `repetitions` times for the median time.
fn measure<T>(repetitions: usize, mut f: impl FnMut() -> Result<T>) -> Result<(u64, f64)> {
    reset_integral_count();
    f()?;
    let count = integral_count();
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok((count, if times.is_empty() { f64::NAN } else { median(times) }))
}

/// One row per dimension and method.
pub fn benchmark(dims: &[usize], repetitions: usize, settings: &Settings) -> Result<Vec<BenchRow>> {
    if let Some(&p) = dims.iter().find(|&&p| p == 0 || p > MAX_BENCH_DIM) {
        return Err(Error::DimensionTooLarge { dim: p, max: MAX_BENCH_DIM });
    }
    let mut rows = Vec::new();
    for &p in dims {
        let (bx, params) = bench_instance(p)?;
        for method in BenchMethod::ALL {
            let (integral_count, median_ms) = measure(repetitions, || method.mean_cov(&bx, &params, settings))?;
            rows.push(BenchRow { p, method, integral_count, median_ms });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Mean and covariance of `|X|` from `2^p`-term orthant sums of the first
/// and second moments.
pub fn fesn_mean_cov_orthant(p: &EsnParams, settings: &Settings) -> Result<FirstTwoMoments> {
    let n = p.dim();
    let mut ks: Vec<MultiIndex> = (0..n).map(|i| MultiIndex::unit(n, i)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    ks.extend(pairs.iter().map(|&(i, j)| MultiIndex::unit(n, i).plus(j)));
    let v = fesn_moments(p, &ks, FoldMethod::OrthantSum, settings)?;
    let mean = DVector::from_column_slice(&v[..n]);
    let mut raw = DMatrix::zeros(n, n);
    for (&(i, j), &x) in pairs.iter().zip(&v[n..]) {
        raw[(i, j)] = x;
        raw[(j, i)] = x;
    }
    Ok(FirstTwoMoments::from_mean_raw2(mean, SymMatrix::symmetrize(raw)))
}

/// Median milliseconds of the pairwise folded mean/covariance and of the
/// orthant-sum assembly, on the untruncated law of [`bench_instance`].
pub fn folded_benchmark(p: usize, repetitions: usize, settings: &Settings) -> Result<(f64, f64)> {
    let (_, params) = bench_instance(p)?;
    let (_, explicit) = measure(repetitions, || fesn_mean_cov(&params, settings))?;
    let (_, orthant) = measure(repetitions, || fesn_mean_cov_orthant(&params, settings))?;
    Ok((explicit, orthant))
}
