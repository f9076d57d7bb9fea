//! Seeded Monte Carlo and quadrature references.
//!
//! Draws come from [`EsnSampler`] (ChaCha8 seeded with `seed`, stream 0 for
//! the estimate and stream 1 for the rejection pilot), so a seed pins every
//! estimate bit for bit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::esn::{EsnParams, EsnSampler};
use crate::mvn::TruncationBox;
use crate::quad::{integrate, integrate_2d};
use crate::tn::MultiIndex;

/// Draws in the rejection pilot.
pub const PILOT_DRAWS: usize = 10_000;
/// Smallest pilot acceptance rate for which rejection sampling is attempted.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Draws that entered the average (accepted draws for truncated laws).
    pub n_effective: usize,
    pub seed: u64,
}

/// Sample mean and covariance with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McMeanCov {
    pub mean: DVector<f64>,
    pub mean_se: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// From the sample variance of `(y_i - ȳ_i)(y_j - ȳ_j)`.
    pub cov_se: DMatrix<f64>,
    pub n_effective: usize,
    pub seed: u64,
}

/// Running first and second moments of a scalar.
#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    sum: f64,
    sum2: f64,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum2 += x * x;
    }

    fn estimate(&self, seed: u64) -> McEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 { ((self.sum2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        McEstimate { value: mean, std_error: (var / n).sqrt(), n_effective: self.n, seed }
    }
}

fn check_box(bx: &TruncationBox, p: &EsnParams) -> Result<()> {
    if bx.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: bx.dim() });
    }
    Ok(())
}

/// Pilot acceptance rate; fails with `RejectionTooHigh` below [`MIN_ACCEPTANCE`].
fn pilot(bx: &TruncationBox, p: &EsnParams, seed: u64) -> Result<f64> {
    let mut s = EsnSampler::with_stream(p, seed, 1)?;
    let hits = (0..PILOT_DRAWS).filter(|_| bx.contains(s.draw().as_slice())).count();
    let rate = hits as f64 / PILOT_DRAWS as f64;
    if rate < MIN_ACCEPTANCE {
        return Err(Error::RejectionTooHigh { rate, min: MIN_ACCEPTANCE });
    }
    Ok(rate)
}

/// Fraction of `n` draws inside the box, an estimate of `𝓛`.
pub fn mc_tesn_prob(bx: &TruncationBox, p: &EsnParams, n: usize, seed: u64) -> Result<McEstimate> {
    check_box(bx, p)?;
    let mut s = EsnSampler::new(p, seed)?;
    let mut acc = Acc::default();
    for _ in 0..n {
        acc.push(if bx.contains(s.draw().as_slice()) { 1.0 } else { 0.0 });
    }
    Ok(acc.estimate(seed))
}

/// `E[Y^κ | a <= Y <= b]` from the draws (out of `n`) that land in the box.
pub fn mc_tesn_moment(bx: &TruncationBox, p: &EsnParams, k: &MultiIndex, n: usize, seed: u64) -> Result<McEstimate> {
    check_box(bx, p)?;
    if k.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: k.dim() });
    }
    pilot(bx, p, seed)?;
    let mut s = EsnSampler::new(p, seed)?;
    let mut acc = Acc::default();
    for _ in 0..n {
        let y = s.draw();
        if bx.contains(y.as_slice()) {
            acc.push(k.monomial(y.as_slice()));
        }
    }
    if acc.n == 0 {
        return Err(Error::RejectionTooHigh { rate: 0.0, min: MIN_ACCEPTANCE });
    }
    Ok(acc.estimate(seed))
}

/// `E[|X|^κ]`.
pub fn mc_fesn_moment(p: &EsnParams, k: &MultiIndex, n: usize, seed: u64) -> Result<McEstimate> {
    if k.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: k.dim() });
    }
    let mut s = EsnSampler::new(p, seed)?;
    let mut acc = Acc::default();
    for _ in 0..n {
        let y = s.draw().abs();
        acc.push(k.monomial(y.as_slice()));
    }
    Ok(acc.estimate(seed))
}

/// Empirical `P(|X| <= y)`.
pub fn mc_fesn_cdf(p: &EsnParams, y: &DVector<f64>, n: usize, seed: u64) -> Result<McEstimate> {
    if y.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: y.len() });
    }
    let mut s = EsnSampler::new(p, seed)?;
    let mut acc = Acc::default();
    for _ in 0..n {
        let x = s.draw();
        acc.push(if x.iter().zip(y.iter()).all(|(x, y)| x.abs() <= *y) { 1.0 } else { 0.0 });
    }
    Ok(acc.estimate(seed))
}

fn mean_cov<I: Iterator<Item = DVector<f64>>>(draws: I, dim: usize, seed: u64) -> Result<McMeanCov> {
    let ys: Vec<DVector<f64>> = draws.collect();
    let n = ys.len();
    if n < 2 {
        return Err(Error::RejectionTooHigh { rate: 0.0, min: MIN_ACCEPTANCE });
    }
    let nf = n as f64;
    let mean = ys.iter().fold(DVector::zeros(dim), |a, y| a + y) / nf;
    let mut mean_se = DVector::zeros(dim);
    let mut cov = DMatrix::zeros(dim, dim);
    let mut cov_se = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let var: f64 = ys.iter().map(|y| (y[i] - mean[i]).powi(2)).sum::<f64>() / (nf - 1.0);
        mean_se[i] = (var / nf).sqrt();
        for j in i..dim {
            let mut acc = Acc::default();
            for y in &ys {
                acc.push((y[i] - mean[i]) * (y[j] - mean[j]));
            }
            let e = acc.estimate(seed);
            let c = e.value * nf / (nf - 1.0);
            cov[(i, j)] = c;
            cov[(j, i)] = c;
            cov_se[(i, j)] = e.std_error;
            cov_se[(j, i)] = e.std_error;
        }
    }
    Ok(McMeanCov { mean, mean_se, cov, cov_se, n_effective: n, seed })
}

/// Mean and covariance of the draws (out of `n`) that land in the box.
pub fn mc_tesn_mean_cov(bx: &TruncationBox, p: &EsnParams, n: usize, seed: u64) -> Result<McMeanCov> {
    check_box(bx, p)?;
    pilot(bx, p, seed)?;
    let mut s = EsnSampler::new(p, seed)?;
    let draws = (0..n).map(move |_| s.draw()).filter(|y| bx.contains(y.as_slice()));
    mean_cov(draws, p.dim(), seed)
}

/// Mean and covariance of `|X|`.
pub fn mc_fesn_mean_cov(p: &EsnParams, n: usize, seed: u64) -> Result<McMeanCov> {
    let mut s = EsnSampler::new(p, seed)?;
    mean_cov((0..n).map(move |_| s.draw().abs()), p.dim(), seed)
}

/// `∫_a^b f` to 1e-9 absolute.
pub fn quad_oracle_1d<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let r = integrate(f, a, b, 1e-9, 1e-12)?;
    if !(r.error <= 1e-9) {
        return Err(Error::QuadratureNonConvergence { estimate: r.value, error: r.error });
    }
    Ok(r.value)
}

/// `∫_{x0}^{x1} ∫_{y0(x)}^{y1(x)} f` to 1e-6 absolute.
pub fn quad_oracle_2d<F, G>(f: F, x0: f64, x1: f64, y_range: G) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64) -> (f64, f64),
{
    let r = integrate_2d(f, x0, x1, y_range, 1e-7)?;
    if !(r.error <= 1e-6) {
        return Err(Error::QuadratureNonConvergence { estimate: r.value, error: r.error });
    }
    Ok(r.value)
}
