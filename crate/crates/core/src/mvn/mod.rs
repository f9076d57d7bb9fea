//! Multivariate normal density and rectangle probabilities `L_p(a, b; mu, Sigma)`.

mod bivariate;
mod qmc;
pub mod univariate;

use std::cell::Cell;

use nalgebra::{Cholesky, DVector};

pub use bivariate::{bvn_rect, bvnu};
pub use univariate::{log_std_cdf, std_cdf, std_pdf, std_quantile};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::settings::QmcConfig;
use univariate::{interval_prob, log_interval_prob, LN_SQRT_2PI};

thread_local! {
    static INTEGRALS: Cell<u64> = const { Cell::new(0) };
}

/// Number of rectangle probabilities evaluated on this thread since the last reset.
pub fn integral_count() -> u64 {
    INTEGRALS.with(|c| c.get())
}

pub fn reset_integral_count() {
    INTEGRALS.with(|c| c.set(0));
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalParams {
    pub mu: DVector<f64>,
    pub sigma: SymMatrix,
}

impl NormalParams {
    pub fn new(mu: DVector<f64>, sigma: SymMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch { expected: sigma.dim(), got: mu.len() });
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("location must be finite".into()));
        }
        Ok(NormalParams { mu, sigma })
    }

    pub fn standard(p: usize) -> Self {
        NormalParams { mu: DVector::zeros(p), sigma: SymMatrix::identity(p) }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Extended-real rectangle `[lower, upper]` with `lower[i] < upper[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TruncationBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("empty box".into()));
        }
        for (i, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if a.is_nan() || b.is_nan() || !(a < b) {
                return Err(Error::InvalidBox(format!("coordinate {i}: need lower < upper, got [{a}, {b}]")));
            }
            if a == f64::INFINITY || b == f64::NEG_INFINITY {
                return Err(Error::InvalidBox(format!("coordinate {i}: empty interval [{a}, {b}]")));
            }
        }
        Ok(TruncationBox { lower, upper })
    }

    pub fn unbounded(p: usize) -> Self {
        TruncationBox { lower: vec![f64::NEG_INFINITY; p], upper: vec![f64::INFINITY; p] }
    }

    /// `[0, ∞)^p`.
    pub fn positive_orthant(p: usize) -> Self {
        TruncationBox { lower: vec![0.0; p], upper: vec![f64::INFINITY; p] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|&a| a == f64::NEG_INFINITY) && self.upper.iter().all(|&b| b == f64::INFINITY)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((x, a), b)| a <= x && x <= b)
    }
}

/// A probability with a log channel that survives underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub value: f64,
    pub log_value: f64,
    pub abs_error: f64,
}

impl Probability {
    pub const ZERO: Probability = Probability { value: 0.0, log_value: f64::NEG_INFINITY, abs_error: 0.0 };
    pub const ONE: Probability = Probability { value: 1.0, log_value: 0.0, abs_error: 0.0 };

    fn exact_log(log_value: f64) -> Self {
        let log_value = log_value.min(0.0);
        Probability { value: log_value.exp(), log_value, abs_error: 0.0 }
    }
}

pub fn mvn_log_pdf(x: &DVector<f64>, params: &NormalParams) -> Result<f64> {
    let p = params.dim();
    if x.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: x.len() });
    }
    let chol = Cholesky::new(params.sigma.as_matrix().clone()).ok_or_else(|| {
        let (min_eig, max_eig) = params.sigma.eigen_range();
        Error::NotPsd { min_eig, max_eig }
    })?;
    let z = chol.l().solve_lower_triangular(&(x - &params.mu)).expect("Cholesky factor is invertible");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    Ok(-0.5 * z.norm_squared() - log_det - p as f64 * LN_SQRT_2PI)
}

pub fn mvn_pdf(x: &DVector<f64>, params: &NormalParams) -> Result<f64> {
    Ok(mvn_log_pdf(x, params)?.exp())
}

/// `P(a <= X <= b)` for `X ~ N(mu, Sigma)`.
pub fn mvn_prob(bx: &TruncationBox, params: &NormalParams, cfg: &QmcConfig) -> Result<Probability> {
    if bx.dim() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: bx.dim() });
    }
    rect_prob(bx.lower(), bx.upper(), params.mu.as_slice(), &params.sigma, cfg)
}

/// Unvalidated core of [`mvn_prob`]; `lower[i] >= upper[i]` yields zero.
pub(crate) fn rect_prob(lower: &[f64], upper: &[f64], mu: &[f64], sigma: &SymMatrix, cfg: &QmcConfig) -> Result<Probability> {
    INTEGRALS.with(|c| c.set(c.get() + 1));
    let p = mu.len();
    let mut active = Vec::with_capacity(p);
    let mut log_total = 0.0;
    for i in 0..p {
        let (a, b) = (lower[i] - mu[i], upper[i] - mu[i]);
        if !(a < b) {
            return Ok(Probability::ZERO);
        }
        if a == f64::NEG_INFINITY && b == f64::INFINITY {
            continue;
        }
        let v = sigma.get(i, i);
        if v < 0.0 {
            return Err(Error::NotPsd { min_eig: v, max_eig: f64::NAN });
        }
        if v == 0.0 {
            // point mass at the mean
            if !(a <= 0.0 && 0.0 <= b) {
                return Ok(Probability::ZERO);
            }
            continue;
        }
        active.push((i, a, b));
    }

    // independent components through exact zero covariances
    let n = active.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if sigma.get(active[u].0, active[v].0) != 0.0 {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru != rv {
                    parent[rv.max(ru)] = rv.min(ru);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for u in 0..n {
        let r = find(&mut parent, u);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(u);
    }

    let mut parts: Vec<(f64, f64, f64)> = Vec::with_capacity(groups.len());
    for g in &groups {
        let part = match g.len() {
            1 => {
                let (i, a, b) = active[g[0]];
                let sd = sigma.get(i, i).sqrt();
                let (lo, hi) = (a / sd, b / sd);
                (log_interval_prob(lo, hi), interval_prob(lo, hi), 0.0)
            }
            2 => {
                let (i, a1, b1) = active[g[0]];
                let (j, a2, b2) = active[g[1]];
                let (s1, s2) = (sigma.get(i, i).sqrt(), sigma.get(j, j).sqrt());
                let r = (sigma.get(i, j) / (s1 * s2)).clamp(-1.0, 1.0);
                let (v, lv) = bvn_rect([a1 / s1, a2 / s2], [b1 / s1, b2 / s2], r);
                (lv, v, 1e-15)
            }
            m => {
                let a: Vec<f64> = g.iter().map(|&u| active[u].1).collect();
                let b: Vec<f64> = g.iter().map(|&u| active[u].2).collect();
                let mut cov = vec![0.0; m * m];
                for (x, &u) in g.iter().enumerate() {
                    for (y, &v) in g.iter().enumerate() {
                        cov[x * m + y] = sigma.get(active[u].0, active[v].0);
                    }
                }
                let problem = qmc::SovProblem::new(a, b, &cov)?;
                problem.integrate(cfg)
            }
        };
        if part.0 == f64::NEG_INFINITY {
            return Ok(Probability::ZERO);
        }
        log_total += part.0;
        parts.push(part);
    }
    if parts.iter().all(|p| p.2 == 0.0) {
        return Ok(Probability::exact_log(log_total));
    }
    let value = log_total.exp().min(1.0);
    let mut abs_error = 0.0;
    for &(lv, _, err) in &parts {
        if err > 0.0 {
            abs_error += err * (log_total - lv).exp();
        }
    }
    Ok(Probability { value, log_value: log_total.min(0.0), abs_error })
}
