//! Mean and covariance of `|X|` without the `2^p` orthant sum.
//!
//! For a pair `(X_i, X_j)` write `𝓘_{11}` over each of the four quadrants with
//! the recurrence (κ = e_i, then e_j) and add the four signed copies. With
//! `m = μ - μ_b`, `f_ℓ` the marginal density of `X_ℓ` at zero, `F_{j|i}` the
//! cdf at zero of `X_j | X_i = 0`, `g_ℓ = φ(0; m_ℓ, γ_ℓℓ)` and `Φ_{j.i}` the cdf at
//! zero of `W_j | W_i = 0`:
//!
//! `E|X_i X_j| = (μ_i μ_j + σ_ij) S_L + (μ_j δ_i + δ_j m_i) S_W
//!   + 2 μ_j [σ_ii f_i (1 - 2F_{j|i}) + σ_ij f_j (1 - 2F_{i|j})]
//!   + 2 δ_j [γ_ii g_i (1 - 2Φ_{j.i}) + γ_ij g_j (1 - 2Φ_{i.j})]
//!   + 2 σ_jj f_j E|X_i | X_j = 0|`,
//!
//! where `S_L = Σ_s s_i s_j P(s_i X_i > 0, s_j X_j > 0)` and `S_W` is the same sum
//! for `W ~ N(m, Γ)`.

use nalgebra::DVector;

use super::{fesn_moments_univariate, FoldedExplicitWork as Work};
use crate::error::Result;
use crate::esn::{esn_cdf, esn_derive, esn_limit_params, esn_marginal, EsnParams};
use crate::linalg::{PartitionIndex, SymMatrix};
use crate::mvn::univariate::{log_std_pdf, std_cdf};
use crate::mvn::{mvn_prob, NormalParams, TruncationBox};
use crate::settings::Settings;
use crate::tesn::{edge_geometry, tesn_prob, uses_limit};
use crate::tn::FirstTwoMoments;

/// Every sub-quantity of `E|X_i X_j|` for one ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedExplicitWork {
    pub i: usize,
    pub j: usize,
    pub mu: [f64; 2],
    /// `σ_ii, σ_ij, σ_jj`.
    pub sigma: [f64; 3],
    pub delta: [f64; 2],
    /// `m = μ - μ_b`.
    pub m: [f64; 2],
    /// `γ_ii, γ_ij, γ_jj`.
    pub gamma: [f64; 3],
    /// `m_{j.i}, m_{i.j}`.
    pub m_cond: [f64; 2],
    /// `γ²_{j.i}, γ²_{i.j}`.
    pub gamma_cond: [f64; 2],
    /// `f_i, f_j`.
    pub edge_pdf: [f64; 2],
    /// `F_{j|i}, F_{i|j}`.
    pub edge_cdf: [f64; 2],
    /// `g_i, g_j`.
    pub normal_pdf: [f64; 2],
    /// `Φ_{j.i}, Φ_{i.j}`.
    pub normal_cdf: [f64; 2],
    pub orthant_sum: f64,
    pub normal_orthant_sum: f64,
    /// `E|X_i | X_j = 0|`.
    pub child_abs_mean: f64,
}

impl Work {
    /// Needs `i != j`; `params` must already be the law used for the pair.
    pub fn new(params: &EsnParams, i: usize, j: usize, settings: &Settings) -> Result<Self> {
        let n = params.dim();
        let pair = esn_marginal(params, &PartitionIndex::from_kept(n, &[i, j])?)?;
        let d = esn_derive(&pair)?;
        let (mu, s) = (&pair.mu, &pair.sigma);
        let m = &pair.mu - &d.mu_b;
        let g = &d.gamma;

        let geo = [0, 1].map(|e| edge_geometry(mu, s, &d.varphi, pair.tau, e));
        let child = |e: usize| -> Result<EsnParams> {
            let (cm, ct) = geo[e].child_at(0.0);
            EsnParams::from_varphi(cm, geo[e].sigma.clone(), &geo[e].varphi, ct)
        };
        let zero = DVector::zeros(1);
        let edge_cdf = [esn_cdf(&zero, &child(0)?, settings)?.value, esn_cdf(&zero, &child(1)?, settings)?.value];
        let child_abs_mean = fesn_moments_univariate(&child(1)?, 1, settings)?[1];

        let m_cond = [m[1] - g.get(0, 1) * m[0] / g.get(0, 0), m[0] - g.get(0, 1) * m[1] / g.get(1, 1)];
        let gamma_cond = [
            g.get(1, 1) - g.get(0, 1).powi(2) / g.get(0, 0),
            g.get(0, 0) - g.get(0, 1).powi(2) / g.get(1, 1),
        ];
        let normal_pdf = [0, 1].map(|e| {
            let v = g.get(e, e);
            (log_std_pdf(m[e] / v.sqrt()) - 0.5 * v.ln()).exp()
        });
        let normal_cdf = [0, 1].map(|e| cdf_at_zero(m_cond[e], gamma_cond[e]));

        let orthant = |lo: [f64; 2]| TruncationBox::new(lo.to_vec(), vec![f64::INFINITY; 2]);
        let ninf = f64::NEG_INFINITY;
        let pp = tesn_prob(&orthant([0.0, 0.0])?, &pair, settings)?.value;
        let pi = tesn_prob(&orthant([0.0, ninf])?, &pair, settings)?.value;
        let pj = tesn_prob(&orthant([ninf, 0.0])?, &pair, settings)?.value;
        let w = NormalParams { mu: m.clone(), sigma: g.clone() };
        let wpp = mvn_prob(&orthant([0.0, 0.0])?, &w, &settings.qmc)?.value;
        let wpi = 1.0 - cdf_at_zero(m[0], g.get(0, 0));
        let wpj = 1.0 - cdf_at_zero(m[1], g.get(1, 1));

        Ok(Work {
            i,
            j,
            mu: [mu[0], mu[1]],
            sigma: [s.get(0, 0), s.get(0, 1), s.get(1, 1)],
            delta: [d.delta[0], d.delta[1]],
            m: [m[0], m[1]],
            gamma: [g.get(0, 0), g.get(0, 1), g.get(1, 1)],
            m_cond,
            gamma_cond,
            edge_pdf: [geo[0].log_edge_pdf(0.0).exp(), geo[1].log_edge_pdf(0.0).exp()],
            edge_cdf,
            normal_pdf,
            normal_cdf,
            orthant_sum: 1.0 - 2.0 * (pi + pj) + 4.0 * pp,
            normal_orthant_sum: 1.0 - 2.0 * (wpi + wpj) + 4.0 * wpp,
            child_abs_mean,
        })
    }

    /// `E|X_i X_j|`.
    pub fn abs_product(&self) -> f64 {
        let [mi, mj] = self.mu;
        let [sii, sij, sjj] = self.sigma;
        let [di, dj] = self.delta;
        let [gii, gij, _] = self.gamma;
        let [fi, fj] = self.edge_pdf;
        let [wi, wj] = self.normal_pdf;
        (mi * mj + sij) * self.orthant_sum
            + (mj * di + dj * self.m[0]) * self.normal_orthant_sum
            + 2.0 * mj * (sii * fi * (1.0 - 2.0 * self.edge_cdf[0]) + sij * fj * (1.0 - 2.0 * self.edge_cdf[1]))
            + 2.0 * dj * (gii * wi * (1.0 - 2.0 * self.normal_cdf[0]) + gij * wj * (1.0 - 2.0 * self.normal_cdf[1]))
            + 2.0 * sjj * fj * self.child_abs_mean
    }
}

/// `P(V <= 0)` for `V ~ N(m, v)`, with `v = 0` read as a point mass.
fn cdf_at_zero(m: f64, v: f64) -> f64 {
    if v > 0.0 {
        std_cdf(-m / v.sqrt())
    } else if m <= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Mean and covariance of `|X|` from univariate folds and [`FoldedExplicitWork`].
pub fn fesn_mean_cov(p: &EsnParams, settings: &Settings) -> Result<FirstTwoMoments> {
    let d = esn_derive(p)?;
    let law = if uses_limit(p, &d, settings) { EsnParams::normal(esn_limit_params(p)?) } else { p.clone() };
    let n = law.dim();
    let mut mean = DVector::zeros(n);
    let mut raw = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        let marg = esn_marginal(&law, &PartitionIndex::from_kept(n, &[i])?)?;
        let m = fesn_moments_univariate(&marg, 2, settings)?;
        mean[i] = m[1];
        raw[(i, i)] = m[2];
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = Work::new(&law, i, j, settings)?.abs_product();
            raw[(i, j)] = v;
            raw[(j, i)] = v;
        }
    }
    Ok(FirstTwoMoments::from_mean_raw2(mean, SymMatrix::symmetrize(raw)))
}
