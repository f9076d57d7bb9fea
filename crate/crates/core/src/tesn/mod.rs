//! Truncated extended skew-normal moments.
//!
//! Two engines compute `𝓕^p_κ = ∫_a^b x^κ ESN_p(x) dx`: the skewed recurrence
//! and the reduction to a `(p+1)`-dimensional truncated normal with the extra
//! coordinate bounded above by `τ̃`. The reduction is the default.

mod direct;
mod recurrence;

use nalgebra::DVector;

pub use direct::{tesn_mean_cov_direct, tesn_mean_direct, EdgeConditional, RecurrenceTerms};
pub use recurrence::{tesn_first_two_recurrence, tesn_fk, tesn_fk_univariate, TesnRecurrence};

use crate::error::{Error, Result};
use crate::esn::{esn_derive, AugmentedNormal, EsnDerived, EsnParams};
use crate::linalg::SymMatrix;
use crate::mvn::univariate::{log_std_cdf, log_std_pdf};
use crate::mvn::{rect_prob, NormalParams, Probability, TruncationBox};
use crate::settings::Settings;
use crate::tn::{tn_first_two_corrected_traced, Correction, FirstTwoMoments, MultiIndex, TnRecurrence};

/// Engine for truncated product moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TesnMethod {
    /// Recurrence for `p = 1`, normal reduction otherwise.
    #[default]
    Auto,
    NormalReduction,
    Recurrence,
}

/// True when `τ̃` is deep enough that the law is replaced by `N(μ - μ_b, Γ)`.
pub(crate) fn uses_limit(p: &EsnParams, d: &EsnDerived, settings: &Settings) -> bool {
    !p.is_normal() && d.tau_tilde <= settings.limit_tau_tilde
}

fn limit_params(p: &EsnParams, d: &EsnDerived) -> NormalParams {
    NormalParams { mu: &p.mu - &d.mu_b, sigma: d.gamma.clone() }
}

fn check_dims(bx: &TruncationBox, p: &EsnParams) -> Result<()> {
    if bx.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: bx.dim() });
    }
    Ok(())
}

/// `𝓛_p = ξ⁻¹ L_{p+1}(a*, b*; μ*, Ω)`.
pub fn tesn_prob(bx: &TruncationBox, params: &EsnParams, settings: &Settings) -> Result<Probability> {
    check_dims(bx, params)?;
    let d = esn_derive(params)?;
    if uses_limit(params, &d, settings) {
        let lim = limit_params(params, &d);
        return rect_prob(bx.lower(), bx.upper(), lim.mu.as_slice(), &lim.sigma, &settings.qmc);
    }
    let aug = AugmentedNormal::new(params, &d);
    let abx = aug.extend_box(bx)?;
    let joint = rect_prob(abx.lower(), abx.upper(), aug.mu_star.as_slice(), &aug.omega, &settings.qmc)?;
    let log_value = (joint.log_value - d.log_xi).min(0.0);
    Ok(Probability { value: log_value.exp(), log_value, abs_error: joint.abs_error * (-d.log_xi).exp() })
}

enum Reduction {
    Augmented(TnRecurrence, f64),
    Limit(TnRecurrence),
}

fn reduction(bx: &TruncationBox, params: &EsnParams, settings: &Settings) -> Result<Reduction> {
    check_dims(bx, params)?;
    let d = esn_derive(params)?;
    if uses_limit(params, &d, settings) {
        return Ok(Reduction::Limit(TnRecurrence::new(bx, &limit_params(params, &d), settings)?));
    }
    let aug = AugmentedNormal::new(params, &d);
    let rec = TnRecurrence::new(&aug.extend_box(bx)?, &aug.params(), settings)?;
    Ok(Reduction::Augmented(rec, d.log_xi))
}

/// `𝓕^p_κ = ξ⁻¹ F^{p+1}_{(κ, 0)}(a*, b*; μ*, Ω)`.
pub fn tesn_fk_via_normal(bx: &TruncationBox, params: &EsnParams, k: &MultiIndex, settings: &Settings) -> Result<f64> {
    if k.dim() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: k.dim() });
    }
    match reduction(bx, params, settings)? {
        Reduction::Limit(mut rec) => rec.fk(k),
        Reduction::Augmented(mut rec, log_xi) => {
            let log_l = rec.log_prob();
            if log_l == f64::NEG_INFINITY {
                return Ok(0.0);
            }
            Ok(rec.moment(&k.augmented())? * (log_l - log_xi).exp())
        }
    }
}

/// `E[Y^κ | a <= Y <= b]` for several `κ`, sharing one memo table.
pub fn tesn_moments(
    bx: &TruncationBox,
    params: &EsnParams,
    ks: &[MultiIndex],
    method: TesnMethod,
    settings: &Settings,
) -> Result<Vec<f64>> {
    for k in ks {
        if k.dim() != params.dim() {
            return Err(Error::DimensionMismatch { expected: params.dim(), got: k.dim() });
        }
    }
    let method = match method {
        TesnMethod::Auto if params.dim() == 1 => TesnMethod::Recurrence,
        TesnMethod::Auto => TesnMethod::NormalReduction,
        m => m,
    };
    match method {
        TesnMethod::Recurrence => {
            let mut rec = TesnRecurrence::new(bx, params, settings)?;
            ks.iter().map(|k| rec.moment(k)).collect()
        }
        _ => match reduction(bx, params, settings)? {
            Reduction::Limit(mut rec) => ks.iter().map(|k| rec.moment(k)).collect(),
            Reduction::Augmented(mut rec, _) => ks.iter().map(|k| rec.moment(&k.augmented())).collect(),
        },
    }
}

pub fn tesn_moment(bx: &TruncationBox, params: &EsnParams, k: &MultiIndex, method: TesnMethod, settings: &Settings) -> Result<f64> {
    Ok(tesn_moments(bx, params, std::slice::from_ref(k), method, settings)?[0])
}

/// Mean and covariance through the `(p+1)`-dimensional truncated normal.
pub fn tesn_mean_cov(bx: &TruncationBox, params: &EsnParams, settings: &Settings) -> Result<FirstTwoMoments> {
    tesn_mean_cov_traced(bx, params, settings).map(|(m, _)| m)
}

pub fn tesn_mean_cov_traced(
    bx: &TruncationBox,
    params: &EsnParams,
    settings: &Settings,
) -> Result<(FirstTwoMoments, Vec<Correction>)> {
    check_dims(bx, params)?;
    let d = esn_derive(params)?;
    if uses_limit(params, &d, settings) {
        let (m, mut tr) = tn_first_two_corrected_traced(bx, &limit_params(params, &d), settings)?;
        tr.insert(0, Correction::LimitTau);
        return Ok((m, tr));
    }
    let aug = AugmentedNormal::new(params, &d);
    let (m, tr) = tn_first_two_corrected_traced(&aug.extend_box(bx)?, &aug.params(), settings)?;
    Ok((m.drop_last(), tr))
}

/// Data of one edge of the recurrence, in terms of `φ = Σ^{-1/2}λ`.
#[derive(Debug, Clone)]
pub(crate) struct EdgeGeometry {
    pub mu_j: f64,
    pub var_j: f64,
    /// `c_j`.
    pub c: f64,
    /// `φ̃_j = φ_j + Σ_{j(j)} φ_(j) / σ_j²`.
    pub varphi_tilde: f64,
    pub tau: f64,
    /// `μ_(j)`.
    pub mu_rest: DVector<f64>,
    /// `Σ_(j)j / σ_j²`.
    pub gain: DVector<f64>,
    /// `Σ̃_j`.
    pub sigma: SymMatrix,
    /// `φ_(j)`.
    pub varphi: DVector<f64>,
}

pub(crate) fn edge_geometry(mu: &DVector<f64>, sigma: &SymMatrix, varphi: &DVector<f64>, tau: f64, j: usize) -> EdgeGeometry {
    let p = mu.len();
    let keep: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let var_j = sigma.get(j, j);
    let gain = DVector::from_iterator(p - 1, keep.iter().map(|&k| sigma.get(k, j) / var_j));
    let cond = SymMatrix::symmetrize(nalgebra::DMatrix::from_fn(p - 1, p - 1, |r, c| {
        sigma.get(keep[r], keep[c]) - sigma.get(keep[r], j) * sigma.get(j, keep[c]) / var_j
    }));
    let phi_rest = DVector::from_iterator(p - 1, keep.iter().map(|&k| varphi[k]));
    let varphi_tilde = varphi[j] + keep.iter().map(|&k| sigma.get(j, k) * varphi[k]).sum::<f64>() / var_j;
    let quad = (phi_rest.transpose() * cond.as_matrix() * &phi_rest)[(0, 0)];
    EdgeGeometry {
        mu_j: mu[j],
        var_j,
        c: 1.0 / (1.0 + quad.max(0.0)).sqrt(),
        varphi_tilde,
        tau,
        mu_rest: DVector::from_iterator(p - 1, keep.iter().map(|&k| mu[k])),
        gain,
        sigma: cond,
        varphi: phi_rest,
    }
}

impl EdgeGeometry {
    /// Log density at `x` of the univariate marginal
    /// `ESN_1(μ_j, σ_j², c_j σ_j φ̃_j, c_j τ)`.
    pub fn log_edge_pdf(&self, x: f64) -> f64 {
        let lam = self.c * self.var_j.sqrt() * self.varphi_tilde;
        let tau = self.c * self.tau;
        let arg = tau + self.c * self.varphi_tilde * (x - self.mu_j);
        let z = (x - self.mu_j) / self.var_j.sqrt();
        log_std_pdf(z) - 0.5 * self.var_j.ln() + log_std_cdf(arg) - log_std_cdf(tau / (1.0 + lam * lam).sqrt())
    }

    /// Location and extension of the conditional law given `x_j = x`.
    pub fn child_at(&self, x: f64) -> (DVector<f64>, f64) {
        let mu = &self.mu_rest + &self.gain * (x - self.mu_j);
        (mu, self.tau + self.varphi_tilde * (x - self.mu_j))
    }
}

#[cfg(test)]
mod tests;
