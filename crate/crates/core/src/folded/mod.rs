//! Folded extended skew-normal law of `Y = |X|`, `X ~ ESN_p(μ, Σ, λ, τ)`.
//!
//! Every orthant of `X` maps onto the positive orthant of a sign-flipped
//! ESN, so pdf, cdf and product moments are sums over sign patterns, except
//! for the mean and covariance, which have a pairwise closed form
//! ([`fesn_mean_cov`]).

mod explicit;

use nalgebra::DVector;

pub use explicit::{fesn_mean_cov, FoldedExplicitWork};

use crate::error::{Error, Result};
use crate::esn::{esn_derive, esn_log_pdf, EsnParams};
use crate::linalg::SymMatrix;
use crate::mvn::{NormalParams, Probability, TruncationBox};
use crate::settings::Settings;
use crate::tesn::{tesn_fk_univariate, tesn_prob, uses_limit, TesnRecurrence};
use crate::tn::{MomentTable, MultiIndex, TnRecurrence};

/// Largest dimension accepted by the `2^p`-term sums.
pub const MAX_ORTHANT_DIM: usize = 12;

/// A vector `s ∈ {-1, 1}^p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignPattern {
    s: Vec<i8>,
}

impl SignPattern {
    pub fn new(s: Vec<i8>) -> Result<Self> {
        if let Some(i) = s.iter().position(|&x| x != 1 && x != -1) {
            return Err(Error::InvalidParameter(format!("sign pattern entry {i} is {}, need ±1", s[i])));
        }
        Ok(SignPattern { s })
    }

    pub fn positive(p: usize) -> Self {
        SignPattern { s: vec![1; p] }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn signs(&self) -> &[i8] {
        &self.s
    }

    pub fn sign(&self, i: usize) -> f64 {
        self.s[i] as f64
    }

    /// `π_s = Π s_i`.
    pub fn pi(&self) -> i8 {
        self.s.iter().product()
    }

    /// `Λ_s v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(v.len(), v.iter().zip(&self.s).map(|(x, &s)| s as f64 * x))
    }

    /// `Λ_s M Λ_s`.
    pub fn apply_sym(&self, m: &SymMatrix) -> SymMatrix {
        let n = m.dim();
        SymMatrix::symmetrize(nalgebra::DMatrix::from_fn(n, n, |i, j| self.sign(i) * self.sign(j) * m.get(i, j)))
    }

    /// All `2^p` patterns in reflected Gray-code order, starting from all `+1`;
    /// neighbours differ in one sign.
    pub fn gray(p: usize) -> impl Iterator<Item = SignPattern> {
        assert!(p < usize::BITS as usize, "too many sign patterns");
        (0usize..1 << p).map(move |n| {
            let g = n ^ (n >> 1);
            SignPattern { s: (0..p).map(|i| if g >> i & 1 == 1 { -1 } else { 1 }).collect() }
        })
    }
}

/// Law of `Λ_s X`: `(Λ_s μ, Λ_s Σ Λ_s, Λ_s λ, τ)`.
pub fn flip_params(p: &EsnParams, s: &SignPattern) -> Result<EsnParams> {
    if s.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: s.dim() });
    }
    EsnParams::new(s.apply(&p.mu), s.apply_sym(&p.sigma), s.apply(&p.lambda), p.tau)
}

fn check_nonnegative(y: &DVector<f64>, p: &EsnParams) -> Result<()> {
    if y.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: y.len() });
    }
    if let Some(i) = y.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::NegativeArgument { index: i, value: y[i] });
    }
    Ok(())
}

fn check_orthant_dim(p: usize) -> Result<()> {
    if p > MAX_ORTHANT_DIM {
        return Err(Error::DimensionTooLarge { dim: p, max: MAX_ORTHANT_DIM });
    }
    Ok(())
}

pub fn fesn_pdf(y: &DVector<f64>, p: &EsnParams) -> Result<f64> {
    check_nonnegative(y, p)?;
    check_orthant_dim(p.dim())?;
    SignPattern::gray(p.dim()).try_fold(0.0, |acc, s| Ok(acc + esn_log_pdf(y, &flip_params(p, &s)?)?.exp()))
}

/// `P(|X| <= y) = 𝓛_p(-y, y)`.
pub fn fesn_cdf(y: &DVector<f64>, p: &EsnParams, settings: &Settings) -> Result<Probability> {
    check_nonnegative(y, p)?;
    if y.iter().any(|&v| v == 0.0) {
        return Ok(Probability::ZERO);
    }
    let bx = TruncationBox::new(y.iter().map(|v| -v).collect(), y.iter().copied().collect())?;
    tesn_prob(&bx, p, settings)
}

/// `𝓘_κ = ∫_{[0,∞)^p} y^κ ESN_p(y) dy`, by the skewed recurrence.
pub fn fesn_ik(p: &EsnParams, k: &MultiIndex, settings: &Settings) -> Result<f64> {
    TesnRecurrence::new(&TruncationBox::positive_orthant(p.dim()), p, settings)?.fk(k)
}

/// `𝓘_0 ..= 𝓘_{k_max}` of a univariate law.
pub fn fesn_ik_univariate(p: &EsnParams, k_max: u32, settings: &Settings) -> Result<MomentTable> {
    tesn_fk_univariate(0.0, f64::INFINITY, p, k_max, settings)
}

/// `E|X|^k` for `k = 0..=k_max` of a univariate law, from its two half-lines.
pub fn fesn_moments_univariate(p: &EsnParams, k_max: u32, settings: &Settings) -> Result<Vec<f64>> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: p.dim() });
    }
    let mut out = vec![0.0; k_max as usize + 1];
    for s in SignPattern::gray(1) {
        let t = fesn_ik_univariate(&flip_params(p, &s)?, k_max, settings)?;
        for (k, o) in out.iter_mut().enumerate() {
            *o += t.value(&MultiIndex::new(vec![k as u32])).unwrap_or(0.0);
        }
    }
    Ok(out)
}

/// How [`fesn_moment`] evaluates the `2^p` orthant integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FoldMethod {
    /// `Σ_s 𝓘_κ(μ_s, Σ_s, λ_s, τ)` by the skewed recurrence.
    OrthantSum,
    /// `ξ⁻¹ Σ_s I_{κ*}(μ*_s, Ω⁻_s)` by the `(p+1)`-dimensional normal recurrence.
    #[default]
    NormalReduction,
}

/// `E[|X|^κ]`.
pub fn fesn_moment(p: &EsnParams, k: &MultiIndex, method: FoldMethod, settings: &Settings) -> Result<f64> {
    Ok(fesn_moments(p, std::slice::from_ref(k), method, settings)?[0])
}

/// `E[|X|^κ]` for several `κ`, with one memo table per orthant.
pub fn fesn_moments(p: &EsnParams, ks: &[MultiIndex], method: FoldMethod, settings: &Settings) -> Result<Vec<f64>> {
    let n = p.dim();
    if let Some(k) = ks.iter().find(|k| k.dim() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: k.dim() });
    }
    check_orthant_dim(n)?;
    let mut total = vec![0.0; ks.len()];
    for s in SignPattern::gray(n) {
        let part = match method {
            FoldMethod::OrthantSum => {
                let mut rec = TesnRecurrence::new(&TruncationBox::positive_orthant(n), &flip_params(p, &s)?, settings)?;
                ks.iter().map(|k| rec.fk(k)).collect::<Result<Vec<_>>>()?
            }
            FoldMethod::NormalReduction => orthant_via_normal(p, &s, ks, settings)?,
        };
        total.iter_mut().zip(part).for_each(|(t, v)| *t += v);
    }
    Ok(total)
}

/// `ξ⁻¹ I^{p+1}_{κ*}((Λ_s μ, τ̃), Ω⁻_s)` over `[0, ∞)^{p+1}`; the last coordinate
/// is `τ̃ - X₀` for the latent `X₀` of the augmented representation.
fn orthant_via_normal(p: &EsnParams, s: &SignPattern, ks: &[MultiIndex], settings: &Settings) -> Result<Vec<f64>> {
    let n = p.dim();
    let d = esn_derive(p)?;
    let limit = uses_limit(p, &d, settings);
    let (bx, params, log_xi) = if limit {
        let limit = NormalParams { mu: s.apply(&(&p.mu - &d.mu_b)), sigma: s.apply_sym(&d.gamma) };
        (TruncationBox::positive_orthant(n), limit, 0.0)
    } else {
        let mut mu = s.apply(&p.mu).insert_row(n, d.tau_tilde);
        mu[n] = d.tau_tilde;
        let delta = s.apply(&d.big_delta);
        let sig = s.apply_sym(&p.sigma);
        let omega = nalgebra::DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => sig.get(i, j),
            (true, false) => delta[i],
            (false, true) => delta[j],
            (false, false) => 1.0,
        });
        let params = NormalParams { mu, sigma: SymMatrix::symmetrize(omega) };
        (TruncationBox::positive_orthant(n + 1), params, d.log_xi)
    };
    let mut rec = TnRecurrence::new(&bx, &params, settings)?;
    let log_l = rec.log_prob();
    if log_l == f64::NEG_INFINITY {
        return Ok(vec![0.0; ks.len()]);
    }
    let scale = (log_l - log_xi).exp();
    ks.iter()
        .map(|k| Ok(rec.moment(&if limit { k.clone() } else { k.augmented() })? * scale))
        .collect()
}
