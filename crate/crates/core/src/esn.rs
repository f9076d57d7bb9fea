//! Extended skew-normal law `ESN_p(μ, Σ, λ, τ)` with density
//! `ξ⁻¹ φ_p(x; μ, Σ) Φ(τ + λᵀΣ^{-1/2}(x - μ))`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{conditional_normal, cross_block, select, sym_inverse, sym_sqrt, sym_sqrt_and_inv_sqrt, PartitionIndex, SymMatrix};
use crate::mvn::univariate::{log_std_cdf, log_std_pdf, sample_truncated_std, std_quantile};
use crate::mvn::{mvn_log_pdf, rect_prob, NormalParams, Probability, TruncationBox};
use crate::settings::Settings;
use crate::tn::FirstTwoMoments;

const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EsnParams {
    pub mu: DVector<f64>,
    pub sigma: SymMatrix,
    pub lambda: DVector<f64>,
    pub tau: f64,
}

impl EsnParams {
    pub fn new(mu: DVector<f64>, sigma: SymMatrix, lambda: DVector<f64>, tau: f64) -> Result<Self> {
        let p = sigma.dim();
        if mu.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: mu.len() });
        }
        if lambda.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: lambda.len() });
        }
        if mu.iter().chain(lambda.iter()).any(|x| !x.is_finite()) || !tau.is_finite() {
            return Err(Error::InvalidParameter("location, skewness and extension must be finite".into()));
        }
        Ok(EsnParams { mu, sigma, lambda, tau })
    }

    /// Builds the law from `φ = Σ^{-1/2}λ` instead of `λ`.
    pub fn from_varphi(mu: DVector<f64>, sigma: SymMatrix, varphi: &DVector<f64>, tau: f64) -> Result<Self> {
        if varphi.len() != sigma.dim() {
            return Err(Error::DimensionMismatch { expected: sigma.dim(), got: varphi.len() });
        }
        let lambda = sym_sqrt(&sigma, PSD_TOL)?.as_matrix() * varphi;
        EsnParams::new(mu, sigma, lambda, tau)
    }

    /// `λ = 0, τ = 0`.
    pub fn normal(params: NormalParams) -> Self {
        let p = params.dim();
        EsnParams { mu: params.mu, sigma: params.sigma, lambda: DVector::zeros(p), tau: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// True when the skewing factor is constant, so the law is `N(μ, Σ)`.
    pub fn is_normal(&self) -> bool {
        self.lambda.iter().all(|&l| l == 0.0)
    }

    pub fn normal_part(&self) -> NormalParams {
        NormalParams { mu: self.mu.clone(), sigma: self.sigma.clone() }
    }
}

/// Constants derived from [`EsnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EsnDerived {
    /// `ξ = Φ(τ̃)`; may underflow, see `log_xi`.
    pub xi: f64,
    pub log_xi: f64,
    /// `τ̃ = τ / √(1 + λᵀλ)`.
    pub tau_tilde: f64,
    /// `η = φ(τ; 0, 1 + λᵀλ) / ξ`.
    pub eta: f64,
    /// `φ = Σ^{-1/2}λ`.
    pub varphi: DVector<f64>,
    /// `Δ = Σ^{1/2}λ / √(1 + λᵀλ)`.
    pub big_delta: DVector<f64>,
    /// `δ = η Σ^{1/2}λ`.
    pub delta: DVector<f64>,
    /// `μ_b = τ̃ Δ`.
    pub mu_b: DVector<f64>,
    /// `Γ = Σ - ΔΔᵀ`.
    pub gamma: SymMatrix,
    /// `Σ^{1/2}`.
    pub sigma_half: SymMatrix,
}

pub fn esn_derive(p: &EsnParams) -> Result<EsnDerived> {
    let (sigma_half, inv_half) = sym_sqrt_and_inv_sqrt(&p.sigma, PSD_TOL)?;
    let varphi = inv_half.as_matrix() * &p.lambda;
    let ll = p.lambda.norm_squared();
    let root = (1.0 + ll).sqrt();
    let tau_tilde = p.tau / root;
    let log_xi = log_std_cdf(tau_tilde);
    let eta = (log_std_pdf(tau_tilde) - log_xi).exp() / root;
    let s_lambda = sigma_half.as_matrix() * &p.lambda;
    let big_delta = &s_lambda / root;
    let delta = &s_lambda * eta;
    let mu_b = &big_delta * tau_tilde;
    let gamma = SymMatrix::symmetrize(p.sigma.as_matrix() - &big_delta * big_delta.transpose());
    Ok(EsnDerived { xi: log_xi.exp(), log_xi, tau_tilde, eta, varphi, big_delta, delta, mu_b, gamma, sigma_half })
}

/// `(X, X₀) ~ N_{p+1}(μ*, Ω)` with `Ω = [[Σ, -Δ], [-Δᵀ, 1]]`; the ESN is the
/// law of `X` given `X₀ < τ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedNormal {
    pub mu_star: DVector<f64>,
    pub omega: SymMatrix,
    pub tau_tilde: f64,
}

impl AugmentedNormal {
    pub fn new(p: &EsnParams, d: &EsnDerived) -> Self {
        let n = p.dim();
        let mut mu_star = DVector::zeros(n + 1);
        mu_star.rows_mut(0, n).copy_from(&p.mu);
        let mut omega = DMatrix::zeros(n + 1, n + 1);
        omega.view_mut((0, 0), (n, n)).copy_from(p.sigma.as_matrix());
        for i in 0..n {
            omega[(i, n)] = -d.big_delta[i];
            omega[(n, i)] = -d.big_delta[i];
        }
        omega[(n, n)] = 1.0;
        AugmentedNormal { mu_star, omega: SymMatrix::symmetrize(omega), tau_tilde: d.tau_tilde }
    }

    pub fn params(&self) -> NormalParams {
        NormalParams { mu: self.mu_star.clone(), sigma: self.omega.clone() }
    }

    /// `[a*, b*] = [(a, -∞), (b, τ̃)]`.
    pub fn extend_box(&self, bx: &TruncationBox) -> Result<TruncationBox> {
        let mut lo = bx.lower().to_vec();
        let mut hi = bx.upper().to_vec();
        lo.push(f64::NEG_INFINITY);
        hi.push(self.tau_tilde);
        TruncationBox::new(lo, hi)
    }
}

pub fn esn_log_pdf(x: &DVector<f64>, p: &EsnParams) -> Result<f64> {
    let d = esn_derive(p)?;
    log_pdf_with(x, p, &d)
}

pub(crate) fn log_pdf_with(x: &DVector<f64>, p: &EsnParams, d: &EsnDerived) -> Result<f64> {
    let base = mvn_log_pdf(x, &p.normal_part())?;
    let arg = p.tau + d.varphi.dot(&(x - &p.mu));
    Ok(base + log_std_cdf(arg) - d.log_xi)
}

pub fn esn_pdf(x: &DVector<f64>, p: &EsnParams) -> Result<f64> {
    Ok(esn_log_pdf(x, p)?.exp())
}

/// `P(Y <= y) = ξ⁻¹ Φ_{p+1}((y, τ̃); μ*, Ω)`.
pub fn esn_cdf(y: &DVector<f64>, p: &EsnParams, settings: &Settings) -> Result<Probability> {
    let n = p.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let d = esn_derive(p)?;
    let lo = vec![f64::NEG_INFINITY; n + 1];
    let aug = AugmentedNormal::new(p, &d);
    let mut hi: Vec<f64> = y.iter().copied().collect();
    hi.push(d.tau_tilde);
    let joint = rect_prob(&lo, &hi, aug.mu_star.as_slice(), &aug.omega, &settings.qmc);
    let joint = match joint {
        Ok(j) if j.log_value > f64::NEG_INFINITY || d.tau_tilde > settings.limit_tau_tilde => j,
        _ if d.tau_tilde <= settings.limit_tau_tilde => {
            let lim = esn_limit_params(p)?;
            return rect_prob(&lo[..n], y.as_slice(), lim.mu.as_slice(), &lim.sigma, &settings.qmc);
        }
        other => other?,
    };
    let log_value = (joint.log_value - d.log_xi).min(0.0);
    let scale = (-d.log_xi).exp();
    Ok(Probability { value: log_value.exp(), log_value, abs_error: joint.abs_error * scale })
}

/// Law of the kept coordinates: `(μ₁, Σ₁₁, c₁₂ Σ₁₁^{1/2} φ̃₁, c₁₂ τ)`.
pub fn esn_marginal(p: &EsnParams, part: &PartitionIndex) -> Result<EsnParams> {
    check_partition(p, part)?;
    let (k, r) = (part.kept(), part.removed());
    let d = esn_derive(p)?;
    let s11 = p.sigma.principal(k);
    if r.is_empty() {
        return Ok(p.clone());
    }
    let phi1 = select(&d.varphi, k);
    let phi2 = select(&d.varphi, r);
    let s12 = cross_block(&p.sigma, k, r);
    let s11_inv = sym_inverse(&s11)?;
    let s22_1 = p.sigma.principal(r).as_matrix() - s12.transpose() * s11_inv.as_matrix() * &s12;
    let c12 = 1.0 / (1.0 + (phi2.transpose() * &s22_1 * &phi2)[(0, 0)]).sqrt();
    let phi1_tilde = phi1 + s11_inv.as_matrix() * &s12 * &phi2;
    let varphi = phi1_tilde * c12;
    EsnParams::from_varphi(select(&p.mu, k), s11, &varphi, c12 * p.tau)
}

/// Law of the kept coordinates given the removed ones equal `value`:
/// `(μ₂.₁, Σ₂₂.₁, Σ₂₂.₁^{1/2} φ₂, τ + φ̃₁ᵀ(y₁ - μ₁))`.
pub fn esn_conditional(p: &EsnParams, part: &PartitionIndex, value: &DVector<f64>) -> Result<EsnParams> {
    check_partition(p, part)?;
    let (k, g) = (part.kept(), part.removed());
    let d = esn_derive(p)?;
    let (mu_c, sigma_c) = conditional_normal(&p.mu, &p.sigma, part, value)?;
    if g.is_empty() {
        return Ok(p.clone());
    }
    let phi_k = select(&d.varphi, k);
    let phi_g = select(&d.varphi, g);
    let sgg_inv = sym_inverse(&p.sigma.principal(g))?;
    let phi_g_tilde = phi_g + sgg_inv.as_matrix() * cross_block(&p.sigma, g, k) * &phi_k;
    let tau = p.tau + phi_g_tilde.dot(&(value - select(&p.mu, g)));
    EsnParams::from_varphi(mu_c, sigma_c, &phi_k, tau)
}

fn check_partition(p: &EsnParams, part: &PartitionIndex) -> Result<()> {
    if part.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: part.dim() });
    }
    if part.kept().is_empty() {
        return Err(Error::InvalidParameter("partition keeps no coordinate".into()));
    }
    Ok(())
}

/// Untruncated mean and covariance.
pub fn esn_mean_cov(p: &EsnParams) -> Result<FirstTwoMoments> {
    let d = esn_derive(p)?;
    let ll = p.lambda.norm_squared();
    let ez = &p.lambda * d.eta;
    // cov Z = I - E[Z](E[Z] + τλ/(1 + λᵀλ))ᵀ
    let shift = &ez + &p.lambda * (p.tau / (1.0 + ll));
    let n = p.dim();
    let cov_z = DMatrix::identity(n, n) - &ez * shift.transpose();
    let half = d.sigma_half.as_matrix();
    let mean = &p.mu + half * ez;
    let cov = SymMatrix::symmetrize(half * cov_z * half);
    Ok(FirstTwoMoments::from_mean_cov(mean, cov))
}

/// Normal law `N(μ - μ_b, Γ)` approached as `τ̃ → -∞`.
pub fn esn_limit_params(p: &EsnParams) -> Result<NormalParams> {
    let d = esn_derive(p)?;
    Ok(NormalParams { mu: &p.mu - &d.mu_b, sigma: d.gamma })
}

/// `ξ` below which draws are built from a truncated latent instead of by rejection.
const REJECTION_MIN_XI: f64 = 0.1;

/// Stream of ESN draws through `Y = μ - Δ X₀ + Γ^{1/2} Z` with the latent
/// `X₀ ~ N(0, 1)` conditioned on `X₀ < τ̃`.
pub struct EsnSampler {
    mu: DVector<f64>,
    big_delta: DVector<f64>,
    root: DMatrix<f64>,
    tau_tilde: f64,
    rejection: bool,
    rng: ChaCha8Rng,
    z: DVector<f64>,
}

impl EsnSampler {
    pub fn new(p: &EsnParams, seed: u64) -> Result<Self> {
        Self::with_stream(p, seed, 0)
    }

    /// Independent streams for one seed.
    pub fn with_stream(p: &EsnParams, seed: u64, stream: u64) -> Result<Self> {
        let d = esn_derive(p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(EsnSampler {
            mu: p.mu.clone(),
            big_delta: d.big_delta,
            root: gamma_factor(&d.gamma)?,
            tau_tilde: d.tau_tilde,
            rejection: d.xi >= REJECTION_MIN_XI,
            rng,
            z: DVector::zeros(p.dim()),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn draw(&mut self) -> DVector<f64> {
        let latent = if self.rejection {
            loop {
                let x0 = std_quantile(self.uniform());
                if x0 < self.tau_tilde {
                    break x0;
                }
            }
        } else {
            let u = self.uniform();
            sample_truncated_std(f64::NEG_INFINITY, self.tau_tilde, u)
        };
        for i in 0..self.z.len() {
            self.z[i] = std_quantile(self.uniform());
        }
        &self.mu - &self.big_delta * latent + &self.root * &self.z
    }
}

/// `n` draws as the rows of an `n × p` matrix.
pub fn esn_sample(p: &EsnParams, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut sampler = EsnSampler::new(p, seed)?;
    let mut out = DMatrix::zeros(n, p.dim());
    for row in 0..n {
        let y = sampler.draw();
        out.row_mut(row).copy_from(&y.transpose());
    }
    Ok(out)
}

/// A factor `L` with `L Lᵀ = Γ`.
fn gamma_factor(gamma: &SymMatrix) -> Result<DMatrix<f64>> {
    match Cholesky::new(gamma.as_matrix().clone()) {
        Some(c) => Ok(c.l()),
        None => Ok(sym_sqrt(gamma, 1e-8)?.into_matrix()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvn::mvn_pdf;
    use crate::quad::integrate_2d;

    fn esn(mu: &[f64], rows: &[&[f64]], lambda: &[f64], tau: f64) -> EsnParams {
        let s = SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        EsnParams::new(DVector::from_column_slice(mu), s, DVector::from_column_slice(lambda), tau).unwrap()
    }

    fn sn1() -> EsnParams {
        esn(&[0.0], &[&[1.0]], &[1.0], 0.0)
    }

    fn tri() -> EsnParams {
        esn(
            &[0.3, -0.2, 0.5],
            &[&[1.2, 0.4, -0.3], &[0.4, 0.9, 0.2], &[-0.3, 0.2, 1.5]],
            &[1.5, -0.7, 0.4],
            0.6,
        )
    }

    #[test]
    fn normal_constants() {
        let p = EsnParams::normal(NormalParams::standard(2));
        let d = esn_derive(&p).unwrap();
        assert_eq!(d.xi, 0.5);
        assert_eq!(d.big_delta, DVector::zeros(2));
        assert_eq!(d.gamma, SymMatrix::identity(2));
        assert!((d.eta - 0.797_884_560_802_865_4).abs() < 1e-15);
    }

    #[test]
    fn univariate_constants() {
        let d = esn_derive(&sn1()).unwrap();
        assert!((d.big_delta[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((d.gamma.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((d.eta - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        // δ = η Δ √2 = 1/√π
        assert!((d.delta[0] - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn delta_consistency() {
        let p = tri();
        let d = esn_derive(&p).unwrap();
        let root = (1.0 + p.lambda.norm_squared()).sqrt();
        assert!((&d.delta - &d.big_delta * (d.eta * root)).amax() < 1e-12);
        assert!(d.gamma.is_psd(0.0));
    }

    #[test]
    fn log_xi_survives_underflow() {
        let p = esn(&[0.0], &[&[1.0]], &[0.0], -40.0);
        let d = esn_derive(&p).unwrap();
        assert!((d.log_xi - -804.608_442_013_753_8).abs() < 1e-9);
        assert!(d.xi == 0.0 || d.xi < 1e-300);
        assert!(d.eta.is_finite());
    }

    #[test]
    fn pdf_reductions() {
        let s = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let np = NormalParams::new(DVector::from_vec(vec![0.5, -1.0]), s.clone()).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.7]);
        let base = mvn_pdf(&x, &np).unwrap();
        let p = EsnParams::normal(np.clone());
        assert!((esn_pdf(&x, &p).unwrap() - base).abs() < 1e-12 * base);
        let sn = EsnParams::new(np.mu.clone(), s.clone(), DVector::from_vec(vec![1.0, -2.0]), 0.0).unwrap();
        let at_mu = esn_pdf(&np.mu, &sn).unwrap();
        assert!((at_mu - mvn_pdf(&np.mu, &np).unwrap()).abs() < 1e-14);
        let far = EsnParams::new(np.mu.clone(), s, DVector::from_vec(vec![1.0, -2.0]), 50.0).unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [-1.0, 1.0]] {
            let x = DVector::from_column_slice(&x);
            let b = mvn_pdf(&x, &np).unwrap();
            assert!((esn_pdf(&x, &far).unwrap() - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let p = esn(&[0.2, -0.1], &[&[1.0, 0.4], &[0.4, 0.8]], &[2.0, -1.0], -0.7);
        let d = esn_derive(&p).unwrap();
        let r = integrate_2d(
            |x, y| log_pdf_with(&DVector::from_vec(vec![x, y]), &p, &d).unwrap().exp(),
            -12.0,
            12.0,
            |_| (-12.0, 12.0),
            1e-9,
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cdf_values() {
        let s = Settings::default();
        let f = esn_cdf(&DVector::from_vec(vec![0.0]), &sn1(), &s).unwrap();
        assert!((f.value - 0.25).abs() < 1e-13);
        let big = esn_cdf(&DVector::from_vec(vec![40.0, 40.0, 40.0]), &tri(), &s).unwrap();
        assert!((big.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn marginal_of_diagonal_keeps_skewness() {
        let p = esn(&[0.0, 0.0], &[&[2.0, 0.0], &[0.0, 1.0]], &[1.3, 0.0], 0.4);
        let m = esn_marginal(&p, &PartitionIndex::from_kept(2, &[0]).unwrap()).unwrap();
        assert!((m.lambda[0] - 1.3).abs() < 1e-14);
        assert!((m.tau - 0.4).abs() < 1e-15);
    }

    #[test]
    fn marginal_matches_integrated_joint() {
        let p = tri();
        let d = esn_derive(&p).unwrap();
        let m = esn_marginal(&p, &PartitionIndex::from_kept(3, &[0]).unwrap()).unwrap();
        for x in [-1.5, -0.3, 0.4, 1.1, 2.5] {
            let joint = integrate_2d(
                |u, v| log_pdf_with(&DVector::from_vec(vec![x, u, v]), &p, &d).unwrap().exp(),
                -10.0,
                10.0,
                |_| (-11.0, 12.0),
                1e-11,
            )
            .unwrap();
            let lhs = esn_pdf(&DVector::from_vec(vec![x]), &m).unwrap();
            assert!((lhs - joint.value).abs() < 1e-6, "{x}: {lhs} vs {}", joint.value);
        }
    }

    #[test]
    fn marginal_times_conditional_is_joint() {
        let p = tri();
        let x = DVector::from_vec(vec![0.4, -0.9, 1.3]);
        let joint = esn_log_pdf(&x, &p).unwrap();
        for j in 0..3 {
            let part = PartitionIndex::from_kept(3, &[j]).unwrap();
            let rest = PartitionIndex::from_removed(3, &[j]).unwrap();
            let m = esn_marginal(&p, &part).unwrap();
            let c = esn_conditional(&p, &rest, &DVector::from_vec(vec![x[j]])).unwrap();
            let xr = select(&x, rest.kept());
            let total = esn_log_pdf(&DVector::from_vec(vec![x[j]]), &m).unwrap() + esn_log_pdf(&xr, &c).unwrap();
            assert!((total - joint).abs() < 1e-10, "{j}: {total} vs {joint}");
        }
    }

    #[test]
    fn mean_cov_univariate() {
        let m = esn_mean_cov(&sn1()).unwrap();
        assert!((m.mean[0] - 0.564_189_583_547_756_3).abs() < 1e-15);
        assert!((m.cov.get(0, 0) - (1.0 - 1.0 / std::f64::consts::PI)).abs() < 1e-15);
        // λ = 1, τ = 1 against direct integration
        let m = esn_mean_cov(&esn(&[0.0], &[&[1.0]], &[1.0], 1.0)).unwrap();
        assert!((m.mean[0] - 0.288_978_181_372_631_37).abs() < 1e-14);
        assert!((m.cov.get(0, 0) - 0.772_002_520_004_250_9).abs() < 1e-14);
    }

    #[test]
    fn limit_params() {
        let lim = esn_limit_params(&esn(&[0.0], &[&[1.0]], &[1.0], -80.0)).unwrap();
        assert!((lim.mu[0] - 40.0).abs() < 1e-12);
        assert!((lim.sigma.get(0, 0) - 0.5).abs() < 1e-15);
        let n = EsnParams::normal(NormalParams::standard(2));
        assert_eq!(esn_limit_params(&n).unwrap(), NormalParams::standard(2));
    }

    #[test]
    fn pdf_approaches_limit() {
        let mut last = f64::INFINITY;
        for tt in [-10.0, -20.0, -30.0, -35.0] {
            let p = esn(&[0.0], &[&[1.0]], &[1.0], tt * 2f64.sqrt());
            let lim = esn_limit_params(&p).unwrap();
            let mut gap: f64 = 0.0;
            for k in -300..=300 {
                let x = DVector::from_vec(vec![lim.mu[0] + 0.01 * k as f64]);
                gap = gap.max((esn_pdf(&x, &p).unwrap() - mvn_pdf(&x, &lim).unwrap()).abs());
            }
            assert!(gap < last, "{tt}: {gap}");
            last = gap;
        }
        // the gap shrinks like 1/|τ̃|; at the limit mean it is already small
        let p = esn(&[0.0], &[&[1.0]], &[1.0], -35.0 * 2f64.sqrt());
        let lim = esn_limit_params(&p).unwrap();
        let a = esn_pdf(&lim.mu, &p).unwrap();
        let b = mvn_pdf(&lim.mu, &lim).unwrap();
        assert!((a / b - 1.0).abs() < 1e-3);
    }

    fn sample_moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.nrows() as f64;
        let mean = x.row_mean().transpose();
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j]);
        (mean, centered.transpose() * &centered / (n - 1.0))
    }

    #[test]
    fn sampler_moments() {
        for tau in [0.6, -10.0] {
            let mut p = tri();
            p.tau = tau;
            let exact = esn_mean_cov(&p).unwrap();
            let n = 200_000;
            let (mean, cov) = sample_moments(&esn_sample(&p, n, 7).unwrap());
            for i in 0..3 {
                let se = (exact.cov.get(i, i) / n as f64).sqrt();
                assert!((mean[i] - exact.mean[i]).abs() < 4.5 * se, "tau {tau} coord {i}");
                let se2 = exact.cov.get(i, i) * (2.0 / n as f64).sqrt();
                assert!((cov[(i, i)] - exact.cov.get(i, i)).abs() < 6.0 * se2, "tau {tau} var {i}");
            }
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = esn_sample(&tri(), 10, 3).unwrap();
        let b = esn_sample(&tri(), 10, 3).unwrap();
        assert_eq!(a, b);
    }
}
