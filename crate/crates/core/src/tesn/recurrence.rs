//! The skewed product-moment recurrence
//! `𝓕_{κ+e_i} = μ_i 𝓕_κ + δ_i F_κ(a, b; μ - μ_b, Γ) + Σ_j σ_ij d_{κ,j}`,
//! where `d_{κ,j}` collects `k_j 𝓕_{κ-e_j}` and the two edge terms: the
//! univariate marginal density at `a_j` or `b_j` times a `(p-1)`-dimensional
//! `𝓕` under the conditional law.
//!
//! Parameters are carried as `φ = Σ^{-1/2}λ`, which is what the marginal and
//! conditional maps act on, so no matrix square roots are needed below the
//! top level. Nodes whose `τ̃` is at or below the limit threshold delegate to
//! the normal recurrence on `N(μ - μ_b, Γ)`.

use nalgebra::{DMatrix, DVector};

use super::{edge_geometry, EdgeGeometry};
use crate::error::{Error, Result};
use crate::esn::EsnParams;
use crate::linalg::SymMatrix;
use crate::mvn::rect_prob;
use crate::mvn::TruncationBox;
use crate::settings::Settings;
use crate::tn::{FirstTwoMoments, MomentTable, MultiIndex, TnRecurrence};

struct Edge {
    limit: f64,
    /// `ln ESN_1(limit) + ln 𝓛_child - ln 𝓛_self`.
    log_weight: f64,
    child: Option<Box<TesnRecurrence>>,
}

enum EdgeSlot {
    Unbuilt,
    Built([Option<Edge>; 2]),
}

struct Skewed {
    delta: DVector<f64>,
    /// `W ~ N(μ - μ_b, Γ)` on the same box; absent when `δ = 0`.
    normal: Option<TnRecurrence>,
    /// `ln L_W - ln 𝓛`.
    log_ratio: f64,
    table: MomentTable,
    abs_error: f64,
    edges: Vec<EdgeSlot>,
}

enum Engine {
    Skewed(Skewed),
    Limit(TnRecurrence),
}

/// Memoized `𝓕^p_κ(a, b; μ, Σ, λ, τ)` for one box and parameter set.
pub struct TesnRecurrence {
    lower: Vec<f64>,
    upper: Vec<f64>,
    mu: DVector<f64>,
    sigma: SymMatrix,
    varphi: DVector<f64>,
    tau: f64,
    settings: Settings,
    engine: Engine,
}

impl TesnRecurrence {
    pub fn new(bx: &TruncationBox, params: &EsnParams, settings: &Settings) -> Result<Self> {
        if bx.dim() != params.dim() {
            return Err(Error::DimensionMismatch { expected: params.dim(), got: bx.dim() });
        }
        let d = crate::esn::esn_derive(params)?;
        Self::from_parts(
            bx.lower().to_vec(),
            bx.upper().to_vec(),
            params.mu.clone(),
            params.sigma.clone(),
            d.varphi,
            params.tau,
            settings,
        )
    }

    pub(crate) fn from_parts(
        lower: Vec<f64>,
        upper: Vec<f64>,
        mu: DVector<f64>,
        sigma: SymMatrix,
        varphi: DVector<f64>,
        tau: f64,
        settings: &Settings,
    ) -> Result<Self> {
        let p = mu.len();
        let s_phi = sigma.as_matrix() * &varphi;
        let ll = varphi.dot(&s_phi);
        let root = (1.0 + ll).sqrt();
        let tau_tilde = tau / root;
        let big_delta = &s_phi / root;
        let shift = &big_delta * tau_tilde;
        let gamma = SymMatrix::symmetrize(sigma.as_matrix() - &big_delta * big_delta.transpose());
        let cfg = &settings.qmc;
        let max_order = settings.max_moment_order;

        let engine = if ll > 0.0 && tau_tilde <= settings.limit_tau_tilde {
            let m: Vec<f64> = (&mu - &shift).iter().copied().collect();
            Engine::Limit(TnRecurrence::from_parts(lower.clone(), upper.clone(), m, gamma, cfg, max_order)?)
        } else {
            let log_xi = crate::mvn::univariate::log_std_cdf(tau_tilde);
            let eta = (crate::mvn::univariate::log_std_pdf(tau_tilde) - log_xi).exp() / root;
            let delta = &s_phi * eta;

            let mut lo = lower.clone();
            let mut hi = upper.clone();
            let mut m: Vec<f64> = mu.iter().copied().collect();
            lo.push(f64::NEG_INFINITY);
            hi.push(tau_tilde);
            m.push(0.0);
            let mut omega = DMatrix::zeros(p + 1, p + 1);
            omega.view_mut((0, 0), (p, p)).copy_from(sigma.as_matrix());
            for i in 0..p {
                omega[(i, p)] = -big_delta[i];
                omega[(p, i)] = -big_delta[i];
            }
            omega[(p, p)] = 1.0;
            let joint = rect_prob(&lo, &hi, &m, &SymMatrix::symmetrize(omega), cfg)?;
            let log_l = (joint.log_value - log_xi).min(0.0);
            let abs_error = joint.abs_error * (-log_xi).exp();

            let (normal, log_ratio) = if delta.iter().all(|&x| x == 0.0) {
                (None, f64::NEG_INFINITY)
            } else {
                let w_mu: Vec<f64> = (&mu - &shift).iter().copied().collect();
                let w = TnRecurrence::from_parts(lower.clone(), upper.clone(), w_mu, gamma, cfg, max_order)?;
                let r = w.log_prob() - log_l;
                (Some(w), r)
            };
            Engine::Skewed(Skewed {
                delta,
                normal,
                log_ratio,
                table: MomentTable::new(p, log_l),
                abs_error,
                edges: (0..p).map(|_| EdgeSlot::Unbuilt).collect(),
            })
        };
        Ok(TesnRecurrence { lower, upper, mu, sigma, varphi, tau, settings: *settings, engine })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// True when the node was replaced by its limiting normal law.
    pub fn is_limit(&self) -> bool {
        matches!(self.engine, Engine::Limit(_))
    }

    /// `ln 𝓛_p`.
    pub fn log_prob(&self) -> f64 {
        match &self.engine {
            Engine::Skewed(s) => s.table.log_scale(),
            Engine::Limit(t) => t.log_prob(),
        }
    }

    pub fn prob_abs_error(&self) -> f64 {
        match &self.engine {
            Engine::Skewed(s) => s.abs_error,
            Engine::Limit(t) => t.prob_abs_error(),
        }
    }

    /// `𝓕_κ`, unnormalized.
    pub fn fk(&mut self, k: &MultiIndex) -> Result<f64> {
        if let Engine::Limit(t) = &mut self.engine {
            return t.fk(k);
        }
        self.check(k)?;
        let log_l = self.log_prob();
        if log_l == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        Ok(self.scaled(k)? * log_l.exp())
    }

    /// `E[Y^κ | a <= Y <= b] = 𝓕_κ / 𝓛_p`.
    pub fn moment(&mut self, k: &MultiIndex) -> Result<f64> {
        if let Engine::Limit(t) = &mut self.engine {
            return t.moment(k);
        }
        self.check(k)?;
        if self.log_prob() == f64::NEG_INFINITY {
            return Err(Error::DegenerateBox { log_prob: f64::NEG_INFINITY });
        }
        self.scaled(k)
    }

    /// The memoized normalized values computed so far.
    pub fn table(&self) -> &MomentTable {
        match &self.engine {
            Engine::Skewed(s) => &s.table,
            Engine::Limit(t) => t.table(),
        }
    }

    fn check(&self, k: &MultiIndex) -> Result<()> {
        if k.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: k.dim() });
        }
        let max = self.settings.max_moment_order;
        for (i, &o) in k.as_slice().iter().enumerate() {
            if o > max {
                return Err(Error::MomentOrderTooLarge { index: i, order: o, max });
            }
        }
        Ok(())
    }

    fn scaled(&mut self, k: &MultiIndex) -> Result<f64> {
        let skewed = match &mut self.engine {
            Engine::Limit(t) => return t.moment(k),
            Engine::Skewed(s) => s,
        };
        if let Some(v) = skewed.table.normalized(k) {
            return Ok(v);
        }
        let i = k.as_slice().iter().position(|&o| o > 0).expect("zero index is always memoized");
        let base = k.minus(i);
        let mut v = self.mu[i] * self.scaled(&base)?;
        if let Engine::Skewed(s) = &mut self.engine {
            if let Some(w) = s.normal.as_mut() {
                if s.delta[i] != 0.0 && s.log_ratio > f64::NEG_INFINITY {
                    v += s.delta[i] * s.log_ratio.exp() * w.moment(&base)?;
                }
            }
        }
        for j in 0..self.dim() {
            let s = self.sigma.get(i, j);
            if s == 0.0 {
                continue;
            }
            v += s * self.d_term(&base, j)?;
        }
        if let Engine::Skewed(s) = &mut self.engine {
            s.table.insert(k.clone(), v);
        }
        Ok(v)
    }

    /// `d_{κ,j} / 𝓛`.
    fn d_term(&mut self, k: &MultiIndex, j: usize) -> Result<f64> {
        let kj = k.get(j);
        let mut d = if kj > 0 { kj as f64 * self.scaled(&k.minus(j))? } else { 0.0 };
        self.build_edges(j)?;
        let sub = k.without(j);
        let Engine::Skewed(s) = &mut self.engine else { unreachable!("limit nodes delegate") };
        if let EdgeSlot::Built(sides) = &mut s.edges[j] {
            for (side, sign) in sides.iter_mut().zip([1.0, -1.0]) {
                let Some(edge) = side else { continue };
                if edge.log_weight == f64::NEG_INFINITY {
                    continue;
                }
                let inner = match edge.child.as_mut() {
                    Some(child) => child.moment_or_zero(&sub)?,
                    None => 1.0,
                };
                d += sign * edge.limit.powi(kj as i32) * edge.log_weight.exp() * inner;
            }
        }
        Ok(d)
    }

    fn moment_or_zero(&mut self, k: &MultiIndex) -> Result<f64> {
        if self.log_prob() == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        self.moment(k)
    }

    fn build_edges(&mut self, j: usize) -> Result<()> {
        let log_l = self.log_prob();
        let Engine::Skewed(s) = &self.engine else { return Ok(()) };
        if matches!(s.edges[j], EdgeSlot::Built(_)) {
            return Ok(());
        }
        let geo: EdgeGeometry = edge_geometry(&self.mu, &self.sigma, &self.varphi, self.tau, j);
        let keep: Vec<usize> = (0..self.dim()).filter(|&k| k != j).collect();
        let lower: Vec<f64> = keep.iter().map(|&k| self.lower[k]).collect();
        let upper: Vec<f64> = keep.iter().map(|&k| self.upper[k]).collect();
        let mut sides: [Option<Edge>; 2] = [None, None];
        for (slot, limit) in sides.iter_mut().zip([self.lower[j], self.upper[j]]) {
            if !limit.is_finite() {
                continue;
            }
            let log_density = geo.log_edge_pdf(limit);
            let edge = if keep.is_empty() {
                Edge { limit, log_weight: log_density - log_l, child: None }
            } else {
                let (mu, tau) = geo.child_at(limit);
                let child = TesnRecurrence::from_parts(
                    lower.clone(),
                    upper.clone(),
                    mu,
                    geo.sigma.clone(),
                    geo.varphi.clone(),
                    tau,
                    &self.settings,
                )?;
                Edge { limit, log_weight: log_density + child.log_prob() - log_l, child: Some(Box::new(child)) }
            };
            *slot = Some(edge);
        }
        if let Engine::Skewed(s) = &mut self.engine {
            s.edges[j] = EdgeSlot::Built(sides);
        }
        Ok(())
    }
}

/// `𝓕^p_κ(a, b; μ, Σ, λ, τ) = ∫_a^b x^κ ESN_p(x) dx` by the recurrence.
pub fn tesn_fk(bx: &TruncationBox, params: &EsnParams, k: &MultiIndex, settings: &Settings) -> Result<f64> {
    TesnRecurrence::new(bx, params, settings)?.fk(k)
}

/// `𝓕¹_0 ..= 𝓕¹_{k_max}` of a univariate law on `[a, b]`, stored normalized.
pub fn tesn_fk_univariate(a: f64, b: f64, params: &EsnParams, k_max: u32, settings: &Settings) -> Result<MomentTable> {
    if params.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: params.dim() });
    }
    let bx = TruncationBox::new(vec![a], vec![b])?;
    let mut rec = TesnRecurrence::new(&bx, params, settings)?;
    let mut table = MomentTable::new(1, rec.log_prob());
    if rec.log_prob() > f64::NEG_INFINITY {
        for k in 1..=k_max {
            let idx = MultiIndex::new(vec![k]);
            let v = rec.moment(&idx)?;
            table.insert(idx, v);
        }
    }
    Ok(table)
}

/// First two moments from the order-one and order-two recurrence terms.
pub fn tesn_first_two_recurrence(bx: &TruncationBox, params: &EsnParams, settings: &Settings) -> Result<FirstTwoMoments> {
    let mut rec = TesnRecurrence::new(bx, params, settings)?;
    let p = rec.dim();
    let mut mean = DVector::zeros(p);
    for i in 0..p {
        mean[i] = rec.moment(&MultiIndex::unit(p, i))?;
    }
    let mut raw = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = rec.moment(&MultiIndex::unit(p, i).plus(j))?;
            raw[(i, j)] = v;
            raw[(j, i)] = v;
        }
    }
    Ok(FirstTwoMoments::from_mean_raw2(mean, SymMatrix::symmetrize(raw)))
}
