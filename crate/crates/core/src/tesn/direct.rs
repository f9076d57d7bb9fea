//! Mean and covariance straight from the order-one and order-two recurrence
//! identities:
//! `E[Y] = μ + (L δ + Σ(q_a - q_b)) / 𝓛` and
//! `E[YYᵀ] = μ E[Y]ᵀ + (L δ E[W]ᵀ + Σ D) / 𝓛`, with
//! `W ~ TN(μ - μ_b, Γ; [a, b])`.

use nalgebra::{DMatrix, DVector};

use super::{edge_geometry, limit_params, tesn_prob, uses_limit};
use crate::error::{Error, Result};
use crate::esn::{esn_derive, EsnParams};
use crate::linalg::SymMatrix;
use crate::mvn::{rect_prob, TruncationBox};
use crate::settings::Settings;
use crate::tn::{tn_first_two_corrected, FirstTwoMoments, MultiIndex, TnRecurrence};

/// Conditioning data for coordinate `j` of the recurrence. Sides with an
/// infinite limit carry `None` and a zero density.
#[derive(Debug, Clone)]
pub struct EdgeConditional {
    pub j: usize,
    pub c: f64,
    pub varphi_tilde: f64,
    pub sigma_tilde: SymMatrix,
    pub mu_tilde_a: Option<DVector<f64>>,
    pub mu_tilde_b: Option<DVector<f64>>,
    pub tau_a: Option<f64>,
    pub tau_b: Option<f64>,
    /// Univariate marginal density at `a_j` and `b_j`.
    pub edge_pdf_a: f64,
    pub edge_pdf_b: f64,
    /// `φ_(j)`, the skewness of every conditional law in `φ` form.
    pub varphi_rest: DVector<f64>,
}

impl EdgeConditional {
    pub fn new(bx: &TruncationBox, params: &EsnParams, j: usize) -> Result<Self> {
        let p = params.dim();
        if bx.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, got: bx.dim() });
        }
        if j >= p {
            return Err(Error::IndexOutOfRange { index: j, dim: p });
        }
        let d = esn_derive(params)?;
        let geo = edge_geometry(&params.mu, &params.sigma, &d.varphi, params.tau, j);
        let side = |x: f64| {
            if x.is_finite() {
                let (mu, tau) = geo.child_at(x);
                (Some(mu), Some(tau), geo.log_edge_pdf(x).exp())
            } else {
                (None, None, 0.0)
            }
        };
        let (mu_tilde_a, tau_a, edge_pdf_a) = side(bx.lower()[j]);
        let (mu_tilde_b, tau_b, edge_pdf_b) = side(bx.upper()[j]);
        Ok(EdgeConditional {
            j,
            c: geo.c,
            varphi_tilde: geo.varphi_tilde,
            sigma_tilde: geo.sigma.clone(),
            mu_tilde_a,
            mu_tilde_b,
            tau_a,
            tau_b,
            edge_pdf_a,
            edge_pdf_b,
            varphi_rest: geo.varphi,
        })
    }

    /// The conditional law of the other coordinates at the `a_j` (`upper == false`)
    /// or `b_j` edge.
    pub fn child_params(&self, upper: bool) -> Option<Result<EsnParams>> {
        let (mu, tau) = if upper { (&self.mu_tilde_b, self.tau_b) } else { (&self.mu_tilde_a, self.tau_a) };
        let (mu, tau) = (mu.as_ref()?, tau?);
        Some(EsnParams::from_varphi(mu.clone(), self.sigma_tilde.clone(), &self.varphi_rest, tau))
    }
}

/// `d_0 / 𝓛 = (q_a - q_b) / 𝓛` and `D / 𝓛 = [d_{e_1}, ..., d_{e_p}] / 𝓛`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceTerms {
    pub d: DVector<f64>,
    pub big_d: DMatrix<f64>,
}

impl RecurrenceTerms {
    /// Assembles both terms from the edge data. `log_l` is `ln 𝓛`.
    pub fn new(bx: &TruncationBox, edges: &[EdgeConditional], log_l: f64, settings: &Settings) -> Result<Self> {
        let p = edges.len();
        let mut d = DVector::zeros(p);
        let mut big_d = DMatrix::identity(p, p);
        for e in edges {
            let j = e.j;
            let keep: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            for (upper, sign, limit, pdf) in [
                (false, 1.0, bx.lower()[j], e.edge_pdf_a),
                (true, -1.0, bx.upper()[j], e.edge_pdf_b),
            ] {
                if !limit.is_finite() || pdf == 0.0 {
                    continue;
                }
                let (q, child_mean) = if keep.is_empty() {
                    ((pdf.ln() - log_l).exp(), DVector::zeros(0))
                } else {
                    let child = e.child_params(upper).expect("finite edge has a child")?;
                    let sub = sub_box(bx, &keep)?;
                    let lc = tesn_prob(&sub, &child, settings)?;
                    if lc.log_value == f64::NEG_INFINITY {
                        continue;
                    }
                    let q = (pdf.ln() + lc.log_value - log_l).exp();
                    (q, mean_given_prob(&sub, &child, lc.log_value, settings)?)
                };
                d[j] += sign * q;
                big_d[(j, j)] += sign * limit * q;
                for (x, &k) in keep.iter().enumerate() {
                    big_d[(j, k)] += sign * q * child_mean[x];
                }
            }
        }
        Ok(RecurrenceTerms { d, big_d })
    }
}

fn sub_box(bx: &TruncationBox, keep: &[usize]) -> Result<TruncationBox> {
    TruncationBox::new(keep.iter().map(|&k| bx.lower()[k]).collect(), keep.iter().map(|&k| bx.upper()[k]).collect())
}

/// `(q_a - q_b) / 𝓛`, from the edge densities and the child probabilities only.
fn first_order_terms(bx: &TruncationBox, params: &EsnParams, log_l: f64, settings: &Settings) -> Result<DVector<f64>> {
    let p = params.dim();
    let mut d = DVector::zeros(p);
    for j in 0..p {
        let e = EdgeConditional::new(bx, params, j)?;
        let keep: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        for (upper, sign, pdf) in [(false, 1.0, e.edge_pdf_a), (true, -1.0, e.edge_pdf_b)] {
            if pdf == 0.0 {
                continue;
            }
            let log_child = if keep.is_empty() {
                0.0
            } else {
                let child = e.child_params(upper).expect("finite edge has a child")?;
                tesn_prob(&sub_box(bx, &keep)?, &child, settings)?.log_value
            };
            d[j] += sign * (pdf.ln() + log_child - log_l).exp();
        }
    }
    Ok(d)
}

/// `E[Y]` by the order-one identity when `ln 𝓛` is already known.
fn mean_given_prob(bx: &TruncationBox, params: &EsnParams, log_l: f64, settings: &Settings) -> Result<DVector<f64>> {
    let dv = esn_derive(params)?;
    if uses_limit(params, &dv, settings) {
        return Ok(tn_first_two_corrected(bx, &limit_params(params, &dv), settings)?.mean);
    }
    let ratio = if dv.delta.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        let w = limit_params(params, &dv);
        let lw = rect_prob(bx.lower(), bx.upper(), w.mu.as_slice(), &w.sigma, &settings.qmc)?;
        (lw.log_value - log_l).exp()
    };
    let d = first_order_terms(bx, params, log_l, settings)?;
    Ok(&params.mu + &dv.delta * ratio + params.sigma.as_matrix() * d)
}

/// `E[Y]` by the order-one identity.
pub fn tesn_mean_direct(bx: &TruncationBox, params: &EsnParams, settings: &Settings) -> Result<DVector<f64>> {
    if bx.dim() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: bx.dim() });
    }
    let log_l = tesn_prob(bx, params, settings)?.log_value;
    if log_l == f64::NEG_INFINITY {
        return Err(Error::DegenerateBox { log_prob: log_l });
    }
    mean_given_prob(bx, params, log_l, settings)
}

/// Mean and covariance through the recurrence identities; cross-checks
/// [`tesn_mean_cov`](super::tesn_mean_cov).
pub fn tesn_mean_cov_direct(bx: &TruncationBox, params: &EsnParams, settings: &Settings) -> Result<FirstTwoMoments> {
    let p = params.dim();
    if bx.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, got: bx.dim() });
    }
    let dv = esn_derive(params)?;
    if uses_limit(params, &dv, settings) {
        return tn_first_two_corrected(bx, &limit_params(params, &dv), settings);
    }
    let log_l = tesn_prob(bx, params, settings)?.log_value;
    if log_l == f64::NEG_INFINITY {
        return Err(Error::DegenerateBox { log_prob: log_l });
    }
    let (ratio, w_mean) = if dv.delta.iter().all(|&x| x == 0.0) {
        (0.0, DVector::zeros(p))
    } else {
        let mut w = TnRecurrence::new(bx, &limit_params(params, &dv), settings)?;
        if w.log_prob() == f64::NEG_INFINITY {
            (0.0, DVector::zeros(p))
        } else {
            let m = (0..p).map(|i| w.moment(&MultiIndex::unit(p, i))).collect::<Result<Vec<_>>>()?;
            ((w.log_prob() - log_l).exp(), DVector::from_vec(m))
        }
    };
    let edges: Vec<EdgeConditional> = (0..p).map(|j| EdgeConditional::new(bx, params, j)).collect::<Result<_>>()?;
    let terms = RecurrenceTerms::new(bx, &edges, log_l, settings)?;

    let sigma = params.sigma.as_matrix();
    let mean = &params.mu + &dv.delta * ratio + sigma * &terms.d;
    let raw = &params.mu * mean.transpose() + (&dv.delta * ratio) * w_mean.transpose() + sigma * &terms.big_d;
    Ok(FirstTwoMoments::from_mean_raw2(mean, SymMatrix::symmetrize(raw)))
}
