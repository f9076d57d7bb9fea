//! First two truncated normal moments from the derivatives of the moment
//! generating function at zero, in correlation form:
//! `E[X] = R (q_a - q_b) / L` and `E[XXᵀ] = R + R H R / L`.
//!
//! The off-diagonal `h_ij` are four corner terms `φ₂ · L_{p-2}`; the diagonal
//! is recycled as `h_ii = a_i q_{a,i} - b_i q_{b,i} - R_{i,(i)} H_{(i),i}`.
//! All of `q` and `H` are kept divided by `L`, with every product formed in
//! log space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::FirstTwoMoments;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::mvn::univariate::log_std_pdf;
use crate::mvn::{rect_prob, NormalParams, TruncationBox};
use crate::settings::Settings;

/// Intermediate quantities of the MGF route, in standardized coordinates.
#[derive(Debug, Clone)]
pub struct TnMgfWork {
    /// Correlation matrix `S⁻¹ Σ S⁻¹`.
    pub r: SymMatrix,
    /// Standard deviations, the diagonal of `S`.
    pub s: DVector<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `ln L`.
    pub log_l: f64,
    pub q_a: DVector<f64>,
    pub q_b: DVector<f64>,
    /// `H / L` with the recycled diagonal.
    pub h: SymMatrix,
}

impl TnMgfWork {
    pub fn new(bx: &TruncationBox, params: &NormalParams, settings: &Settings) -> Result<Self> {
        let p = params.dim();
        if bx.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, got: bx.dim() });
        }
        let cfg = &settings.qmc;
        let s = DVector::from_iterator(p, (0..p).map(|i| params.sigma.get(i, i).sqrt()));
        if s.iter().any(|&x| !(x > 0.0)) {
            let (min_eig, max_eig) = params.sigma.eigen_range();
            return Err(Error::NotPsd { min_eig, max_eig });
        }
        let r = SymMatrix::symmetrize(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                params.sigma.get(i, j) / (s[i] * s[j])
            }
        }));
        let a: Vec<f64> = (0..p).map(|i| (bx.lower()[i] - params.mu[i]) / s[i]).collect();
        let b: Vec<f64> = (0..p).map(|i| (bx.upper()[i] - params.mu[i]) / s[i]).collect();

        let l = rect_prob(&a, &b, &vec![0.0; p], &r, cfg)?;
        if l.log_value == f64::NEG_INFINITY {
            return Err(Error::DegenerateBox { log_prob: l.log_value });
        }
        let log_l = l.log_value;

        let mut q_a = DVector::zeros(p);
        let mut q_b = DVector::zeros(p);
        for i in 0..p {
            let keep: Vec<usize> = (0..p).filter(|&k| k != i).collect();
            let cov = SymMatrix::symmetrize(DMatrix::from_fn(p - 1, p - 1, |x, y| {
                let (u, v) = (keep[x], keep[y]);
                r.get(u, v) - r.get(u, i) * r.get(i, v)
            }));
            let lo: Vec<f64> = keep.iter().map(|&k| a[k]).collect();
            let hi: Vec<f64> = keep.iter().map(|&k| b[k]).collect();
            for (slot, limit) in [(&mut q_a[i], a[i]), (&mut q_b[i], b[i])] {
                if !limit.is_finite() {
                    continue;
                }
                let lp = if p == 1 {
                    0.0
                } else {
                    let mu: Vec<f64> = keep.iter().map(|&k| r.get(k, i) * limit).collect();
                    rect_prob(&lo, &hi, &mu, &cov, cfg)?.log_value
                };
                *slot = (log_std_pdf(limit) + lp - log_l).exp();
            }
        }

        let mut h = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in (i + 1)..p {
                let rho = r.get(i, j);
                let det = (1.0 - rho) * (1.0 + rho);
                if !(det > 0.0) {
                    return Err(Error::SingularBlock { cond: f64::INFINITY });
                }
                let keep: Vec<usize> = (0..p).filter(|&k| k != i && k != j).collect();
                // rows of R_(ij),[ij] R_[ij]^{-1}
                let gain: Vec<(f64, f64)> = keep
                    .iter()
                    .map(|&k| {
                        let (ri, rj) = (r.get(k, i), r.get(k, j));
                        ((ri - rho * rj) / det, (rj - rho * ri) / det)
                    })
                    .collect();
                let m = keep.len();
                let cov = SymMatrix::symmetrize(DMatrix::from_fn(m, m, |x, y| {
                    let (u, v) = (keep[x], keep[y]);
                    r.get(u, v) - gain[x].0 * r.get(i, v) - gain[x].1 * r.get(j, v)
                }));
                let lo: Vec<f64> = keep.iter().map(|&k| a[k]).collect();
                let hi: Vec<f64> = keep.iter().map(|&k| b[k]).collect();
                let mut acc = 0.0;
                for (alpha, sa) in [(a[i], 1.0), (b[i], -1.0)] {
                    if !alpha.is_finite() {
                        continue;
                    }
                    for (beta, sb) in [(a[j], 1.0), (b[j], -1.0)] {
                        if !beta.is_finite() {
                            continue;
                        }
                        let log_phi2 = -(alpha * alpha - 2.0 * rho * alpha * beta + beta * beta) / (2.0 * det)
                            - (2.0 * PI).ln()
                            - 0.5 * det.ln();
                        let lp = if m == 0 {
                            0.0
                        } else {
                            let mu: Vec<f64> = gain.iter().map(|&(gi, gj)| gi * alpha + gj * beta).collect();
                            rect_prob(&lo, &hi, &mu, &cov, cfg)?.log_value
                        };
                        acc += sa * sb * (log_phi2 + lp - log_l).exp();
                    }
                }
                h[(i, j)] = acc;
                h[(j, i)] = acc;
            }
        }
        for i in 0..p {
            let mut d = 0.0;
            if a[i].is_finite() {
                d += a[i] * q_a[i];
            }
            if b[i].is_finite() {
                d -= b[i] * q_b[i];
            }
            for k in 0..p {
                if k != i {
                    d -= r.get(i, k) * h[(k, i)];
                }
            }
            h[(i, i)] = d;
        }

        Ok(TnMgfWork { r, s, a, b, log_l, q_a, q_b, h: SymMatrix::symmetrize(h) })
    }

    /// Moments of the standardized vector `X = S⁻¹(W - μ)`.
    pub fn standardized(&self) -> FirstTwoMoments {
        let rm = self.r.as_matrix();
        let mean = rm * (&self.q_a - &self.q_b);
        let raw2 = rm + rm * self.h.as_matrix() * rm;
        FirstTwoMoments::from_mean_raw2(mean, SymMatrix::symmetrize(raw2))
    }
}

/// First two moments of `W ~ TN(μ, Σ; [a, b])` via the MGF route.
pub fn tn_first_two_mgf(bx: &TruncationBox, params: &NormalParams, settings: &Settings) -> Result<FirstTwoMoments> {
    let work = TnMgfWork::new(bx, params, settings)?;
    let x = work.standardized();
    let p = params.dim();
    let mean = DVector::from_iterator(p, (0..p).map(|i| params.mu[i] + work.s[i] * x.mean[i]));
    let cov = x.cov.scale_both(work.s.as_slice());
    let out = FirstTwoMoments::from_mean_cov(mean, cov);
    if !out.is_finite() {
        return Err(Error::DegenerateBox { log_prob: work.log_l });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvn::univariate::{std_cdf, std_pdf};
    use crate::tn::recurrence::tn_first_two_recurrence;

    fn params(mu: &[f64], rows: &[&[f64]]) -> NormalParams {
        let s = SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        NormalParams::new(DVector::from_column_slice(mu), s).unwrap()
    }

    #[test]
    fn half_normal() {
        let bx = TruncationBox::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        let m = tn_first_two_mgf(&bx, &NormalParams::standard(1), &Settings::default()).unwrap();
        assert!((m.mean[0] - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!((m.raw2.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn univariate_variance_formula() {
        let (a, b) = (-0.3, 2.2);
        let bx = TruncationBox::new(vec![a], vec![b]).unwrap();
        let m = tn_first_two_mgf(&bx, &NormalParams::standard(1), &Settings::default()).unwrap();
        let z = std_cdf(b) - std_cdf(a);
        let mean = (std_pdf(a) - std_pdf(b)) / z;
        let var = 1.0 + (a * std_pdf(a) - b * std_pdf(b)) / z - mean * mean;
        assert!((m.mean[0] - mean).abs() < 1e-15);
        assert!((m.cov.get(0, 0) - var).abs() < 1e-14);
    }

    #[test]
    fn symmetric_box_has_zero_mean() {
        let pr = params(&[0.0, 0.0, 0.0], &[&[1.0, 0.4, -0.2], &[0.4, 2.0, 0.3], &[-0.2, 0.3, 1.5]]);
        let bx = TruncationBox::new(vec![-1.0, -2.0, -0.5], vec![1.0, 2.0, 0.5]).unwrap();
        let m = tn_first_two_mgf(&bx, &pr, &Settings::default()).unwrap();
        assert!(m.mean.amax() < 1e-6, "{}", m.mean);
    }

    #[test]
    fn agrees_with_recurrence_bivariate() {
        let pr = params(&[0.3, -0.4], &[&[1.5, -0.6], &[-0.6, 0.8]]);
        let bx = TruncationBox::new(vec![-1.0, f64::NEG_INFINITY], vec![0.8, 0.2]).unwrap();
        let s = Settings::default();
        let a = tn_first_two_mgf(&bx, &pr, &s).unwrap();
        let b = tn_first_two_recurrence(&bx, &pr, &s).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-13, "{a:?}\n{b:?}");
    }

    #[test]
    fn agrees_with_recurrence_trivariate() {
        let pr = params(&[0.1, 0.0, -0.2], &[&[1.0, 0.3, 0.2], &[0.3, 1.2, -0.4], &[0.2, -0.4, 0.9]]);
        let bx = TruncationBox::new(vec![-0.5, -1.0, f64::NEG_INFINITY], vec![1.5, 0.7, 0.4]).unwrap();
        let s = Settings::default();
        let a = tn_first_two_mgf(&bx, &pr, &s).unwrap();
        let b = tn_first_two_recurrence(&bx, &pr, &s).unwrap();
        assert!(a.max_abs_diff(&b) < 5e-5, "{a:?}\n{b:?}");
    }
}
