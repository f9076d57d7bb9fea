//! The normal product-moment recurrence
//! `F_{κ+e_i} = μ_i F_κ + Σ_j σ_ij c_{κ,j}` with
//! `c_{κ,j} = k_j F_{κ-e_j} + a_j^{k_j} φ(a_j; μ_j, σ_jj) F^{p-1}_{κ(j)}(·; μ̃^a_j, Σ̃_j) - (same at b_j)`.
//!
//! Each edge sub-problem is another `TnRecurrence` one dimension down, built
//! on first use. Every level stores moments divided by its own box
//! probability, and edge terms carry the ratio of scales in log space.

use nalgebra::DVector;

use super::{FirstTwoMoments, MomentTable, MultiIndex};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::mvn::univariate::log_std_pdf;
use crate::mvn::{rect_prob, NormalParams, TruncationBox};
use crate::settings::{QmcConfig, Settings};

struct Edge {
    limit: f64,
    /// `ln φ(limit; μ_j, σ_jj) + ln L_child - ln L_self`.
    log_weight: f64,
    /// `None` when the parent is univariate (the child integral is 1).
    child: Option<Box<TnRecurrence>>,
}

enum EdgeSlot {
    Unbuilt,
    Built([Option<Edge>; 2]),
}

/// Memoized `F^p_κ(a, b; μ, Σ)` for one box and parameter set.
pub struct TnRecurrence {
    lower: Vec<f64>,
    upper: Vec<f64>,
    mu: Vec<f64>,
    sigma: SymMatrix,
    cfg: QmcConfig,
    max_order: u32,
    abs_error: f64,
    table: MomentTable,
    edges: Vec<EdgeSlot>,
}

impl TnRecurrence {
    pub fn new(bx: &TruncationBox, params: &NormalParams, settings: &Settings) -> Result<Self> {
        if bx.dim() != params.dim() {
            return Err(Error::DimensionMismatch { expected: params.dim(), got: bx.dim() });
        }
        Self::from_parts(
            bx.lower().to_vec(),
            bx.upper().to_vec(),
            params.mu.as_slice().to_vec(),
            params.sigma.clone(),
            &settings.qmc,
            settings.max_moment_order,
        )
    }

    pub(crate) fn from_parts(
        lower: Vec<f64>,
        upper: Vec<f64>,
        mu: Vec<f64>,
        sigma: SymMatrix,
        cfg: &QmcConfig,
        max_order: u32,
    ) -> Result<Self> {
        let l0 = rect_prob(&lower, &upper, &mu, &sigma, cfg)?;
        let p = mu.len();
        Ok(TnRecurrence {
            lower,
            upper,
            mu,
            sigma,
            cfg: *cfg,
            max_order,
            abs_error: l0.abs_error,
            table: MomentTable::new(p, l0.log_value),
            edges: (0..p).map(|_| EdgeSlot::Unbuilt).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `ln L_p(a, b; μ, Σ)`.
    pub fn log_prob(&self) -> f64 {
        self.table.log_scale()
    }

    /// QMC error estimate of `L_p`.
    pub fn prob_abs_error(&self) -> f64 {
        self.abs_error
    }

    pub fn table(&self) -> &MomentTable {
        &self.table
    }

    /// `F_κ`, the unnormalized product moment.
    pub fn fk(&mut self, k: &MultiIndex) -> Result<f64> {
        self.check(k)?;
        if self.table.log_scale() == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        Ok(self.scaled(k)? * self.table.log_scale().exp())
    }

    /// `E[X^κ | a <= X <= b] = F_κ / L_p`.
    pub fn moment(&mut self, k: &MultiIndex) -> Result<f64> {
        self.check(k)?;
        if self.table.log_scale() == f64::NEG_INFINITY {
            return Err(Error::DegenerateBox { log_prob: f64::NEG_INFINITY });
        }
        self.scaled(k)
    }

    fn check(&self, k: &MultiIndex) -> Result<()> {
        if k.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: k.dim() });
        }
        for (i, &o) in k.as_slice().iter().enumerate() {
            if o > self.max_order {
                return Err(Error::MomentOrderTooLarge { index: i, order: o, max: self.max_order });
            }
        }
        Ok(())
    }

    fn scaled(&mut self, k: &MultiIndex) -> Result<f64> {
        if let Some(v) = self.table.normalized(k) {
            return Ok(v);
        }
        let i = k.as_slice().iter().position(|&o| o > 0).expect("zero index is always memoized");
        let base = k.minus(i);
        let mut v = self.mu[i] * self.scaled(&base)?;
        for j in 0..self.dim() {
            let s = self.sigma.get(i, j);
            if s == 0.0 {
                continue;
            }
            v += s * self.c_term(&base, j)?;
        }
        self.table.insert(k.clone(), v);
        Ok(v)
    }

    fn c_term(&mut self, k: &MultiIndex, j: usize) -> Result<f64> {
        let kj = k.get(j);
        let mut c = if kj > 0 { kj as f64 * self.scaled(&k.minus(j))? } else { 0.0 };
        self.build_edges(j)?;
        let sub = k.without(j);
        if let EdgeSlot::Built(sides) = &mut self.edges[j] {
            for (side, sign) in sides.iter_mut().zip([1.0, -1.0]) {
                let Some(edge) = side else { continue };
                if edge.log_weight == f64::NEG_INFINITY {
                    continue;
                }
                let inner = match edge.child.as_mut() {
                    Some(child) => child.scaled(&sub)?,
                    None => 1.0,
                };
                c += sign * edge.limit.powi(kj as i32) * edge.log_weight.exp() * inner;
            }
        }
        Ok(c)
    }

    fn build_edges(&mut self, j: usize) -> Result<()> {
        if matches!(self.edges[j], EdgeSlot::Built(_)) {
            return Ok(());
        }
        let p = self.dim();
        let s_jj = self.sigma.get(j, j);
        let keep: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let cond_cov = SymMatrix::symmetrize(nalgebra::DMatrix::from_fn(p - 1, p - 1, |r, c| {
            let (r, c) = (keep[r], keep[c]);
            self.sigma.get(r, c) - self.sigma.get(r, j) * self.sigma.get(j, c) / s_jj
        }));
        let lower: Vec<f64> = keep.iter().map(|&k| self.lower[k]).collect();
        let upper: Vec<f64> = keep.iter().map(|&k| self.upper[k]).collect();
        let mut sides: [Option<Edge>; 2] = [None, None];
        for (slot, limit) in sides.iter_mut().zip([self.lower[j], self.upper[j]]) {
            if !limit.is_finite() || s_jj <= 0.0 {
                continue;
            }
            let z = (limit - self.mu[j]) / s_jj.sqrt();
            let log_density = log_std_pdf(z) - 0.5 * s_jj.ln();
            let edge = if p == 1 {
                Edge { limit, log_weight: log_density - self.table.log_scale(), child: None }
            } else {
                let mu: Vec<f64> = keep
                    .iter()
                    .map(|&k| self.mu[k] + self.sigma.get(k, j) * (limit - self.mu[j]) / s_jj)
                    .collect();
                let child = TnRecurrence::from_parts(lower.clone(), upper.clone(), mu, cond_cov.clone(), &self.cfg, self.max_order)?;
                Edge {
                    limit,
                    log_weight: log_density + child.log_prob() - self.table.log_scale(),
                    child: Some(Box::new(child)),
                }
            };
            *slot = Some(edge);
        }
        self.edges[j] = EdgeSlot::Built(sides);
        Ok(())
    }
}

/// `F^p_κ(a, b; μ, Σ) = ∫_a^b x^κ φ_p(x; μ, Σ) dx`.
pub fn tn_fk(bx: &TruncationBox, params: &NormalParams, k: &MultiIndex, settings: &Settings) -> Result<f64> {
    TnRecurrence::new(bx, params, settings)?.fk(k)
}

/// First two moments from order-one and order-two recurrence terms.
pub fn tn_first_two_recurrence(bx: &TruncationBox, params: &NormalParams, settings: &Settings) -> Result<FirstTwoMoments> {
    let mut rec = TnRecurrence::new(bx, params, settings)?;
    first_two_from(&mut rec)
}

pub(crate) fn first_two_from(rec: &mut TnRecurrence) -> Result<FirstTwoMoments> {
    let p = rec.dim();
    let mut mean = DVector::zeros(p);
    for i in 0..p {
        mean[i] = rec.moment(&MultiIndex::unit(p, i))?;
    }
    let mut raw = nalgebra::DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = rec.moment(&MultiIndex::unit(p, i).plus(j))?;
            raw[(i, j)] = v;
            raw[(j, i)] = v;
        }
    }
    Ok(FirstTwoMoments::from_mean_raw2(mean, SymMatrix::symmetrize(raw)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvn::univariate::{std_cdf, std_pdf};

    fn settings() -> Settings {
        Settings::default()
    }

    fn params(mu: &[f64], rows: &[&[f64]]) -> NormalParams {
        let s = SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        NormalParams::new(DVector::from_column_slice(mu), s).unwrap()
    }

    #[test]
    fn half_line_first_moment() {
        let bx = TruncationBox::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        let v = tn_fk(&bx, &NormalParams::standard(1), &MultiIndex::new(vec![1]), &settings()).unwrap();
        assert!((v - std_pdf(0.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_index_is_probability() {
        let bx = TruncationBox::new(vec![-1.0, 0.0], vec![2.0, 1.5]).unwrap();
        let pr = params(&[0.2, 0.1], &[&[1.0, 0.4], &[0.4, 2.0]]);
        let v = tn_fk(&bx, &pr, &MultiIndex::zeros(2), &settings()).unwrap();
        let l = crate::mvn::mvn_prob(&bx, &pr, &settings().qmc).unwrap();
        assert!((v - l.value).abs() < 1e-15);
    }

    #[test]
    fn univariate_closed_forms() {
        // E[X^k | a < X < b] for N(0,1) via integration by parts
        let (a, b) = (-0.7, 1.9);
        let bx = TruncationBox::new(vec![a], vec![b]).unwrap();
        let mut rec = TnRecurrence::new(&bx, &NormalParams::standard(1), &settings()).unwrap();
        let z = std_cdf(b) - std_cdf(a);
        let m1 = (std_pdf(a) - std_pdf(b)) / z;
        let m2 = 1.0 + (a * std_pdf(a) - b * std_pdf(b)) / z;
        let m3 = 2.0 * m1 + (a * a * std_pdf(a) - b * b * std_pdf(b)) / z;
        assert!((rec.moment(&MultiIndex::new(vec![1])).unwrap() - m1).abs() < 1e-14);
        assert!((rec.moment(&MultiIndex::new(vec![2])).unwrap() - m2).abs() < 1e-14);
        assert!((rec.moment(&MultiIndex::new(vec![3])).unwrap() - m3).abs() < 1e-14);
    }

    #[test]
    fn untruncated_bivariate_moments() {
        let pr = params(&[0.5, -1.0], &[&[2.0, 0.6], &[0.6, 1.0]]);
        let mut rec = TnRecurrence::new(&TruncationBox::unbounded(2), &pr, &settings()).unwrap();
        // E[X1^2 X2] = μ2(σ11 + μ1²) + 2 μ1 σ12
        let want = -1.0 * (2.0 + 0.25) + 2.0 * 0.5 * 0.6;
        let got = rec.moment(&MultiIndex::new(vec![2, 1])).unwrap();
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    }

    #[test]
    fn bivariate_mixed_moment_against_quadrature() {
        // reference: 2-d adaptive quadrature of x1^2 x2 φ2 over the box
        let pr = params(&[0.3, -0.2], &[&[1.0, 0.5], &[0.5, 1.5]]);
        let bx = TruncationBox::new(vec![-1.0, -0.5], vec![1.2, 2.0]).unwrap();
        let v = tn_fk(&bx, &pr, &MultiIndex::new(vec![2, 1]), &settings()).unwrap();
        assert!((v - BIVARIATE_F21).abs() < 1e-13, "{v}");
    }

    const BIVARIATE_F21: f64 = 0.073_683_933_989_044_23;

    #[test]
    fn order_limit_enforced() {
        let s = Settings { max_moment_order: 2, ..Settings::default() };
        let bx = TruncationBox::new(vec![0.0], vec![1.0]).unwrap();
        let r = tn_fk(&bx, &NormalParams::standard(1), &MultiIndex::new(vec![3]), &s);
        assert!(matches!(r, Err(Error::MomentOrderTooLarge { .. })));
    }

    #[test]
    fn deep_tail_mean_stays_finite() {
        let bx = TruncationBox::new(vec![-60.0], vec![-50.0]).unwrap();
        let mut rec = TnRecurrence::new(&bx, &NormalParams::standard(1), &settings()).unwrap();
        let m = rec.moment(&MultiIndex::new(vec![1])).unwrap();
        let (want, _) = crate::mvn::univariate::truncated_std_moments(-60.0, -50.0);
        assert!((m - want).abs() < 1e-10, "{m} vs {want}");
    }
}
