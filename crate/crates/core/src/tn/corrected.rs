//! Total first-two-moment routine for truncated normals.
//!
//! Coordinates with no truncation at all are split off first and put back
//! through the conditional-normal recombination. Coordinates whose marginal
//! interval carries numerically no mass are then pinned near the bound they
//! hug, and the rest is handled conditionally on them. Whatever remains goes
//! to the MGF route, falling back to the recurrence and finally to
//! independent univariate moments.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::{tn_first_two_mgf, tn_first_two_recurrence, FirstTwoMoments};
use crate::error::{Error, Result};
use crate::linalg::{conditional_normal, cross_block, select, sym_inverse, PartitionIndex, SymMatrix};
use crate::mvn::univariate::{log_interval_prob, log_std_pdf, truncated_std_moments};
use crate::mvn::{NormalParams, TruncationBox};
use crate::settings::{OutOfBoundsRule, Settings};

/// A correction applied on the way to the moments. Coordinates are 0-based;
/// the `Display` form is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Correction {
    /// Coordinates without truncation, recombined conditionally.
    DoubleInfinite { coords: Vec<usize> },
    /// Coordinate with a numerically empty interval, pinned at its lower or upper bound.
    OutOfBounds { coord: usize, at_upper: bool },
    /// Extended skew-normal replaced by its normal limit.
    LimitTau,
    /// The MGF route failed and the recurrence was used.
    RecurrenceFallback,
    /// Both analytic routes failed; univariate marginal moments were used.
    MarginalFallback,
    /// The mean left the box through numerical error and was clamped.
    MeanClamped { coord: usize },
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Correction::DoubleInfinite { coords } => {
                let list: Vec<String> = coords.iter().map(|c| (c + 1).to_string()).collect();
                write!(f, "double-infinite coords {}", list.join(","))
            }
            Correction::OutOfBounds { coord, .. } => write!(f, "out-of-bounds coord {}", coord + 1),
            Correction::LimitTau => write!(f, "limit-tau"),
            Correction::RecurrenceFallback => write!(f, "recurrence fallback"),
            Correction::MarginalFallback => write!(f, "marginal fallback"),
            Correction::MeanClamped { coord } => write!(f, "mean clamped coord {}", coord + 1),
        }
    }
}

/// First two moments of `TN(μ, Σ; [a, b])` for any box, however extreme.
pub fn tn_first_two_corrected(bx: &TruncationBox, params: &NormalParams, settings: &Settings) -> Result<FirstTwoMoments> {
    tn_first_two_corrected_traced(bx, params, settings).map(|(m, _)| m)
}

/// As [`tn_first_two_corrected`], also returning the corrections in the order applied.
pub fn tn_first_two_corrected_traced(
    bx: &TruncationBox,
    params: &NormalParams,
    settings: &Settings,
) -> Result<(FirstTwoMoments, Vec<Correction>)> {
    let p = params.dim();
    if bx.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, got: bx.dim() });
    }
    if !params.sigma.is_psd(settings.psd_tol) {
        let (min_eig, max_eig) = params.sigma.eigen_range();
        return Err(Error::NotPsd { min_eig, max_eig });
    }
    let coords: Vec<usize> = (0..p).collect();
    let mut trace = Vec::new();
    let mut m = solve(bx.lower(), bx.upper(), &params.mu, &params.sigma, &coords, settings, &mut trace);

    for i in 0..p {
        let (a, b) = (bx.lower()[i], bx.upper()[i]);
        let x = m.mean[i];
        if x < a || x > b {
            let slack = 1e-9 * (1.0 + x.abs());
            if x < a - slack || x > b + slack {
                trace.push(Correction::MeanClamped { coord: i });
            }
            m.mean[i] = x.clamp(a, b);
        }
    }
    let cov = m.cov.clone();
    Ok((FirstTwoMoments::from_mean_cov(m.mean, cov), trace))
}

fn solve(
    lower: &[f64],
    upper: &[f64],
    mu: &DVector<f64>,
    sigma: &SymMatrix,
    coords: &[usize],
    settings: &Settings,
    trace: &mut Vec<Correction>,
) -> FirstTwoMoments {
    let p = mu.len();

    let free: Vec<usize> = (0..p).filter(|&i| lower[i] == f64::NEG_INFINITY && upper[i] == f64::INFINITY).collect();
    if !free.is_empty() {
        if free.len() == p {
            return FirstTwoMoments::from_mean_cov(mu.clone(), sigma.clone());
        }
        if let Some(m) = split_free(lower, upper, mu, sigma, coords, &free, settings, trace) {
            return m;
        }
    }

    let sd: Vec<f64> = (0..p).map(|i| sigma.get(i, i).sqrt()).collect();
    let ln_eps = settings.out_of_bounds_eps.ln();
    let mut pinned = Vec::new();
    for i in 0..p {
        if !(sd[i] > 0.0) {
            continue;
        }
        let za = (lower[i] - mu[i]) / sd[i];
        let zb = (upper[i] - mu[i]) / sd[i];
        if log_interval_prob(za, zb) < ln_eps {
            pinned.push(i);
        }
    }
    if !pinned.is_empty() {
        if let Some(m) = split_out_of_bounds(lower, upper, mu, sigma, coords, &pinned, &sd, settings, trace) {
            return m;
        }
    }

    analytic(lower, upper, mu, sigma, settings, trace)
}

#[allow(clippy::too_many_arguments)]
fn split_free(
    lower: &[f64],
    upper: &[f64],
    mu: &DVector<f64>,
    sigma: &SymMatrix,
    coords: &[usize],
    free: &[usize],
    settings: &Settings,
    trace: &mut Vec<Correction>,
) -> Option<FirstTwoMoments> {
    let part = PartitionIndex::from_kept(mu.len(), free).ok()?;
    let t = part.removed();
    let inv = sym_inverse(&sigma.principal(t)).ok()?;
    let gain = cross_block(sigma, free, t) * inv.as_matrix();

    trace.push(Correction::DoubleInfinite { coords: free.iter().map(|&i| coords[i]).collect() });
    let sub_coords: Vec<usize> = t.iter().map(|&i| coords[i]).collect();
    let lo: Vec<f64> = t.iter().map(|&i| lower[i]).collect();
    let hi: Vec<f64> = t.iter().map(|&i| upper[i]).collect();
    let mu_t = select(mu, t);
    let inner = solve(&lo, &hi, &mu_t, &sigma.principal(t), &sub_coords, settings, trace);

    let mean_f = select(mu, free) + &gain * (&inner.mean - &mu_t);
    let cross = &gain * inner.cov.as_matrix();
    let cov_ff = sigma.principal(free).into_matrix() - &gain * cross_block(sigma, t, free) + &cross * gain.transpose();
    Some(assemble(&part, mean_f, cov_ff, inner.mean, cross, inner.cov.into_matrix()))
}

#[allow(clippy::too_many_arguments)]
fn split_out_of_bounds(
    lower: &[f64],
    upper: &[f64],
    mu: &DVector<f64>,
    sigma: &SymMatrix,
    coords: &[usize],
    pinned: &[usize],
    sd: &[f64],
    settings: &Settings,
    trace: &mut Vec<Correction>,
) -> Option<FirstTwoMoments> {
    let n = pinned.len();
    let mut m_o = DVector::zeros(n);
    let mut psi = DVector::zeros(n);
    let mut notes = Vec::with_capacity(n);
    for (k, &i) in pinned.iter().enumerate() {
        let za = (lower[i] - mu[i]) / sd[i];
        let zb = (upper[i] - mu[i]) / sd[i];
        let dens = |z: f64| if z.is_finite() { log_std_pdf(z) } else { f64::NEG_INFINITY };
        let at_upper = dens(zb) > dens(za);
        match settings.out_of_bounds_rule {
            OutOfBoundsRule::AtBound => {
                m_o[k] = if at_upper { upper[i] } else { lower[i] };
            }
            OutOfBoundsRule::TailMoments => {
                let (m, v) = truncated_std_moments(za, zb);
                m_o[k] = (mu[i] + sd[i] * m).clamp(lower[i], upper[i]);
                psi[k] = sd[i] * sd[i] * v;
            }
        }
        notes.push(Correction::OutOfBounds { coord: coords[i], at_upper });
    }

    let p = mu.len();
    let part = PartitionIndex::from_removed(p, pinned).ok()?;
    let rest = part.kept();
    if rest.is_empty() {
        trace.extend(notes);
        return Some(FirstTwoMoments::from_mean_cov(m_o, SymMatrix::from_diagonal(psi.as_slice())));
    }
    let (cmu, csig) = conditional_normal(mu, sigma, &part, &m_o).ok()?;
    let gain = cross_block(sigma, rest, pinned) * sym_inverse(&sigma.principal(pinned)).ok()?.as_matrix();
    trace.extend(notes);

    let sub_coords: Vec<usize> = rest.iter().map(|&i| coords[i]).collect();
    let lo: Vec<f64> = rest.iter().map(|&i| lower[i]).collect();
    let hi: Vec<f64> = rest.iter().map(|&i| upper[i]).collect();
    let inner = solve(&lo, &hi, &cmu, &csig, &sub_coords, settings, trace);

    let psi_m = DMatrix::from_diagonal(&psi);
    let cross = &gain * &psi_m;
    let cov_rr = inner.cov.as_matrix() + &cross * gain.transpose();
    Some(assemble(&part, inner.mean, cov_rr, m_o, cross, psi_m))
}

/// Places the blocks of a two-way partition back in original order.
fn assemble(
    part: &PartitionIndex,
    mean_k: DVector<f64>,
    cov_kk: DMatrix<f64>,
    mean_r: DVector<f64>,
    cov_kr: DMatrix<f64>,
    cov_rr: DMatrix<f64>,
) -> FirstTwoMoments {
    let (k, r) = (part.kept(), part.removed());
    let mut cov = DMatrix::zeros(part.dim(), part.dim());
    for (x, &i) in k.iter().enumerate() {
        for (y, &j) in k.iter().enumerate() {
            cov[(i, j)] = cov_kk[(x, y)];
        }
        for (y, &j) in r.iter().enumerate() {
            cov[(i, j)] = cov_kr[(x, y)];
            cov[(j, i)] = cov_kr[(x, y)];
        }
    }
    for (x, &i) in r.iter().enumerate() {
        for (y, &j) in r.iter().enumerate() {
            cov[(i, j)] = cov_rr[(x, y)];
        }
    }
    FirstTwoMoments::from_mean_cov(part.merge(&mean_k, &mean_r), SymMatrix::symmetrize(cov))
}

fn in_box(m: &FirstTwoMoments, lower: &[f64], upper: &[f64]) -> bool {
    m.is_finite()
        && m.mean.iter().enumerate().all(|(i, &x)| {
            let slack = 1e-8 * (1.0 + x.abs());
            x >= lower[i] - slack && x <= upper[i] + slack
        })
        && m.cov.diagonal().iter().all(|&v| v >= -1e-10)
}

fn analytic(
    lower: &[f64],
    upper: &[f64],
    mu: &DVector<f64>,
    sigma: &SymMatrix,
    settings: &Settings,
    trace: &mut Vec<Correction>,
) -> FirstTwoMoments {
    let parts = TruncationBox::new(lower.to_vec(), upper.to_vec())
        .and_then(|bx| NormalParams::new(mu.clone(), sigma.clone()).map(|p| (bx, p)));
    if let Ok((bx, params)) = &parts {
        if let Ok(m) = tn_first_two_mgf(bx, params, settings) {
            if in_box(&m, lower, upper) {
                return m;
            }
        }
        trace.push(Correction::RecurrenceFallback);
        if let Ok(m) = tn_first_two_recurrence(bx, params, settings) {
            if in_box(&m, lower, upper) {
                return m;
            }
        }
    }
    trace.push(Correction::MarginalFallback);
    let p = mu.len();
    let mut mean = DVector::zeros(p);
    let mut var = vec![0.0; p];
    for i in 0..p {
        let s = sigma.get(i, i).max(0.0).sqrt();
        if s == 0.0 {
            mean[i] = mu[i].clamp(lower[i], upper[i]);
            continue;
        }
        let (m, v) = truncated_std_moments((lower[i] - mu[i]) / s, (upper[i] - mu[i]) / s);
        mean[i] = mu[i] + s * m;
        var[i] = s * s * v;
    }
    FirstTwoMoments::from_mean_cov(mean, SymMatrix::from_diagonal(&var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tn::tn_first_two_mgf;

    fn params(mu: &[f64], rows: &[&[f64]]) -> NormalParams {
        let s = SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        NormalParams::new(DVector::from_column_slice(mu), s).unwrap()
    }

    fn extreme() -> NormalParams {
        params(&[0.0, 0.0], &[&[1.0, -0.5], &[-0.5, 1.0]])
    }

    #[test]
    fn no_truncation_is_identity() {
        let pr = params(&[1.0, -2.0], &[&[2.0, 0.3], &[0.3, 1.0]]);
        let (m, tr) = tn_first_two_corrected_traced(&TruncationBox::unbounded(2), &pr, &Settings::default()).unwrap();
        assert_eq!(m.mean, pr.mu);
        assert_eq!(m.cov, pr.sigma);
        assert!(tr.is_empty());
    }

    #[test]
    fn free_split_matches_mgf() {
        let pr = params(&[0.2, -0.1, 0.4], &[&[1.0, 0.5, 0.2], &[0.5, 1.5, -0.3], &[0.2, -0.3, 0.8]]);
        let inf = f64::INFINITY;
        let bx = TruncationBox::new(vec![-0.5, -inf, -1.0], vec![1.0, inf, 0.3]).unwrap();
        let s = Settings::default();
        let (a, tr) = tn_first_two_corrected_traced(&bx, &pr, &s).unwrap();
        assert_eq!(tr, vec![Correction::DoubleInfinite { coords: vec![1] }]);
        let b = tn_first_two_mgf(&bx, &pr, &s).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12, "{a:?}\n{b:?}");
    }

    #[test]
    fn extreme_box_stays_inside() {
        let bx = TruncationBox::new(vec![-20.0, -10.0], vec![-9.0, 10.0]).unwrap();
        let (m, tr) = tn_first_two_corrected_traced(&bx, &extreme(), &Settings::default()).unwrap();
        assert_eq!(tr, vec![Correction::OutOfBounds { coord: 0, at_upper: true }]);
        assert_eq!(tr[0].to_string(), "out-of-bounds coord 1");
        assert!((m.mean[0] - -9.108_523_105_002_869).abs() < 1e-12);
        assert!((m.cov.get(0, 0) - 0.011_514_790_654_717_133).abs() < 1e-10);
        // given x1, x2 ~ N(-x1/2, 3/4)
        assert!((m.mean[1] - 9.108_523_105_002_869 / 2.0).abs() < 1e-9);
        assert!(m.cov.is_psd(1e-12));
    }

    #[test]
    fn at_bound_gives_exact_zeros() {
        let bx = TruncationBox::new(vec![-20.0, -10.0], vec![-9.0, 10.0]).unwrap();
        let s = Settings { out_of_bounds_rule: OutOfBoundsRule::AtBound, ..Settings::default() };
        let m = tn_first_two_corrected(&bx, &extreme(), &s).unwrap();
        assert_eq!(m.mean[0], -9.0);
        assert_eq!(m.cov.get(0, 0), 0.0);
        assert_eq!(m.cov.get(0, 1), 0.0);
        assert!((m.mean[1] - 4.5).abs() < 1e-9);
        // the upper limit 10 sits 6.35 sd away and trims about 3e-9 of variance
        assert!((m.cov.get(1, 1) - 0.75).abs() < 1e-8);
    }

    #[test]
    fn farther_variant_is_finite() {
        let bx = TruncationBox::new(vec![-20.0, -10.0], vec![-13.0, 10.0]).unwrap();
        let m = tn_first_two_corrected(&bx, &extreme(), &Settings::default()).unwrap();
        assert!(m.is_finite());
        assert!(m.mean[0] >= -20.0 && m.mean[0] <= -13.0);
    }

    #[test]
    fn degeneracy_toward_bound() {
        let pr = params(&[0.0, 0.0], &[&[1.0, 0.3], &[0.3, 1.0]]);
        let mut last_gap = f64::INFINITY;
        let mut last_var = f64::INFINITY;
        for b2 in [-10.0, -20.0, -40.0] {
            let bx = TruncationBox::new(vec![-1.0, f64::NEG_INFINITY], vec![1.0, b2]).unwrap();
            let m = tn_first_two_corrected(&bx, &pr, &Settings::default()).unwrap();
            let gap = b2 - m.mean[1];
            let var = m.cov.get(1, 1);
            assert!(gap > 0.0 && gap < last_gap);
            assert!(var > 0.0 && var < last_var);
            last_gap = gap;
            last_var = var;
        }
    }

    #[test]
    fn upper_tail_pins_to_lower_bound() {
        let bx = TruncationBox::new(vec![30.0], vec![f64::INFINITY]).unwrap();
        let s = Settings { out_of_bounds_rule: OutOfBoundsRule::AtBound, ..Settings::default() };
        let (m, tr) = tn_first_two_corrected_traced(&bx, &NormalParams::standard(1), &s).unwrap();
        assert_eq!(m.mean[0], 30.0);
        assert_eq!(tr, vec![Correction::OutOfBounds { coord: 0, at_upper: false }]);
    }
}
