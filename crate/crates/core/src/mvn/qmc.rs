//! Separation-of-variables transform with greedy variable reordering,
//! integrated by randomly shifted Richtmyer lattices with the baker's
//! transform and antithetic pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::univariate::{
    log_interval_prob, sample_truncated_std, std_cdf,
    truncated_std_moments,
};
use crate::error::{Error, Result};
use crate::settings::QmcConfig;

/// Generating vector of an extensible base-2 rank-1 lattice, used when the
/// transformed integrand has at most three dimensions; it beats the
/// Richtmyer points there and loses to them above.
const LATTICE: [u64; 3] = [1, 182667, 469891];

/// Square roots of these primes generate the lattice.
const PRIMES: [u32; 64] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293,
    307, 311,
];

/// Below `ln(1e-280)` a marginal interval switches the integrand to log space.
const LOG_LINEAR_FLOOR: f64 = -644.7;
const MAX_DOUBLINGS: usize = 3;

/// Unpolished inverse cdf; its error is far below the lattice noise.
fn fast_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
    }
}

/// A reordered, Cholesky-factored rectangle problem in centered coordinates.
#[derive(Debug, Clone)]
pub(crate) struct SovProblem {
    /// Row-major lower-triangular factor.
    chol: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// Greedy-pass estimate of `ln P`; samples are scaled by its exponential.
    log_scale: f64,
    log_domain: bool,
    /// Lower cdf value and mass of the first interval, which does not move.
    first: (f64, f64),
}

impl SovProblem {
    /// `a`, `b` are limits for a zero-mean vector with covariance `cov` (row-major `m x m`).
    pub(crate) fn new(mut a: Vec<f64>, mut b: Vec<f64>, cov: &[f64]) -> Result<Self> {
        let m = a.len();
        let mut c = cov.to_vec();
        let mut l = vec![0.0; m * m];
        let mut y = vec![0.0; m];
        let mut log_scale = 0.0;
        let mut log_domain = false;
        for i in 0..m {
            let mut best = (i, f64::INFINITY, 0.0, 0.0);
            for j in i..m {
                let mut s = c[j * m + j];
                let mut t = 0.0;
                for k in 0..i {
                    s -= l[j * m + k] * l[j * m + k];
                    t += l[j * m + k] * y[k];
                }
                if s <= 0.0 {
                    // numerically singular direction: pick it last
                    continue;
                }
                let sd = s.sqrt();
                let (lo, hi) = ((a[j] - t) / sd, (b[j] - t) / sd);
                let lp = log_interval_prob(lo, hi);
                if lp < best.1 {
                    best = (j, lp, lo, hi);
                }
            }
            let j = best.0;
            if j != i {
                a.swap(i, j);
                b.swap(i, j);
                for k in 0..m {
                    c.swap(i * m + k, j * m + k);
                }
                for k in 0..m {
                    c.swap(k * m + i, k * m + j);
                }
                for k in 0..i {
                    l.swap(i * m + k, j * m + k);
                }
            }
            let mut d = c[i * m + i];
            for k in 0..i {
                d -= l[i * m + k] * l[i * m + k];
            }
            if !(d > 1e-14 * c[i * m + i]) {
                return Err(Error::NotPsd { min_eig: d, max_eig: c[i * m + i] });
            }
            let lii = d.sqrt();
            l[i * m + i] = lii;
            for r in (i + 1)..m {
                let mut v = c[r * m + i];
                for k in 0..i {
                    v -= l[r * m + k] * l[i * m + k];
                }
                l[r * m + i] = v / lii;
            }
            let mut t = 0.0;
            for k in 0..i {
                t += l[i * m + k] * y[k];
            }
            let (lo, hi) = ((a[i] - t) / lii, (b[i] - t) / lii);
            let lp = log_interval_prob(lo, hi);
            if lp < LOG_LINEAR_FLOOR {
                log_domain = true;
            }
            log_scale += lp;
            y[i] = truncated_std_moments(lo, hi).0;
        }
        if log_scale < LOG_LINEAR_FLOOR {
            log_domain = true;
        }
        let (lo, hi) = (a[0] / l[0], b[0] / l[0]);
        let (c_lo, c_hi) = if lo > 0.0 { (std_cdf(-hi), std_cdf(-lo)) } else { (std_cdf(lo), std_cdf(hi)) };
        Ok(SovProblem { chol: l, a, b, log_scale, log_domain, first: (c_lo, c_hi - c_lo) })
    }

    fn dim(&self) -> usize {
        self.a.len()
    }

    /// Integrand at a point of the unit cube, divided by `exp(log_scale)`.
    fn eval(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let m = self.dim();
        if self.log_domain {
            let mut logf = -self.log_scale;
            for i in 0..m {
                let row = &self.chol[i * m..i * m + i];
                let t: f64 = row.iter().zip(y.iter()).map(|(l, y)| l * y).sum();
                let lii = self.chol[i * m + i];
                let (lo, hi) = ((self.a[i] - t) / lii, (self.b[i] - t) / lii);
                let lp = log_interval_prob(lo, hi);
                if lp == f64::NEG_INFINITY {
                    return 0.0;
                }
                logf += lp;
                if i + 1 < m {
                    y[i] = sample_truncated_std(lo, hi, w[i]);
                }
            }
            logf.exp()
        } else {
            let mut f = (-self.log_scale).exp();
            for i in 0..m {
                let row = &self.chol[i * m..i * m + i];
                let t: f64 = row.iter().zip(y.iter()).map(|(l, y)| l * y).sum();
                let lii = self.chol[i * m + i];
                let (lo, hi) = ((self.a[i] - t) / lii, (self.b[i] - t) / lii);
                // work with upper tails when the interval sits right of zero
                let flip = lo > 0.0;
                let (c_lo, p) = if i == 0 {
                    self.first
                } else {
                    let (c_lo, c_hi) = if flip { (std_cdf(-hi), std_cdf(-lo)) } else { (std_cdf(lo), std_cdf(hi)) };
                    (c_lo, c_hi - c_lo)
                };
                if !(p > 0.0) {
                    return 0.0;
                }
                f *= p;
                if i + 1 < m {
                    let u = if flip { 1.0 - w[i] } else { w[i] };
                    let x = fast_quantile(c_lo + u * p);
                    y[i] = (if flip { -x } else { x }).clamp(lo, hi);
                    if !y[i].is_finite() {
                        y[i] = if lo.is_finite() { lo } else { hi };
                    }
                }
            }
            f
        }
    }

    /// Returns `(ln P, P, abs_error)`.
    pub(crate) fn integrate(&self, cfg: &QmcConfig) -> (f64, f64, f64) {
        let cfg = cfg.normalized();
        let m = self.dim();
        let s = m - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let shifts: Vec<Vec<f64>> = (0..cfg.replicates)
            .map(|_| (0..s).map(|_| rng.random::<f64>()).collect())
            .collect();
        let gens: Vec<f64> = (0..s).map(|j| (PRIMES[j % PRIMES.len()] as f64).sqrt().fract()).collect();

        let mut sums = vec![0.0; cfg.replicates];
        let mut done = 0usize;
        let mut target = cfg.sample_count;
        let mut w = vec![0.0; s];
        let mut wa = vec![0.0; s];
        let mut y = vec![0.0; m];
        let mut doublings = 0;
        loop {
            for (r, shift) in shifts.iter().enumerate() {
                let mut acc = 0.0;
                for n in done..target {
                    let k = (n as u32).reverse_bits() as u64;
                    for j in 0..s {
                        let base = if s <= LATTICE.len() && target <= u32::MAX as usize {
                            ((k * LATTICE[j]) & 0xFFFF_FFFF) as f64 / 4_294_967_296.0
                        } else {
                            (n + 1) as f64 * gens[j]
                        };
                        let x = (base + shift[j]).fract();
                        let t = 1.0 - (2.0 * x - 1.0).abs();
                        w[j] = t;
                        wa[j] = 1.0 - t;
                    }
                    acc += 0.5 * (self.eval(&w, &mut y) + self.eval(&wa, &mut y));
                }
                sums[r] += acc;
            }
            done = target;
            let k = cfg.replicates as f64;
            let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
            let mean = means.iter().sum::<f64>() / k;
            let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let se = (var / k).sqrt();
            let log_p = if mean > 0.0 { self.log_scale + mean.ln() } else { f64::NEG_INFINITY };
            let scale = self.log_scale.exp();
            let err = 3.0 * se * scale;
            if err <= cfg.target_abs_error || doublings == MAX_DOUBLINGS {
                return (log_p, log_p.exp(), err);
            }
            doublings += 1;
            target *= 2;
        }
    }
}
