//! Standard normal density, cdf, log-cdf and quantile, plus the univariate
//! truncated-normal helpers shared by the tail corrections and samplers.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI, SQRT_2};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument `log_std_cdf` switches to the continued fraction.
const MILLS_SWITCH: f64 = -20.0;

#[inline]
pub fn std_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn log_std_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Density of `N(mean, var)` at `x`.
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    std_pdf((x - mean) / sd) / sd
}

#[inline]
pub fn std_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// `Phi(-t) / phi(t)` for `t >= 5` by backward evaluation of the Laplace
/// continued fraction `1/(t+ 1/(t+ 2/(t+ 3/(t+ ...))))`.
fn mills_ratio(t: f64) -> f64 {
    let depth = if t > 40.0 { 20 } else { 80 };
    let mut tail = t;
    for k in (1..=depth).rev() {
        tail = t + k as f64 / tail;
    }
    1.0 / tail
}

pub fn log_std_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x == f64::INFINITY {
        0.0
    } else if x < MILLS_SWITCH {
        log_std_pdf(x) + mills_ratio(-x).ln()
    } else if x <= 0.0 {
        (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// `Phi^{-1}(p)`; returns the infinities at 0 and 1.
pub fn std_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        polish(-SQRT_2 * erfc_inv(2.0 * p), p)
    }
}

/// One Halley step on `Phi(x) = p` against the accurate cdf.
fn polish(x: f64, p: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let (c, d) = if x < 0.0 { (std_cdf(x), std_pdf(x)) } else { (1.0 - std_cdf(-x), std_pdf(x)) };
    if d <= 0.0 {
        return x;
    }
    let t = (c - p) / d;
    x - t / (1.0 + 0.5 * x * t)
}

/// `Phi^{-1}(exp(log_p))`, usable far below the smallest double.
pub fn std_quantile_log(log_p: f64) -> f64 {
    if log_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_p >= 0.0 {
        return f64::INFINITY;
    }
    if log_p > -680.0 {
        let p = log_p.exp();
        if p < 0.5 {
            return std_quantile(p);
        }
        // upper half: 1 - p loses nothing when taken as -expm1
        let q = -log_p.exp_m1();
        return -polish(-SQRT_2 * erfc_inv(2.0 * q), q);
    }
    // lower tail asymptotics, then Newton on log Phi
    let l = -2.0 * log_p;
    let mut x = -(l - l.ln() - (2.0 * PI).ln()).sqrt();
    for _ in 0..50 {
        let lc = log_std_cdf(x);
        let step = (lc - log_p) / (log_std_pdf(x) - lc).exp();
        x -= step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    x
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(exp(a) - exp(b))` for `a >= b`.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    let d = b - a;
    if d >= 0.0 {
        return f64::NEG_INFINITY;
    }
    if d > -LN_2 {
        a + (-d.exp_m1()).ln()
    } else {
        a + (-d.exp()).ln_1p()
    }
}

/// `ln(Phi(b) - Phi(a))` without cancellation in either tail.
pub fn log_interval_prob(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if b <= 0.0 {
        log_sub_exp(log_std_cdf(b), log_std_cdf(a))
    } else if a >= 0.0 {
        log_interval_prob(-b, -a)
    } else {
        (-(std_cdf(a) + std_cdf(-b))).ln_1p()
    }
}

pub fn interval_prob(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return 0.0;
    }
    if b <= 0.0 {
        std_cdf(b) - std_cdf(a)
    } else if a >= 0.0 {
        std_cdf(-a) - std_cdf(-b)
    } else {
        1.0 - std_cdf(a) - std_cdf(-b)
    }
}

/// Mean and variance of `N(0, 1)` truncated to `[a, b]`, stable deep in either tail.
pub fn truncated_std_moments(a: f64, b: f64) -> (f64, f64) {
    if a > 0.0 {
        let (m, v) = truncated_std_moments(-b, -a);
        return (-m, v);
    }
    let lz = log_interval_prob(a, b);
    if lz == f64::NEG_INFINITY {
        // zero-width or lost interval: collapse onto the midpoint of what is left
        let x = if a.is_finite() { a } else { b };
        return (x, 0.0);
    }
    let ra = if a.is_finite() { (log_std_pdf(a) - lz).exp() } else { 0.0 };
    let rb = if b.is_finite() { (log_std_pdf(b) - lz).exp() } else { 0.0 };
    let mean = ra - rb;
    let ta = if a.is_finite() { a * ra } else { 0.0 };
    let tb = if b.is_finite() { b * rb } else { 0.0 };
    let mut var = 1.0 + ta - tb - mean * mean;
    let width = b - a;
    if width.is_finite() && width < 1e-3 {
        // narrow interval: the moment formula cancels, the density is almost flat
        var = width * width / 12.0;
    }
    (mean.clamp(a, b), var.max(0.0))
}

/// Inverse-cdf draw of `N(0, 1)` truncated to `[a, b]` from a uniform `u`.
pub fn sample_truncated_std(a: f64, b: f64, u: f64) -> f64 {
    if a > 0.0 {
        return -sample_truncated_std(-b, -a, 1.0 - u);
    }
    let la = log_std_cdf(a);
    let lb = log_std_cdf(b);
    let target = if la == f64::NEG_INFINITY {
        u.ln() + lb
    } else {
        log_add_exp(la + (-u).ln_1p(), lb + u.ln())
    };
    std_quantile_log(target).clamp(a, b)
}
