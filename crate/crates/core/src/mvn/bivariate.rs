//! Bivariate normal upper-orthant and rectangle probabilities.
//!
//! `bvnu` follows Genz's double-precision refinement of the
//! Drezner-Wesolowsky method. Rectangles that carry very little mass are
//! recomputed by a one-dimensional conditional integral in log space, so the
//! result keeps its relative accuracy where the four-corner difference would
//! cancel.
#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

use super::univariate::{interval_prob, log_interval_prob, sample_truncated_std, std_cdf};
use crate::quad;

// Gauss-Legendre (weight, abscissa) pairs on [-1, 1], half rules.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];
const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// Rectangle probabilities below this are recomputed in log space.
const SMALL_RECT: f64 = 1e-5;
/// `|rho|` above this is treated as a perfect linear relation.
const RHO_ONE: f64 = 1.0 - 1e-14;

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
pub fn bvnu(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return std_cdf(-k);
    }
    if k == f64::NEG_INFINITY {
        return std_cdf(-h);
    }
    if r.abs() >= RHO_ONE {
        return if r > 0.0 {
            std_cdf(-h.max(k))
        } else {
            (std_cdf(-h) - std_cdf(k)).max(0.0)
        };
    }
    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut hk = h * k;
    if r.abs() < 0.925 {
        let mut bvn = 0.0;
        if r != 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = 0.5 * r.asin();
            for &(w, x) in rule {
                for sgn in [-1.0, 1.0] {
                    let sn = (asr * (sgn * x + 1.0)).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * PI);
        }
        return bvn + std_cdf(-h) * std_cdf(-k);
    }
    // |r| >= 0.925: integrate in the variable sqrt(1 - r^2) with the
    // singular part removed analytically; negative r via Y -> -Y
    let kk = if r < 0.0 {
        hk = -hk;
        -k
    } else {
        k
    };
    let a_s = (1.0 - r) * (1.0 + r);
    let mut a = a_s.sqrt();
    let b_s = (h - kk) * (h - kk);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    let mut bvn = 0.0;
    let asr = -0.5 * (b_s / a_s + hk);
    if asr > -100.0 {
        bvn = a * asr.exp() * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
    }
    if -hk < 100.0 {
        let b = (h - kk).abs();
        bvn -= (-0.5 * hk).exp() * (2.0 * PI).sqrt() * std_cdf(-b / a) * b * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
    }
    a *= 0.5;
    for &(w, x) in rule {
        for sgn in [-1.0, 1.0] {
            let xs = (a * (sgn * x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let asr = -0.5 * (b_s / xs + hk);
            if asr > -100.0 {
                bvn += a * w * asr.exp() * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    bvn /= -2.0 * PI;
    if r > 0.0 {
        bvn + std_cdf(-h.max(kk))
    } else {
        (std_cdf(-h) - std_cdf(k)).max(0.0) - bvn
    }
}

/// `(P, ln P)` for the standardized rectangle `[a, b]` with correlation `r`.
pub fn bvn_rect(a: [f64; 2], b: [f64; 2], r: f64) -> (f64, f64) {
    if !(a[0] < b[0] && a[1] < b[1]) {
        return (0.0, f64::NEG_INFINITY);
    }
    if r == 0.0 {
        let l = log_interval_prob(a[0], b[0]) + log_interval_prob(a[1], b[1]);
        return (interval_prob(a[0], b[0]) * interval_prob(a[1], b[1]), l);
    }
    if r.abs() >= RHO_ONE {
        let (lo, hi) = if r > 0.0 {
            (a[0].max(a[1]), b[0].min(b[1]))
        } else {
            (a[0].max(-b[1]), b[0].min(-a[1]))
        };
        return (interval_prob(lo, hi), log_interval_prob(lo, hi));
    }
    let direct = bvnu(a[0], a[1], r) - bvnu(a[0], b[1], r) - bvnu(b[0], a[1], r) + bvnu(b[0], b[1], r);
    if direct >= SMALL_RECT {
        return (direct.min(1.0), direct.min(1.0).ln());
    }
    let l = log_rect_by_quadrature(a, b, r).unwrap_or_else(|| direct.max(0.0).ln());
    (l.exp(), l)
}

/// `ln P` via `P = Z_x ∫_0^1 g(x(u)) du` with `x(u)` the truncated-normal
/// quantile along the coordinate of smaller marginal mass.
fn log_rect_by_quadrature(a: [f64; 2], b: [f64; 2], r: f64) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    if log_interval_prob(a[1], b[1]) < log_interval_prob(a[0], b[0]) {
        a.swap(0, 1);
        b.swap(0, 1);
    }
    if a[0] > 0.0 {
        // reflect both coordinates; the correlation is unchanged
        let (na, nb) = ([-b[0], -b[1]], [-a[0], -a[1]]);
        a = na;
        b = nb;
    }
    let s = ((1.0 - r) * (1.0 + r)).sqrt();
    let log_z = log_interval_prob(a[0], b[0]);
    if log_z == f64::NEG_INFINITY {
        return Some(f64::NEG_INFINITY);
    }
    let log_g = |u: f64| {
        let x = sample_truncated_std(a[0], b[0], u);
        log_interval_prob((a[1] - r * x) / s, (b[1] - r * x) / s)
    };
    let shift = (1..64)
        .map(|i| log_g(i as f64 / 64.0))
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return None;
    }
    let res = quad::integrate(|u| (log_g(u) - shift).exp(), 0.0, 1.0, 1e-300, 1e-13).ok()?;
    if !(res.value > 0.0) {
        return None;
    }
    Some(log_z + shift + res.value.ln())
}
